#include "iclft/config.hpp"

#include <fstream>

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

using nlohmann::json;

void validate(const ExperimentConfig& cfg) {
  const bool no_ft = cfg.strategy == Strategy::none;
  if (no_ft != !cfg.ft_task_id.has_value()) {
    throw ConfigError("experiment '" + cfg.name + "': strategy none iff no ft_task");
  }
  if (cfg.eval_task_id.empty()) throw ConfigError("experiment '" + cfg.name + "': missing eval_task");
  if (cfg.shots.empty()) throw ConfigError("experiment '" + cfg.name + "': empty shot list");
  for (int k : cfg.shots) {
    if (k < 0 || k > kMaxShots) throw ConfigError("shot count " + std::to_string(k) + " outside 0..5");
  }
  if (cfg.seeds.empty()) throw ConfigError("experiment '" + cfg.name + "': no seeds");
  if (cfg.model.d < 2) throw ConfigError("model.d must be >= 2");
  if (cfg.optim.epochs < 1) throw ConfigError("optim.epochs must be >= 1");
  if (cfg.backend != "toy" && cfg.backend != "oracle" && cfg.backend.rfind("constant:", 0) != 0) {
    throw ConfigError("unknown backend '" + cfg.backend + "'");
  }
}

json to_json(const ExperimentConfig& cfg) {
  json targets = json::array();
  for (auto t : cfg.model.lora.targets) targets.push_back(std::string(toy::to_string(t)));
  return {
      {"name", cfg.name},
      {"ft_task", cfg.ft_task_id ? json(*cfg.ft_task_id) : json(nullptr)},
      {"eval_task", cfg.eval_task_id},
      {"strategy", std::string(to_string(cfg.strategy))},
      {"pool", {{"size", cfg.pool.size}, {"include_identity", cfg.pool.include_identity}, {"seed", cfg.pool.seed}}},
      {"shots", cfg.shots},
      {"seeds", cfg.seeds},
      {"optim",
       {{"base_lr", cfg.optim.base_lr},
        {"warmup_steps", cfg.optim.warmup_steps},
        {"total_steps", cfg.optim.total_steps},
        {"clip_norm", cfg.optim.clip_norm},
        {"accumulation", cfg.optim.accumulation},
        {"epochs", cfg.optim.epochs},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"adam_eps", cfg.optim.adam_eps}}},
      {"model",
       {{"d", cfg.model.d},
        {"trainable", std::string(toy::to_string(cfg.model.trainable))},
        {"embed_dim", cfg.model.embed_dim},
        {"lora",
         {{"rank", cfg.model.lora.rank},
          {"alpha", cfg.model.lora.alpha},
          {"dropout", cfg.model.lora.dropout},
          {"targets", targets}}}}},
      {"backend", cfg.backend},
  };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment must be a JSON object");
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("ft_task") && !j.at("ft_task").is_null()) c.ft_task_id = j.at("ft_task").get<std::string>();
  read(j, "eval_task", c.eval_task_id);
  if (j.contains("strategy")) {
    try {
      c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("pool")) {
    const auto& p = j.at("pool");
    read(p, "size", c.pool.size);
    read(p, "include_identity", c.pool.include_identity);
    read(p, "seed", c.pool.seed);
  }
  read(j, "shots", c.shots);
  read(j, "seeds", c.seeds);
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    read(o, "base_lr", c.optim.base_lr);
    read(o, "warmup_steps", c.optim.warmup_steps);
    read(o, "total_steps", c.optim.total_steps);
    read(o, "clip_norm", c.optim.clip_norm);
    read(o, "accumulation", c.optim.accumulation);
    read(o, "epochs", c.optim.epochs);
    read(o, "beta1", c.optim.beta1);
    read(o, "beta2", c.optim.beta2);
    read(o, "adam_eps", c.optim.adam_eps);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    read(m, "d", c.model.d);
    read(m, "embed_dim", c.model.embed_dim);
    try {
      if (m.contains("trainable")) c.model.trainable = toy::parse_trainable_set(m.at("trainable").get<std::string>());
      if (m.contains("lora")) {
        const auto& l = m.at("lora");
        read(l, "rank", c.model.lora.rank);
        read(l, "alpha", c.model.lora.alpha);
        read(l, "dropout", c.model.lora.dropout);
        if (l.contains("targets")) {
          c.model.lora.targets.clear();
          for (const auto& t : l.at("targets")) c.model.lora.targets.push_back(toy::parse_lora_target(t.get<std::string>()));
        }
      }
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "backend", c.backend);
  validate(c);
  return c;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("seeds");
  return text::hex64(text::fnv1a(j.dump()));
}

MatrixConfig matrix_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  MatrixConfig cfg;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (j.contains("tasks")) {
    for (const auto& t : j.at("tasks")) {
      TaskSource src;
      if (!t.contains("spec")) throw ConfigError("task entry without 'spec'");
      src.spec = resolve(t.at("spec").get<std::string>());
      if (t.contains("train")) src.train = resolve(t.at("train").get<std::string>());
      if (t.contains("validation")) src.validation = resolve(t.at("validation").get<std::string>());
      if (t.contains("eval")) src.eval = resolve(t.at("eval").get<std::string>());
      cfg.tasks.push_back(std::move(src));
    }
  }
  if (j.contains("synthetic")) {
    SyntheticSource s;
    const auto& sj = j.at("synthetic");
    read(sj, "seed", s.seed);
    read(sj, "classes", s.classes);
    read(sj, "examples_per_class", s.examples_per_class);
    read(sj, "vocab_size", s.vocab_size);
    read(sj, "shuffled", s.shuffled);
    cfg.synthetic = s;
  }
  if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
  read(j, "record_timestamps", cfg.record_timestamps);

  json defaults = j;
  for (const char* k : {"tasks", "synthetic", "experiments", "defaults", "output_dir", "record_timestamps"}) {
    defaults.erase(k);
  }
  if (j.contains("defaults")) defaults.merge_patch(j.at("defaults"));
  if (j.contains("experiments")) {
    for (const auto& e : j.at("experiments")) {
      json merged = defaults;
      merged.merge_patch(e);
      cfg.experiments.push_back(experiment_from_json(merged));
    }
  } else if (defaults.contains("eval_task")) {
    cfg.experiments.push_back(experiment_from_json(defaults));
  }
  return cfg;
}

MatrixConfig load_matrix_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return matrix_config_from_json(j, path.parent_path());
}

void add_synthetic(TaskRegistry& registry, const SyntheticSource& src) {
  auto a = make_synthetic_task(src.seed, src.classes, src.examples_per_class, src.vocab_size);
  if (src.shuffled) {
    auto b = make_shuffled_task(a, src.seed, src.examples_per_class, src.vocab_size);
    registry[b.task.task_id] = TaskData{b.task, b.train, Corpus{b.task.task_id, Split::validation, {}}, b.eval};
  }
  registry[a.task.task_id] = TaskData{a.task, a.train, Corpus{a.task.task_id, Split::validation, {}}, a.eval};
}

TaskRegistry resolve_tasks(const MatrixConfig& cfg) {
  TaskRegistry reg;
  for (const auto& src : cfg.tasks) {
    TaskData data;
    data.task = load_task_spec(src.spec);
    const auto& t = data.task;
    data.train = src.train ? load_corpus(*src.train, t, Split::train) : Corpus{t.task_id, Split::train, {}};
    data.validation = src.validation ? load_corpus(*src.validation, t, Split::validation)
                                     : Corpus{t.task_id, Split::validation, {}};
    data.eval = src.eval ? load_corpus(*src.eval, t, Split::eval) : Corpus{t.task_id, Split::eval, {}};
    if (reg.count(t.task_id)) throw ConfigError("task '" + t.task_id + "' registered twice");
    reg.emplace(t.task_id, std::move(data));
  }
  if (cfg.synthetic) add_synthetic(reg, *cfg.synthetic);
  return reg;
}

}  // namespace iclft
