// Command-line front end: data ingestion, training, sweeps, matrices, reports
// and self-checks.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "iclft/config.hpp"
#include "iclft/error.hpp"
#include "iclft/harness.hpp"
#include "iclft/rng.hpp"

namespace fs = std::filesystem;
using namespace iclft;

namespace {

const ExperimentConfig& pick(const MatrixConfig& cfg, const std::string& name, bool need_ft) {
  for (const auto& e : cfg.experiments) {
    if ((name.empty() || e.name == name) && (!need_ft || e.ft_task_id)) return e;
  }
  throw ConfigError(name.empty() ? std::string("config has no suitable experiment")
                                 : "no suitable experiment named '" + name + "'");
}

int cmd_ingest(const fs::path& task_path, const fs::path& corpus_path, const std::string& split,
               std::optional<std::size_t> expect) {
  const auto task = load_task_spec(task_path);
  CorpusLoadOptions opts;
  opts.expected_count = expect;
  const auto corpus = load_corpus(corpus_path, task, parse_split(split), opts);
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus.examples) {
    for (const auto& l : ex.labels) ++counts[l];
  }
  std::cout << "task " << task.task_id << " split " << split << ": " << corpus.examples.size() << " examples\n";
  for (const auto& name : task.class_names()) std::cout << "  " << name << "\t" << counts[name] << '\n';
  return 0;
}

int cmd_train(const fs::path& config_path, std::uint64_t seed, const std::string& name, fs::path out) {
  const auto cfg = load_matrix_config(config_path);
  const auto& exp = pick(cfg, name, true);
  const auto registry = resolve_tasks(cfg);
  const auto vocab = registry_vocab(registry);
  auto base = make_backend(exp, registry, vocab, seed);
  auto run = run_finetune(exp, registry, *base, seed);
  fs::create_directories(out);
  const std::string stem = config_hash(exp).substr(0, 8) + "_" + std::to_string(seed);
  std::ofstream sched(out / ("schedule_" + stem + ".jsonl"));
  write_schedule(sched, run.schedule);
  std::ofstream trace(out / ("trace_" + stem + ".csv"));
  toy::write_loss_trace(trace, run.trace);
  const auto* toyb = dynamic_cast<const ToyBackend*>(run.backend.get());
  if (!toyb) throw ConfigError("train: only the toy backend produces checkpoints");
  const fs::path ckpt = out / ("ckpt_" + stem + ".bin");
  toy::save_checkpoint(ckpt, toyb->checkpoint());
  std::cout << "checkpoint " << ckpt.string() << '\n'
            << "schedule_hash " << schedule_hash(run.schedule) << '\n'
            << "final_loss " << (run.trace.empty() ? 0.0 : run.trace.back().loss) << '\n';
  return 0;
}

int cmd_sweep(const fs::path& config_path, const fs::path& ckpt_path, std::uint64_t seed, const std::string& name,
              const std::optional<fs::path>& runs) {
  const auto cfg = load_matrix_config(config_path);
  const auto registry = resolve_tasks(cfg);
  const auto vocab = registry_vocab(registry);
  std::vector<RunRecord> records;
  for (const auto& exp : cfg.experiments) {
    if (!name.empty() && exp.name != name) continue;
    auto ckpt = toy::load_checkpoint(ckpt_path);
    const auto backend = ToyBackend::from_checkpoint(vocab, std::move(ckpt), exp.model.trainable);
    RunRecord rec;
    rec.name = exp.name;
    rec.eval_task = exp.eval_task_id;
    rec.ft_task = exp.ft_task_id;
    rec.strategy = exp.strategy;
    rec.seed = seed;
    rec.config_hash = config_hash(exp);
    rec.checkpoint = ckpt_path.string();
    rec.scores = run_eval_sweep(exp, registry, backend).scores();
    if (runs) persist_run(*runs, rec);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ConfigError("sweep: no matching experiment");
  std::cout << report(table_from_records(records), ReportFormat::markdown);
  return 0;
}

int cmd_matrix(const fs::path& config_path, std::optional<fs::path> out, unsigned threads) {
  const auto cfg = load_matrix_config(config_path);
  if (!out) out = cfg.output_dir;
  const auto registry = resolve_tasks(cfg);
  MatrixOptions opts;
  opts.output_dir = out;
  opts.threads = threads;
  opts.record_timestamps = cfg.record_timestamps;
  const auto result = run_matrix(cfg.experiments, registry, opts);
  std::cout << report(result.table, ReportFormat::markdown);
  int failed = 0;
  for (const auto& r : result.records) {
    if (!r.error.empty()) {
      std::cerr << "cell " << r.name << " seed " << r.seed << " failed: " << r.error << '\n';
      ++failed;
    }
  }
  return failed == 0 ? 0 : static_cast<int>(ExitCode::training);
}

int cmd_report(const fs::path& runs, const std::string& format) {
  std::vector<std::string> warnings;
  const auto records = load_run(runs, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (records.empty()) throw ValidationError("no run records in " + runs.string());
  std::cout << report(table_from_records(records), parse_report_format(format));
  return 0;
}

nlohmann::json synth_matrix(const std::string& a, const std::string& b) {
  using nlohmann::json;
  json experiments = json::array();
  for (const auto& eval : {a, b}) {
    const std::string tag = eval == a ? "matched" : "mismatched";
    experiments.push_back({{"name", tag + "_noft"}, {"eval_task", eval}, {"strategy", "none"}});
    for (const char* s : {"regular", "symbol", "random_label"}) {
      experiments.push_back({{"name", tag + "_" + s}, {"ft_task", a}, {"eval_task", eval}, {"strategy", s}});
    }
  }
  return json{{"tasks",
               {{{"spec", a + ".json"}, {"train", a + "_train.jsonl"}, {"eval", a + "_eval.jsonl"}},
                {{"spec", b + ".json"}, {"train", b + "_train.jsonl"}, {"eval", b + "_eval.jsonl"}}}},
              {"defaults", {{"seeds", {1, 2, 3, 4, 5}}}},
              {"experiments", experiments},
              {"output_dir", "runs"}};
}

int cmd_synth(std::uint64_t seed, std::size_t classes, const fs::path& out, std::size_t epc, std::size_t vocab) {
  const auto a = make_synthetic_task(seed, classes, epc, vocab);
  const auto b = make_shuffled_task(a, seed, epc, vocab);
  fs::create_directories(out);
  for (const auto* t : {&a, &b}) {
    const auto& id = t->task.task_id;
    save_task_spec(t->task, out / (id + ".json"));
    save_corpus(t->train, out / (id + "_train.jsonl"));
    save_corpus(t->eval, out / (id + "_eval.jsonl"));
  }
  std::ofstream m(out / "matrix.json");
  m << synth_matrix(a.task.task_id, b.task.task_id).dump(2) << '\n';
  std::cout << "wrote " << a.task.task_id << " and " << b.task.task_id << " to " << out.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Self-checks
// ---------------------------------------------------------------------------

double fd_gradient_check(std::uint64_t seed, toy::TrainableSet trainable) {
  Rng rng(seed);
  const int d = 6, vocab = 12, classes = 3;
  auto model = toy::init_model(d, vocab, classes, classes, seed);
  toy::LoraConfig lc;
  lc.rank = 2;
  lc.targets = {toy::LoraTarget::query, toy::LoraTarget::key, toy::LoraTarget::value, toy::LoraTarget::output};
  auto adapters = toy::attach_adapters(model, lc, seed + 1);
  for (auto& a : adapters) {
    for (Eigen::Index i = 0; i < a.b.size(); ++i) a.b.data()[i] = rng.uniform(-0.5, 0.5);
  }
  toy::Sample s;
  for (int i = 0; i < 7; ++i) {
    s.input.tokens.push_back(static_cast<int>(rng.uniform_index(vocab)));
    s.input.slots.push_back(static_cast<int>(rng.uniform_index(classes + 1)));
  }
  s.target_slots = {static_cast<int>(rng.uniform_index(classes))};
  s.n_classes = classes;
  auto [l, g] = toy::grad(model, adapters, {s}, trainable);
  auto f = [&] {
    return toy::loss(toy::forward(model, adapters, s.input.tokens, s.input.slots), s.target_slots, classes, false);
  };
  auto params = toy::tensor_refs(model, adapters);
  auto grads = toy::tensor_refs(g.model, g.adapters);
  double worst = 0.0;
  const double eps = 1e-5;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (trainable == toy::TrainableSet::adapters_only && !params[t].adapter) continue;
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      const double keep = params[t].data[i];
      params[t].data[i] = keep + eps;
      const double up = f();
      params[t].data[i] = keep - eps;
      const double dn = f();
      params[t].data[i] = keep;
      const double num = (up - dn) / (2 * eps);
      const double ana = grads[t].data[i];
      worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
    }
  }
  return worst;
}

double metric_oracle_check(std::uint64_t seed) {
  Rng rng(seed);
  TaskSpec task;
  task.task_id = "check";
  task.multi_label = true;
  for (const char* n : {"a", "b", "c", "d"}) task.label_space.push_back({n, "class " + std::string(n)});
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.uniform_index(12);
    std::vector<LabelSet> golds(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& c : task.label_space) {
        if (rng.uniform01() < 0.4) golds[i].insert(c.name);
        if (rng.uniform01() < 0.4) preds[i].insert(c.name);
      }
      if (golds[i].empty()) golds[i].insert("a");
    }
    double macro = 0.0, tp_all = 0, fp_all = 0, fn_all = 0;
    for (const auto& c : task.label_space) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool g = golds[i].count(c.name), p = preds[i].count(c.name);
        tp += g && p;
        fp += !g && p;
        fn += g && !p;
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0, rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      macro += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      tp_all += tp, fp_all += fp, fn_all += fn;
    }
    macro /= static_cast<double>(task.label_space.size());
    const double micro = 2 * tp_all + fp_all + fn_all > 0 ? 2 * tp_all / (2 * tp_all + fp_all + fn_all) : 0.0;
    worst = std::max(worst, std::abs(macro_f1(golds, preds, task).aggregate - macro));
    worst = std::max(worst, std::abs(micro_f1(golds, preds, task).aggregate - micro));
  }
  return worst;
}

double oracle_backend_check() {
  TaskRegistry reg;
  add_synthetic(reg, SyntheticSource{3, 3, 10, 32, false});
  ExperimentConfig cfg;
  cfg.eval_task_id = reg.begin()->first;
  cfg.backend = "oracle";
  const auto backend = make_backend(cfg, reg, Vocab{}, 1);
  double worst = 1.0;
  for (auto v : run_eval_sweep(cfg, reg, *backend).scores()) worst = std::min(worst, v.value_or(0.0));
  return worst;
}

int cmd_check() {
  bool ok = true;
  auto line = [&](const std::string& what, bool pass, double value) {
    std::cout << (pass ? "PASS " : "FAIL ") << what << " (" << value << ")\n";
    ok = ok && pass;
  };
  double worst_full = 0.0, worst_adapters = 0.0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    worst_full = std::max(worst_full, fd_gradient_check(s, toy::TrainableSet::full));
    worst_adapters = std::max(worst_adapters, fd_gradient_check(s, toy::TrainableSet::adapters_only));
  }
  line("gradient full max rel err < 1e-4", worst_full < 1e-4, worst_full);
  line("gradient adapters_only max rel err < 1e-4", worst_adapters < 1e-4, worst_adapters);
  const double metric = metric_oracle_check(11);
  line("metrics match brute-force counts within 1e-12", metric <= 1e-12, metric);
  const double oracle = oracle_backend_check();
  line("oracle backend scores 1.0 at every shot count", oracle == 1.0, oracle);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context-learning fine-tuning toolkit"};
  app.require_subcommand(1);

  std::string task_path, corpus_path, split, config_path, ckpt_path, runs_path, format = "markdown", name;
  std::string out_dir, train_out;
  std::optional<std::size_t> expect;
  std::uint64_t seed = 1;
  std::size_t classes = 3, epc = 40, vocab_size = 64;
  unsigned threads = 0;

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus against a task spec");
  ingest->add_option("--task", task_path, "Task spec JSON")->required();
  ingest->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  ingest->add_option("--split", split, "train, validation or eval")->required();
  ingest->add_option("--expect-count", expect, "Required number of examples");

  auto* train = app.add_subcommand("train", "Fine-tune one experiment and write a checkpoint");
  train->add_option("--config", config_path)->required();
  train->add_option("--seed", seed)->required();
  train->add_option("--experiment", name, "Experiment name (default: first with a fine-tuning task)");
  train->add_option("--out", train_out, "Output directory")->default_val("train_out");

  auto* sweep = app.add_subcommand("sweep", "Evaluate a checkpoint at 0..5 shots");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--checkpoint", ckpt_path)->required();
  sweep->add_option("--seed", seed, "Seed recorded in the run log");
  sweep->add_option("--experiment", name, "Only this experiment");
  sweep->add_option("--runs", runs_path, "Append records to this run log");

  auto* matrix = app.add_subcommand("matrix", "Run every experiment for every seed");
  matrix->add_option("--config", config_path)->required();
  matrix->add_option("--out", out_dir, "Output directory (overrides the config)");
  matrix->add_option("--threads", threads, "Concurrent cells (0: all cores)");

  auto* rep = app.add_subcommand("report", "Render a run log as a table");
  rep->add_option("--runs", runs_path)->required();
  rep->add_option("--format", format)->check(CLI::IsMember({"markdown", "csv"}));

  auto* synth = app.add_subcommand("synth", "Generate a synthetic task pair and a matrix config");
  synth->add_option("--seed", seed)->required();
  synth->add_option("--classes", classes)->required();
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--examples-per-class", epc)->default_val(40);
  synth->add_option("--vocab-size", vocab_size)->default_val(64);

  auto* check = app.add_subcommand("check", "Gradient, metric and oracle self-tests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*ingest) return cmd_ingest(task_path, corpus_path, split, expect);
    if (*train) return cmd_train(config_path, seed, name, train_out);
    if (*sweep) {
      return cmd_sweep(config_path, ckpt_path, seed, name,
                       runs_path.empty() ? std::nullopt : std::optional<fs::path>(runs_path));
    }
    if (*matrix) {
      return cmd_matrix(config_path, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir), threads);
    }
    if (*rep) return cmd_report(runs_path, format);
    if (*synth) return cmd_synth(seed, classes, out_dir, epc, vocab_size);
    if (*check) return cmd_check();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
