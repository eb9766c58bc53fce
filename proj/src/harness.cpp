#include "iclft/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "iclft/error.hpp"
#include "iclft/rng.hpp"
#include "iclft/text.hpp"

namespace iclft {

using nlohmann::json;

namespace {

// Seed streams of one cell.
constexpr std::uint64_t kStreamOrder = 1;
constexpr std::uint64_t kStreamShots = 2;
constexpr std::uint64_t kStreamMapping = 3;
constexpr std::uint64_t kStreamPool = 4;
constexpr std::uint64_t kStreamInit = 0x10;
constexpr std::uint64_t kStreamAdapters = 0x11;
constexpr std::uint64_t kStreamTrain = 0x12;

const TaskData& lookup(const TaskRegistry& registry, const std::string& id) {
  auto it = registry.find(id);
  if (it == registry.end()) throw ConfigError("unknown task '" + id + "'");
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

Vocab registry_vocab(const TaskRegistry& registry) {
  std::vector<const Corpus*> corpora;
  std::vector<TaskView> views;
  for (const auto& [id, data] : registry) {
    corpora.push_back(&data.train);
    corpora.push_back(&data.validation);
    corpora.push_back(&data.eval);
    views.push_back(make_view(data.task, identity_mapping(data.task)));
    try {
      views.push_back(make_view(data.task, symbol_mapping(data.task)));
    } catch (const ValidationError&) {
      // Label space too large for the symbol set or clashing with a symbol.
    }
  }
  return build_vocab(corpora, views);
}

std::size_t registry_max_classes(const TaskRegistry& registry) {
  std::size_t n = 0;
  for (const auto& [id, data] : registry) n = std::max(n, data.task.num_classes());
  return n;
}

std::unique_ptr<ModelBackend> make_backend(const ExperimentConfig& cfg, const TaskRegistry& registry,
                                           const Vocab& vocab, std::uint64_t seed) {
  if (cfg.backend == "toy") {
    const int n = static_cast<int>(registry_max_classes(registry));
    auto model = toy::init_model(cfg.model.d, static_cast<int>(vocab.size()), n, n, derive_seed(seed, kStreamInit));
    auto adapters = toy::attach_adapters(model, cfg.model.lora, derive_seed(seed, kStreamAdapters));
    return std::make_unique<ToyBackend>(vocab, std::move(model), std::move(adapters), cfg.model.trainable, seed);
  }
  if (cfg.backend == "oracle") {
    std::vector<const Corpus*> corpora;
    for (const auto& [id, data] : registry) {
      corpora.push_back(&data.train);
      corpora.push_back(&data.validation);
      corpora.push_back(&data.eval);
    }
    return std::make_unique<OracleBackend>(OracleBackend::from_corpora(corpora));
  }
  if (cfg.backend.rfind("constant:", 0) == 0) {
    return std::make_unique<ConstantBackend>(cfg.backend.substr(9));
  }
  throw ConfigError("unknown backend '" + cfg.backend + "'");
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

json to_json(const ScheduleEntry& e) {
  return {{"epoch", e.epoch},
          {"step", e.step},
          {"example_id", e.example_id},
          {"shots", e.shots},
          {"mapping_index", e.mapping_index ? json(*e.mapping_index) : json(nullptr)},
          {"mapping_ref", e.mapping_ref},
          {"demo_ids", e.demo_ids}};
}

void write_schedule(std::ostream& out, const std::vector<ScheduleEntry>& schedule) {
  for (const auto& e : schedule) out << to_json(e).dump() << '\n';
}

std::string schedule_hash(const std::vector<ScheduleEntry>& schedule) {
  std::ostringstream s;
  write_schedule(s, schedule);
  return text::hex64(text::fnv1a(s.str()));
}

MappingPool make_pool(const TaskSpec& task, const PoolSettings& settings, std::uint64_t run_seed) {
  const std::uint64_t seed = settings.seed != 0 ? settings.seed : derive_seed(run_seed, kStreamPool);
  const std::size_t n = task.num_classes();
  if (settings.size == 0) {
    if (n <= kMaxEnumerableClasses) return enumerate_permutation_pool(task, settings.include_identity);
    return sample_permutation_pool(task, kDefaultSampledPool, seed, settings.include_identity);
  }
  if (n <= kMaxEnumerableClasses && settings.size == max_pool_size(n, settings.include_identity)) {
    return enumerate_permutation_pool(task, settings.include_identity);
  }
  return sample_permutation_pool(task, settings.size, seed, settings.include_identity);
}

FinetuneRun run_finetune(const ExperimentConfig& cfg, const TaskRegistry& registry, const ModelBackend& base,
                         std::uint64_t seed) {
  validate(cfg);
  if (!cfg.ft_task_id) throw ConfigError("run_finetune: experiment '" + cfg.name + "' has no fine-tuning task");
  if (!base.can_finetune()) throw ConfigError("backend '" + base.name() + "' cannot be fine-tuned");
  const TaskData& data = lookup(registry, *cfg.ft_task_id);
  if (data.train.examples.empty()) throw ConfigError("task '" + *cfg.ft_task_id + "' has no training corpus");

  FinetuneRun run;
  std::vector<std::shared_ptr<const TaskView>> views;
  switch (cfg.strategy) {
    case Strategy::regular:
      views.push_back(std::make_shared<TaskView>(make_view(data.task, identity_mapping(data.task))));
      break;
    case Strategy::symbol:
      views.push_back(std::make_shared<TaskView>(make_view(data.task, symbol_mapping(data.task))));
      break;
    case Strategy::random_label:
      run.pool = make_pool(data.task, cfg.pool, seed);
      for (const auto& m : run.pool->mappings) views.push_back(std::make_shared<TaskView>(make_view(data.task, m)));
      break;
    case Strategy::none:
      throw ConfigError("run_finetune: strategy none");
  }

  // Demonstrations come from the other training examples.
  const auto retriever = make_tfidf_retriever({&data.train}, cfg.model.embed_dim);
  const auto& examples = data.train.examples;
  std::vector<std::vector<RetrievalHit>> hits(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) hits[i] = retriever.retrieve(examples[i], kMaxShots);

  Rng order_rng(derive_seed(seed, kStreamOrder));
  Rng shot_rng(derive_seed(seed, kStreamShots));
  Rng map_rng(derive_seed(seed, kStreamMapping));
  std::vector<std::size_t> order(examples.size());
  int step = 0;
  for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t idx : order) {
      const int k = sample_shot_count(shot_rng);
      std::optional<std::size_t> mapping_index;
      std::size_t v = 0;
      if (cfg.strategy == Strategy::random_label) {
        v = draw_index(*run.pool, map_rng);
        mapping_index = v;
      }
      const auto& view = views[v];
      const std::vector<RetrievalHit> chosen(hits[idx].begin(),
                                             hits[idx].begin() + std::min<std::size_t>(k, hits[idx].size()));
      auto demos = package(chosen, view->mapping);
      PromptBundle bundle = assemble(*view, demos, examples[idx], true);

      ScheduleEntry e;
      e.epoch = epoch;
      e.step = step++;
      e.example_id = examples[idx].id;
      e.shots = bundle.shot_count;
      e.mapping_index = mapping_index;
      e.mapping_ref = bundle.mapping_ref;
      for (const auto& d : demos) e.demo_ids.push_back(d.example_id);
      run.schedule.push_back(std::move(e));
      run.items.push_back(TrainingItem{view, std::move(bundle)});
    }
  }

  auto out = base.finetune(run.items, cfg.optim, derive_seed(seed, kStreamTrain));
  run.backend = std::move(out.backend);
  run.trace = std::move(out.trace);
  return run;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

ShotScores SweepResult::scores() const {
  ShotScores s;
  for (std::size_t i = 0; i < shots.size(); ++i) s.at(static_cast<std::size_t>(shots[i])) = reports[i].aggregate;
  return s;
}

SweepResult run_eval_sweep(const ExperimentConfig& cfg, const TaskRegistry& registry, const ModelBackend& backend,
                           const PromptObserver& observer) {
  validate(cfg);
  const TaskData& data = lookup(registry, cfg.eval_task_id);
  if (data.eval.examples.empty()) throw ConfigError("task '" + cfg.eval_task_id + "' has no eval corpus");
  const int max_k = *std::max_element(cfg.shots.begin(), cfg.shots.end());
  if (max_k > 0 && data.train.examples.empty() && data.validation.examples.empty()) {
    throw ConfigError("task '" + cfg.eval_task_id + "' has no train or validation corpus for demonstrations");
  }

  const TaskView view = make_view(data.task, identity_mapping(data.task));
  const std::string identity_ref = view.mapping.fingerprint();
  std::optional<Retriever> retriever;
  if (max_k > 0) retriever.emplace(make_tfidf_retriever({&data.train, &data.validation}, cfg.model.embed_dim));

  const auto& examples = data.eval.examples;
  std::vector<std::vector<RetrievalHit>> hits(examples.size());
  if (retriever) {
    for (std::size_t i = 0; i < examples.size(); ++i) {
      hits[i] = retriever->retrieve(examples[i], static_cast<std::size_t>(max_k));
    }
  }
  std::vector<LabelSet> golds;
  golds.reserve(examples.size());
  for (const auto& ex : examples) golds.emplace_back(ex.labels.begin(), ex.labels.end());

  SweepResult result;
  for (int k : cfg.shots) {
    std::vector<LabelSet> preds;
    preds.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const std::vector<RetrievalHit> chosen(hits[i].begin(),
                                             hits[i].begin() + std::min<std::size_t>(k, hits[i].size()));
      const PromptBundle bundle = assemble(view, package(chosen, view.mapping), examples[i], false);
      if (bundle.mapping_ref != identity_ref) throw ValidationError("eval prompt not under the identity mapping");
      if (observer) observer(view, bundle);
      preds.push_back(parse_prediction(backend.generate(view, bundle), data.task, view.mapping));
    }
    result.shots.push_back(k);
    result.reports.push_back(score(golds, preds, data.task));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalTable table_from_records(const std::vector<RunRecord>& records) {
  std::map<RowKey, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[RowKey{r.eval_task, r.ft_task.value_or(""), r.strategy}].push_back(&r);
  EvalTable table;
  for (const auto& [key, rs] : groups) {
    EvalRow row;
    row.key = key;
    for (std::size_t c = 0; c < kNumShotColumns; ++c) {
      std::vector<double> vals;
      for (const auto* r : rs) {
        if (r->scores[c]) vals.push_back(*r->scores[c]);
      }
      if (!vals.empty()) row.f1[c] = median(std::move(vals));
    }
    for (const auto* r : rs) {
      row.seeds.push_back(r->seed);
      if (std::find(row.config_hashes.begin(), row.config_hashes.end(), r->config_hash) == row.config_hashes.end()) {
        row.config_hashes.push_back(r->config_hash);
      }
    }
    std::sort(row.seeds.begin(), row.seeds.end());
    table.rows.push_back(std::move(row));
  }
  return table;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "—";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

std::vector<std::string> row_cells(const EvalRow& row) {
  std::vector<std::string> cells = {row.key.eval_task, row.key.ft_task.empty() ? "none" : row.key.ft_task,
                                    std::string(to_string(row.key.strategy))};
  for (const auto& v : row.f1) cells.push_back(cell(v));
  return cells;
}

}  // namespace

std::string report(const EvalTable& table, ReportFormat format) {
  std::vector<std::string> header = {"eval_task", "ft_task", "strategy"};
  for (std::size_t k = 0; k < kNumShotColumns; ++k) header.push_back("shots_" + std::to_string(k));
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << text::join(header, ",") << '\n';
    for (const auto& row : table.rows) out << text::join(row_cells(row), ",") << '\n';
    return out.str();
  }
  out << "| " << text::join(header, " | ") << " |\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i < 3 ? "---|" : "---:|");
  out << '\n';
  for (const auto& row : table.rows) out << "| " << text::join(row_cells(row), " | ") << " |\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

RunRecord run_cell(const ExperimentConfig& cfg, const TaskRegistry& registry, const Vocab& vocab, std::uint64_t seed,
                   const std::optional<std::filesystem::path>& output_dir, bool record_timestamps) {
  RunRecord rec;
  rec.name = cfg.name;
  rec.eval_task = cfg.eval_task_id;
  rec.ft_task = cfg.ft_task_id;
  rec.strategy = cfg.strategy;
  rec.seed = seed;
  rec.config_hash = config_hash(cfg);
  if (record_timestamps) {
    rec.timestamp = std::to_string(
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
  }
  const std::string stem = rec.config_hash.substr(0, 8) + "_" + std::to_string(seed);
  try {
    validate(cfg);
    auto backend = make_backend(cfg, registry, vocab, seed);
    std::unique_ptr<ModelBackend> tuned;
    if (cfg.strategy != Strategy::none) {
      auto run = run_finetune(cfg, registry, *backend, seed);
      rec.schedule_hash = schedule_hash(run.schedule);
      if (output_dir) {
        rec.schedule_path = "schedule_" + stem + ".jsonl";
        std::ofstream s(*output_dir / rec.schedule_path);
        write_schedule(s, run.schedule);
        std::ofstream t(*output_dir / ("trace_" + stem + ".csv"));
        toy::write_loss_trace(t, run.trace);
        if (const auto* toyb = dynamic_cast<const ToyBackend*>(run.backend.get())) {
          rec.checkpoint = "ckpt_" + stem + ".bin";
          toy::save_checkpoint(*output_dir / rec.checkpoint, toyb->checkpoint());
        }
      }
      tuned = std::move(run.backend);
    }
    const auto sweep = run_eval_sweep(cfg, registry, tuned ? *tuned : *backend);
    rec.scores = sweep.scores();
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.scores = {};
  }
  return rec;
}

MatrixResult run_matrix(const std::vector<ExperimentConfig>& experiments, const TaskRegistry& registry,
                        const MatrixOptions& options) {
  if (experiments.empty()) throw ConfigError("run_matrix: no experiments");
  if (options.output_dir) std::filesystem::create_directories(*options.output_dir);

  struct Cell {
    const ExperimentConfig* cfg;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& e : experiments) {
    for (auto s : e.seeds) cells.push_back({&e, s});
  }

  const Vocab vocab = registry_vocab(registry);
  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      records[i] = run_cell(*cells[i].cfg, registry, vocab, cells[i].seed, options.output_dir,
                            options.record_timestamps);
    }
  };
  unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells.size()));
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  MatrixResult result;
  result.records = std::move(records);
  result.table = table_from_records(result.records);
  if (options.output_dir) {
    std::ofstream runs(*options.output_dir / "runs.jsonl", std::ios::trunc);
    write_runs(runs, result.records);
    std::ofstream md(*options.output_dir / "report.md", std::ios::trunc);
    md << report(result.table, ReportFormat::markdown);
    std::ofstream csv(*options.output_dir / "report.csv", std::ios::trunc);
    csv << report(result.table, ReportFormat::csv);
  }
  return result;
}

}  // namespace iclft
