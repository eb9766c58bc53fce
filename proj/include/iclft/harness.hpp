#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclft/backend.hpp"
#include "iclft/config.hpp"
#include "iclft/metrics.hpp"

namespace iclft {

inline constexpr std::size_t kNumShotColumns = kMaxShots + 1;
using ShotScores = std::array<std::optional<double>, kNumShotColumns>;

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Vocabulary covering every corpus of the registry under the identity and
/// symbol views. Depends on the registry only, never on the experiments.
Vocab registry_vocab(const TaskRegistry& registry);

/// Largest label space in the registry; sizes the toy model's heads.
std::size_t registry_max_classes(const TaskRegistry& registry);

/// Untrained backend selected by cfg.backend. For "toy" the weights are a
/// function of `seed` and the shared vocabulary.
std::unique_ptr<ModelBackend> make_backend(const ExperimentConfig& cfg, const TaskRegistry& registry,
                                           const Vocab& vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

/// One fine-tuning example as fed to the backend.
struct ScheduleEntry {
  int epoch = 0;
  int step = 0;  // position in the sample stream
  std::string example_id;
  int shots = 0;
  std::optional<std::size_t> mapping_index;  // pool index, random_label only
  std::string mapping_ref;
  std::vector<std::string> demo_ids;

  bool operator==(const ScheduleEntry&) const = default;
};

nlohmann::json to_json(const ScheduleEntry& e);
void write_schedule(std::ostream& out, const std::vector<ScheduleEntry>& schedule);
std::string schedule_hash(const std::vector<ScheduleEntry>& schedule);

/// Permutation pool for random-label training under `settings`.
MappingPool make_pool(const TaskSpec& task, const PoolSettings& settings, std::uint64_t run_seed);

struct FinetuneRun {
  std::unique_ptr<ModelBackend> backend;
  std::vector<ScheduleEntry> schedule;
  std::vector<TrainingItem> items;
  std::vector<toy::TraceRow> trace;
  std::optional<MappingPool> pool;
};

/// Draws shots, demonstrations and mappings for every training example of
/// every epoch, then fine-tunes a copy of `base`. Deterministic in `seed`.
FinetuneRun run_finetune(const ExperimentConfig& cfg, const TaskRegistry& registry, const ModelBackend& base,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

using PromptObserver = std::function<void(const TaskView&, const PromptBundle&)>;

struct SweepResult {
  std::vector<int> shots;
  std::vector<ScoreReport> reports;  // parallel to shots

  ShotScores scores() const;
};

/// Scores `backend` on the eval split at each configured shot count, with
/// demonstrations retrieved from train and validation and the identity view.
SweepResult run_eval_sweep(const ExperimentConfig& cfg, const TaskRegistry& registry,
                           const ModelBackend& backend, const PromptObserver& observer = {});

// ---------------------------------------------------------------------------
// Run records and tables
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string name;
  std::string eval_task;
  std::optional<std::string> ft_task;
  Strategy strategy = Strategy::none;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string schedule_hash;
  std::string schedule_path;
  std::string checkpoint;
  ShotScores scores;
  std::string error;
  std::optional<std::string> timestamp;

  bool operator==(const RunRecord&) const = default;
};

nlohmann::json to_json(const RunRecord& r);
/// Throws ParseError on a malformed record.
RunRecord run_record_from_json(const nlohmann::json& j);

/// Appends one JSONL line.
void persist_run(const std::filesystem::path& path, const RunRecord& record);
void write_runs(std::ostream& out, const std::vector<RunRecord>& records);
/// Corrupt lines are skipped; a warning per skipped line goes to `warnings`
/// when given.
std::vector<RunRecord> read_runs(std::istream& in, std::vector<std::string>* warnings = nullptr);
std::vector<RunRecord> load_run(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

struct RowKey {
  std::string eval_task;
  std::string ft_task;  // empty without fine-tuning
  Strategy strategy = Strategy::none;

  auto operator<=>(const RowKey&) const = default;
};

struct EvalRow {
  RowKey key;
  ShotScores f1;  // median over seeds, each in [0, 1]
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> config_hashes;

  bool operator==(const EvalRow&) const = default;
};

/// Rows ordered by (eval task, ft task, strategy).
struct EvalTable {
  std::vector<EvalRow> rows;

  bool operator==(const EvalTable&) const = default;
};

/// Median across values; the two central values are averaged for even counts.
double median(std::vector<double> values);

EvalTable table_from_records(const std::vector<RunRecord>& records);

enum class ReportFormat { markdown, csv };
ReportFormat parse_report_format(std::string_view s);

/// Percentages with one decimal; a cell without a score renders as "—".
std::string report(const EvalTable& table, ReportFormat format);

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

struct MatrixOptions {
  std::optional<std::filesystem::path> output_dir;
  unsigned threads = 0;  // 0: hardware concurrency
  bool record_timestamps = false;
};

struct MatrixResult {
  std::vector<RunRecord> records;  // experiment order, then seed order
  EvalTable table;
};

/// Runs every experiment for every seed. A failing cell becomes a record with
/// an error and empty scores; the rest of the table is still produced. With an
/// output directory, writes runs.jsonl, report.md, report.csv and per-run
/// schedules, checkpoints and loss traces.
MatrixResult run_matrix(const std::vector<ExperimentConfig>& experiments, const TaskRegistry& registry,
                        const MatrixOptions& options = {});

/// Runs one (experiment, seed) cell; artifacts go to `output_dir` when set.
RunRecord run_cell(const ExperimentConfig& cfg, const TaskRegistry& registry, const Vocab& vocab,
                   std::uint64_t seed, const std::optional<std::filesystem::path>& output_dir,
                   bool record_timestamps = false);

}  // namespace iclft
