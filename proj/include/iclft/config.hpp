#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclft/labelmap.hpp"
#include "iclft/retrieval.hpp"
#include "iclft/task.hpp"
#include "iclft/toymodel.hpp"

namespace iclft {

/// A task with every corpus the harness may need. Missing splits are empty.
struct TaskData {
  TaskSpec task;
  Corpus train;
  Corpus validation;
  Corpus eval;
};

using TaskRegistry = std::map<std::string, TaskData>;

struct PoolSettings {
  /// 0: every permutation when the label space is small enough to
  /// enumerate, otherwise kDefaultSampledPool sampled ones.
  std::size_t size = 0;
  bool include_identity = true;
  /// 0: derived from the run seed.
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultSampledPool = 10;

struct ModelSettings {
  int d = 32;
  toy::LoraConfig lora;
  toy::TrainableSet trainable = toy::TrainableSet::full;
  Eigen::Index embed_dim = kDefaultEmbeddingDim;
};

/// One cell of the experiment matrix (before seeds are expanded).
struct ExperimentConfig {
  std::string name;
  std::optional<std::string> ft_task_id;  // none iff strategy == none
  std::string eval_task_id;
  Strategy strategy = Strategy::none;
  PoolSettings pool;
  std::vector<int> shots = {0, 1, 2, 3, 4, 5};
  std::vector<std::uint64_t> seeds = {1};
  toy::OptimConfig optim;
  ModelSettings model;
  std::string backend = "toy";  // "toy", "oracle" or "constant:<answer>"
};

/// Throws ConfigError on a broken invariant.
void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults.
ExperimentConfig experiment_from_json(const nlohmann::json& j);

/// Hex FNV-1a over the canonical JSON of `cfg`, seeds excluded, so every seed
/// of one matrix cell shares the hash.
std::string config_hash(const ExperimentConfig& cfg);

struct TaskSource {
  std::filesystem::path spec;
  std::optional<std::filesystem::path> train, validation, eval;
};

struct SyntheticSource {
  std::uint64_t seed = 7;
  std::size_t classes = 3;
  std::size_t examples_per_class = 40;
  std::size_t vocab_size = 64;
  bool shuffled = true;  // also register the definition-shuffled twin
};

/// Contents of a config file: where tasks come from plus the experiments.
struct MatrixConfig {
  std::vector<TaskSource> tasks;
  std::optional<SyntheticSource> synthetic;
  std::vector<ExperimentConfig> experiments;
  std::optional<std::filesystem::path> output_dir;
  bool record_timestamps = false;
};

/// Experiments inherit top-level and "defaults" fields; without an
/// "experiments" array the document itself is the single experiment.
/// Relative paths resolve against `base_dir`.
MatrixConfig matrix_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
MatrixConfig load_matrix_config(const std::filesystem::path& path);

TaskRegistry resolve_tasks(const MatrixConfig& cfg);

/// Adds the synthetic task and, when requested, its shuffled twin.
void add_synthetic(TaskRegistry& registry, const SyntheticSource& src);

}  // namespace iclft
