#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iclft/rng.hpp"
#include "iclft/task.hpp"

namespace iclft {

/// Fine-tuning strategy. `none` marks the untrained baseline and never
/// produces a mapping.
enum class Strategy { none, regular, symbol, random_label };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// One slot of a mapping: the name shown in the prompt, the definition shown
/// next to it, and the gold class that definition belongs to.
struct MappingEntry {
  std::string display_name;
  std::string definition;
  std::string gold_name;

  bool operator==(const MappingEntry&) const = default;
};

/// Bijection between displayed class names and definition texts for one
/// prompt. Slot i keeps the i-th class's display name and shows the
/// definition of gold class `permutation[i]`.
struct LabelMapping {
  std::string task_id;
  std::vector<MappingEntry> entries;
  Strategy strategy = Strategy::regular;
  std::optional<std::size_t> pool_index;
  std::vector<std::size_t> permutation;

  std::size_t size() const noexcept { return entries.size(); }
  std::vector<std::string> display_names() const;

  /// Stable identity string; two mappings with equal fingerprints render
  /// identical prompts.
  std::string fingerprint() const;

  bool operator==(const LabelMapping&) const = default;
};

/// Throws ValidationError unless `m` is a bijection over `task`'s classes.
void validate(const LabelMapping& m, const TaskSpec& task);

const std::vector<std::string>& default_symbols();

LabelMapping identity_mapping(const TaskSpec& task);
LabelMapping symbol_mapping(const TaskSpec& task,
                            const std::vector<std::string>& symbols = default_symbols());
/// Slot i shows the definition of class `perm[i]`.
LabelMapping permuted_mapping(const TaskSpec& task, const std::vector<std::size_t>& perm,
                              std::optional<std::size_t> pool_index = std::nullopt);

/// Display string the model must emit for `gold_label` under `m`.
const std::string& remap_label(const LabelMapping& m, std::string_view gold_label);
std::vector<std::string> remap_labels(const LabelMapping& m,
                                      const std::vector<std::string>& gold_labels);
/// Inverse of remap_label; nullopt for an unknown display name.
std::optional<std::string> gold_for_display(const LabelMapping& m, std::string_view display);
/// Slot index whose entry carries `gold_label`.
std::size_t slot_of_gold(const LabelMapping& m, std::string_view gold_label);

struct MappingPool {
  std::string task_id;
  std::uint64_t seed = 0;
  bool include_identity = true;
  std::vector<LabelMapping> mappings;

  std::size_t size() const noexcept { return mappings.size(); }
};

inline constexpr std::size_t kMaxEnumerableClasses = 6;

/// One mapping per permutation of definitions, in lexicographic order of the
/// permutation.
MappingPool enumerate_permutation_pool(const TaskSpec& task, bool include_identity = true);

/// `pool_size` distinct permutations by seeded rejection sampling of
/// Fisher-Yates shuffles.
MappingPool sample_permutation_pool(const TaskSpec& task, std::size_t pool_size,
                                    std::uint64_t seed, bool include_identity = true);

/// Largest pool the task admits; saturates at UINT64_MAX.
std::uint64_t max_pool_size(std::size_t n_classes, bool include_identity);

std::size_t draw_index(const MappingPool& pool, Rng& rng);
const LabelMapping& draw_for_batch(const MappingPool& pool, Rng& rng);

nlohmann::json to_json(const MappingPool& pool);
MappingPool pool_from_json(const nlohmann::json& j, const TaskSpec& task);

}  // namespace iclft
