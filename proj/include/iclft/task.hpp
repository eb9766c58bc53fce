#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace iclft {

struct ClassDef {
  std::string name;
  std::string definition;

  bool operator==(const ClassDef&) const = default;
};

enum class MetricKind { macro_f1, micro_f1 };
enum class Split { train, validation, eval };

std::string_view to_string(MetricKind m);
std::string_view to_string(Split s);
MetricKind parse_metric(std::string_view s);
Split parse_split(std::string_view s);

/// A classification task: ordered label space plus the prompt text around it.
struct TaskSpec {
  std::string task_id;
  std::vector<ClassDef> label_space;
  bool multi_label = false;
  std::string instruction;
  std::string guidelines;
  MetricKind metric = MetricKind::macro_f1;

  std::size_t num_classes() const noexcept { return label_space.size(); }
  std::vector<std::string> class_names() const;
  /// Index of `name` in the label space, or nullopt.
  std::optional<std::size_t> class_index(std::string_view name) const;

  bool operator==(const TaskSpec&) const = default;
};

/// Throws ValidationError when an invariant of TaskSpec is broken.
void validate(const TaskSpec& task);

struct Example {
  std::string id;
  std::string text;
  std::vector<std::string> labels;  // gold class names, label-space order
  std::optional<std::string> audio_ref;
  nlohmann::json extra = nlohmann::json::object();  // unknown record fields, carried through

  bool operator==(const Example&) const = default;
};

struct Corpus {
  std::string task_id;
  Split split = Split::train;
  std::vector<Example> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool operator==(const Corpus&) const = default;
};

/// Validates one example against `task` and canonicalizes its label order.
Example validate_example(Example ex, const TaskSpec& task);

TaskSpec task_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& task);
TaskSpec load_task_spec(const std::filesystem::path& path);
void save_task_spec(const TaskSpec& task, const std::filesystem::path& path);

struct CorpusLoadOptions {
  /// Opt-in dataset-size check (e.g. 3553 for the Voxceleb eval split).
  std::optional<std::size_t> expected_count;
};

Corpus read_corpus(std::istream& in, const TaskSpec& task, Split split,
                   const CorpusLoadOptions& opts = {});
Corpus load_corpus(const std::filesystem::path& path, const TaskSpec& task, Split split,
                   const CorpusLoadOptions& opts = {});
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Published split sizes, for use with CorpusLoadOptions::expected_count.
namespace slue_sizes {
inline constexpr std::size_t voxceleb_train = 5777;
inline constexpr std::size_t voxceleb_validation = 1454;
inline constexpr std::size_t voxceleb_eval = 3553;
inline constexpr std::size_t hvb_train = 11344;
inline constexpr std::size_t hvb_validation = 1690;
inline constexpr std::size_t hvb_eval = 6121;
inline constexpr std::size_t voxpopuli_validation = 1753;
inline constexpr std::size_t voxpopuli_eval = 1843;
}  // namespace slue_sizes

// ---------------------------------------------------------------------------
// Synthetic definition-dependent tasks
// ---------------------------------------------------------------------------

/// A generated task together with its corpora and the trigger tokens that
/// each class definition names.
struct SyntheticTask {
  TaskSpec task;
  Corpus train;
  Corpus eval;
  std::vector<std::vector<std::string>> triggers;  // per class, label-space order

  bool operator==(const SyntheticTask&) const = default;
};

struct SyntheticOptions {
  std::size_t triggers_per_class = 2;
  std::size_t fillers_per_example = 4;
  /// Eval examples per class; 0 means max(1, examples_per_class / 2).
  std::size_t eval_per_class = 0;
};

/// Builds a task whose classes are defined by disjoint trigger-token sets.
/// Every example contains exactly the triggers of its gold class plus filler
/// tokens, so the label is recoverable only by reading the definitions.
SyntheticTask make_synthetic_task(std::uint64_t seed, std::size_t n_classes,
                                  std::size_t examples_per_class, std::size_t vocab_size,
                                  const SyntheticOptions& opts = {});

/// Derives the mismatched evaluation task: same class names and definition
/// texts, with definitions moved between classes by a seeded derangement, and
/// fresh corpora drawn under the moved definitions.
SyntheticTask make_shuffled_task(const SyntheticTask& base, std::uint64_t seed,
                                 std::size_t examples_per_class, std::size_t vocab_size,
                                 const SyntheticOptions& opts = {});

/// Reference decoder: picks the class whose definition shares the most word
/// tokens with the text. Recovers every synthetic gold label.
std::string decode_by_definition(const TaskSpec& task, std::string_view input);

}  // namespace iclft
