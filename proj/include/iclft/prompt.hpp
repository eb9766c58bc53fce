#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iclft/labelmap.hpp"
#include "iclft/retrieval.hpp"
#include "iclft/task.hpp"

namespace iclft {

enum class SegmentKind { instruction, class_definitions, guidelines, demonstration, speech_query, target };

std::string_view to_string(SegmentKind k);

struct Segment {
  SegmentKind kind;
  std::string text;

  bool operator==(const Segment&) const = default;
};

/// A task as the model sees it: the task spec rendered under one mapping.
struct TaskView {
  TaskSpec task;
  LabelMapping mapping;
};

/// Validates the mapping against the task.
TaskView make_view(const TaskSpec& task, LabelMapping mapping);

/// Ordered prompt segments: instruction, class definitions, guidelines, one
/// demonstration per shot, the speech query, and the target when present.
struct PromptBundle {
  std::vector<Segment> segments;
  std::string mapping_ref;
  int shot_count = 0;
  std::optional<std::vector<std::string>> target;  // display labels
  std::string query_id;

  bool operator==(const PromptBundle&) const = default;
};

/// Throws ValidationError if segment kinds are out of order or counts are
/// inconsistent with shot_count / target.
void check_structure(const PromptBundle& bundle);

/// Demonstrations must carry the same mapping_ref as `view`.
PromptBundle assemble(const TaskView& view, const std::vector<Demonstration>& demos,
                      const Example& query, bool include_target);

/// Text of one segment as it appears in the rendered prompt.
std::string render_segment(const Segment& segment);

/// Canonical prompt text: rendered segments joined by blank lines, the query
/// wrapped in <Speech>...</Speech>.
std::string render(const PromptBundle& bundle);

/// Token vocabulary with reserved ids 0..3.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSpeechOpen = 2;
  static constexpr int kSpeechClose = 3;
  static constexpr int kNumReserved = 4;

  Vocab();
  /// `tokens` receive ids kNumReserved, kNumReserved + 1, ... in order.
  explicit Vocab(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  /// FNV-1a over the ordered token list.
  std::uint64_t hash() const;

  /// Two columns, tab separated: token, id. Reserved entries included.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Vocabulary over every token that can appear in prompts built from
/// `views` and `corpora`; ordered by frequency desc, then lexicographically.
Vocab build_vocab(const std::vector<const Corpus*>& corpora, const std::vector<TaskView>& views);

std::vector<int> tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

/// Model input: token ids plus, per token, the 1-based class-definition slot
/// it belongs to (0 outside the class definitions). The target is excluded.
struct EncodedPrompt {
  std::vector<int> tokens;
  std::vector<int> slots;
};

EncodedPrompt encode(const PromptBundle& bundle, const Vocab& vocab);

}  // namespace iclft
