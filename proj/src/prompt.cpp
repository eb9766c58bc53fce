#include "iclft/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::instruction: return "instruction";
    case SegmentKind::class_definitions: return "class_definitions";
    case SegmentKind::guidelines: return "guidelines";
    case SegmentKind::demonstration: return "demonstration";
    case SegmentKind::speech_query: return "speech_query";
    case SegmentKind::target: return "target";
  }
  return "instruction";
}

TaskView make_view(const TaskSpec& task, LabelMapping mapping) {
  validate(mapping, task);
  return TaskView{task, std::move(mapping)};
}

void check_structure(const PromptBundle& b) {
  if (b.shot_count < 0 || b.shot_count > kMaxShots) {
    throw ValidationError("shot_count out of range: " + std::to_string(b.shot_count));
  }
  std::vector<SegmentKind> expected = {SegmentKind::instruction, SegmentKind::class_definitions,
                                       SegmentKind::guidelines};
  for (int i = 0; i < b.shot_count; ++i) expected.push_back(SegmentKind::demonstration);
  expected.push_back(SegmentKind::speech_query);
  if (b.target) expected.push_back(SegmentKind::target);
  if (b.segments.size() != expected.size()) {
    throw ValidationError("prompt has " + std::to_string(b.segments.size()) + " segments, expected " +
                          std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (b.segments[i].kind != expected[i]) {
      throw ValidationError("segment " + std::to_string(i) + " is " +
                            std::string(to_string(b.segments[i].kind)) + ", expected " +
                            std::string(to_string(expected[i])));
    }
  }
}

PromptBundle assemble(const TaskView& view, const std::vector<Demonstration>& demos,
                      const Example& query, bool include_target) {
  if (demos.size() > static_cast<std::size_t>(kMaxShots)) {
    throw ValidationError("at most " + std::to_string(kMaxShots) + " demonstrations per prompt");
  }
  PromptBundle b;
  b.mapping_ref = view.mapping.fingerprint();
  b.shot_count = static_cast<int>(demos.size());
  b.query_id = query.id;

  b.segments.push_back({SegmentKind::instruction, text::strip_speech_markers(view.task.instruction)});
  std::vector<std::string> lines;
  for (const auto& e : view.mapping.entries) {
    std::string def = text::strip_speech_markers(e.definition);
    std::replace(def.begin(), def.end(), '\n', ' ');  // one line per slot
    lines.push_back(e.display_name + ": " + def);
  }
  b.segments.push_back({SegmentKind::class_definitions, text::join(lines, "\n")});
  b.segments.push_back({SegmentKind::guidelines, text::strip_speech_markers(view.task.guidelines)});
  for (const auto& d : demos) {
    if (d.mapping_ref != b.mapping_ref) {
      throw ValidationError("demonstration " + d.example_id +
                            " was packaged under a different label mapping");
    }
    if (d.display_labels.empty()) {
      throw ValidationError("demonstration " + d.example_id + " has no labels");
    }
    b.segments.push_back({SegmentKind::demonstration,
                          "Input: " + text::strip_speech_markers(d.text) +
                              "\nLabels: " + text::join(d.display_labels, ", ")});
  }
  b.segments.push_back({SegmentKind::speech_query, text::strip_speech_markers(query.text)});
  if (include_target) {
    auto labels = remap_labels(view.mapping, query.labels);
    if (labels.empty()) throw ValidationError("query " + query.id + " has no gold labels");
    b.segments.push_back({SegmentKind::target, text::join(labels, ", ")});
    b.target = std::move(labels);
  }
  check_structure(b);
  return b;
}

std::string render_segment(const Segment& s) {
  switch (s.kind) {
    case SegmentKind::instruction: return "Task Instruction: " + s.text;
    case SegmentKind::class_definitions: return "Class Definitions:\n" + s.text;
    case SegmentKind::guidelines: return "General Guidelines: " + s.text;
    case SegmentKind::demonstration: return s.text;
    case SegmentKind::speech_query:
      return "Input: " + std::string(text::kSpeechOpen) + s.text + std::string(text::kSpeechClose);
    case SegmentKind::target: return "Labels: " + s.text;
  }
  return s.text;
}

std::string render(const PromptBundle& bundle) {
  std::string out;
  for (std::size_t i = 0; i < bundle.segments.size(); ++i) {
    if (i) out += "\n\n";
    out += render_segment(bundle.segments[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<unk>", std::string(text::kSpeechOpen),
                                                  std::string(text::kSpeechClose)};
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) {
  tokens_ = kReservedTokens;
  for (auto& t : tokens) {
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), t) != kReservedTokens.end()) {
      throw ValidationError("token '" + t + "' is reserved");
    }
    tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::uint64_t Vocab::hash() const {
  std::uint64_t h = text::fnv1a("");
  for (const auto& t : tokens_) {
    h = text::fnv1a(t, h);
    h = text::fnv1a(std::string_view("\0", 1), h);
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("vocab line without a tab: " + line);
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("bad vocab id in line: " + line);
    }
    if (id != expected++) throw ParseError("vocab ids must be dense and ordered");
    std::string tok = line.substr(0, tab);
    if (id < kNumReserved) {
      if (tok != kReservedTokens[id]) throw ParseError("unexpected reserved token " + tok);
      continue;
    }
    tokens.push_back(std::move(tok));
  }
  if (expected < kNumReserved) throw ParseError("vocab file is missing reserved entries");
  return Vocab(std::move(tokens));
}

Vocab build_vocab(const std::vector<const Corpus*>& corpora, const std::vector<TaskView>& views) {
  if (corpora.empty() && views.empty()) throw ValidationError("build_vocab: no input");
  std::map<std::string, std::size_t> counts;
  auto add = [&](std::string_view s) {
    for (auto& t : text::prompt_tokens(s)) {
      if (t == text::kSpeechOpen || t == text::kSpeechClose) continue;
      ++counts[t];
    }
  };
  for (const auto& v : views) {
    Example probe{"", "", {}, std::nullopt, {}};
    add(render(assemble(v, {}, probe, false)));
    add("Input: Labels: ,");
  }
  for (const auto* c : corpora) {
    for (const auto& ex : c->examples) add(ex.text);
  }
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(items.size());
  for (auto& [t, n] : items) tokens.push_back(t);
  return Vocab(std::move(tokens));
}

std::vector<int> tokenize(std::string_view s, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& t : text::prompt_tokens(s)) {
    if (t == text::kSpeechOpen) {
      ids.push_back(Vocab::kSpeechOpen);
    } else if (t == text::kSpeechClose) {
      ids.push_back(Vocab::kSpeechClose);
    } else {
      ids.push_back(vocab.id(t));
    }
  }
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> parts;
  parts.reserve(ids.size());
  for (int id : ids) parts.push_back(vocab.token(id));
  return text::join(parts, " ");
}

EncodedPrompt encode(const PromptBundle& bundle, const Vocab& vocab) {
  EncodedPrompt out;
  auto append = [&](std::string_view s, int slot) {
    for (int id : tokenize(s, vocab)) {
      out.tokens.push_back(id);
      out.slots.push_back(slot);
    }
  };
  for (const auto& seg : bundle.segments) {
    if (seg.kind == SegmentKind::target) continue;
    if (seg.kind == SegmentKind::class_definitions) {
      append("Class Definitions:", 0);
      const auto lines = text::split(seg.text, "\n");
      for (std::size_t i = 0; i < lines.size(); ++i) append(lines[i], static_cast<int>(i) + 1);
    } else {
      append(render_segment(seg), 0);
    }
  }
  return out;
}

}  // namespace iclft
