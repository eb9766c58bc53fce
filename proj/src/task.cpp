#include "iclft/task.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

using nlohmann::json;

std::string_view to_string(MetricKind m) {
  return m == MetricKind::macro_f1 ? "macro_f1" : "micro_f1";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::eval: return "eval";
  }
  return "train";
}

MetricKind parse_metric(std::string_view s) {
  if (s == "macro_f1") return MetricKind::macro_f1;
  if (s == "micro_f1") return MetricKind::micro_f1;
  throw ParseError("unknown metric '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "eval") return Split::eval;
  throw ParseError("unknown split '" + std::string(s) + "'");
}

std::vector<std::string> TaskSpec::class_names() const {
  std::vector<std::string> out;
  out.reserve(label_space.size());
  for (const auto& c : label_space) out.push_back(c.name);
  return out;
}

std::optional<std::size_t> TaskSpec::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < label_space.size(); ++i) {
    if (label_space[i].name == name) return i;
  }
  return std::nullopt;
}

void validate(const TaskSpec& task) {
  if (task.task_id.empty()) throw ValidationError("task_id is empty");
  if (task.label_space.empty()) throw ValidationError(task.task_id + ": empty label space");
  if (task.label_space.size() < 2) {
    throw ValidationError(task.task_id + ": label space needs at least 2 classes");
  }
  std::set<std::string> seen;
  for (const auto& c : task.label_space) {
    if (c.name.empty()) throw ValidationError(task.task_id + ": empty class name");
    for (char ch : c.name) {
      if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',' || ch == ';') {
        throw ValidationError(task.task_id + ": class name '" + c.name +
                              "' contains whitespace or a list separator");
      }
    }
    if (text::trim_punct(c.name) != c.name) {
      throw ValidationError(task.task_id + ": class name '" + c.name +
                            "' must start and end with a word character");
    }
    if (c.definition.empty() || text::trim_space(c.definition).empty()) {
      throw ValidationError(task.task_id + ": class '" + c.name + "' has an empty definition");
    }
    if (!seen.insert(text::to_lower(c.name)).second) {
      throw ValidationError(task.task_id + ": duplicate class name '" + c.name + "'");
    }
  }
}

Example validate_example(Example ex, const TaskSpec& task) {
  if (ex.id.empty()) throw ValidationError("example with empty id");
  if (ex.labels.empty()) throw ValidationError(ex.id + ": no gold labels");
  std::vector<std::size_t> idx;
  for (const auto& l : ex.labels) {
    auto i = task.class_index(l);
    if (!i) {
      throw ValidationError(ex.id + ": label '" + l + "' not in label space of " + task.task_id);
    }
    if (std::find(idx.begin(), idx.end(), *i) != idx.end()) {
      throw ValidationError(ex.id + ": duplicate label '" + l + "'");
    }
    idx.push_back(*i);
  }
  if (!task.multi_label && idx.size() != 1) {
    throw ValidationError(ex.id + ": multiple labels under single-label task " + task.task_id);
  }
  std::sort(idx.begin(), idx.end());
  ex.labels.clear();
  for (auto i : idx) ex.labels.push_back(task.label_space[i].name);
  return ex;
}

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

TaskSpec task_spec_from_json(const json& j) {
  TaskSpec t;
  t.task_id = required<std::string>(j, "task_id", "task spec");
  const std::string where = "task spec " + t.task_id;
  t.multi_label = required<bool>(j, "multi_label", where);
  t.metric = parse_metric(required<std::string>(j, "metric", where));
  t.instruction = required<std::string>(j, "instruction", where);
  t.guidelines = required<std::string>(j, "guidelines", where);
  const auto& ls = j.contains("label_space") ? j.at("label_space") : json();
  if (!ls.is_array()) throw ParseError(where + ": label_space must be an array");
  for (const auto& c : ls) {
    t.label_space.push_back({required<std::string>(c, "name", where),
                             required<std::string>(c, "definition", where)});
  }
  validate(t);
  return t;
}

json to_json(const TaskSpec& task) {
  json ls = json::array();
  for (const auto& c : task.label_space) {
    ls.push_back({{"name", c.name}, {"definition", c.definition}});
  }
  return {{"task_id", task.task_id},
          {"multi_label", task.multi_label},
          {"metric", std::string(to_string(task.metric))},
          {"instruction", task.instruction},
          {"guidelines", task.guidelines},
          {"label_space", ls}};
}

TaskSpec load_task_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open task spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return task_spec_from_json(j);
}

void save_task_spec(const TaskSpec& task, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(task).dump(2) << '\n';
}

Corpus read_corpus(std::istream& in, const TaskSpec& task, Split split,
                   const CorpusLoadOptions& opts) {
  Corpus corpus{task.task_id, split, {}};
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim_space(line).empty()) continue;
    const std::string where = "corpus line " + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ParseError(where + ": record is not an object");
    Example ex;
    ex.id = required<std::string>(rec, "id", where);
    ex.text = required<std::string>(rec, "text", where);
    ex.labels = required<std::vector<std::string>>(rec, "labels", where);
    if (rec.contains("audio_path") && !rec.at("audio_path").is_null()) {
      ex.audio_ref = required<std::string>(rec, "audio_path", where);
    }
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      if (it.key() != "id" && it.key() != "text" && it.key() != "labels" &&
          it.key() != "audio_path") {
        ex.extra[it.key()] = it.value();
      }
    }
    ex = validate_example(std::move(ex), task);
    if (!ids.insert(ex.id).second) throw ValidationError(where + ": duplicate id '" + ex.id + "'");
    corpus.examples.push_back(std::move(ex));
  }
  if (opts.expected_count && *opts.expected_count != corpus.size()) {
    throw ValidationError("expected " + std::to_string(*opts.expected_count) +
                          " examples, found " + std::to_string(corpus.size()));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const TaskSpec& task, Split split,
                   const CorpusLoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  return read_corpus(in, task, split, opts);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& ex : corpus.examples) {
    json rec = ex.extra.is_object() ? ex.extra : json::object();
    rec["id"] = ex.id;
    rec["text"] = ex.text;
    rec["labels"] = ex.labels;
    if (ex.audio_ref) rec["audio_path"] = *ex.audio_ref;
    out << rec.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_corpus(out, corpus);
}

}  // namespace iclft
