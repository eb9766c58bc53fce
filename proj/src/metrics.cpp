#include "iclft/metrics.hpp"

#include <cstdio>

#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

LabelSet parse_prediction(std::string_view raw, const TaskSpec& task, const LabelMapping& mapping) {
  LabelSet out;
  for (const auto& piece : text::split(text::to_lower(raw), ",;\n")) {
    for (const auto& tok : text::split(piece, " \t\r")) {
      const auto word = text::trim_punct(tok);
      if (word.empty()) continue;
      auto gold = gold_for_display(mapping, word);
      if (!gold) continue;
      out.insert(*gold);
      if (!task.multi_label) return out;
    }
  }
  return out;
}

namespace {

void check_inputs(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                  const TaskSpec& task) {
  if (golds.size() != preds.size()) {
    throw ValidationError("score: " + std::to_string(golds.size()) + " golds vs " +
                          std::to_string(preds.size()) + " predictions");
  }
  if (golds.empty()) throw ValidationError("score: empty input");
  for (const auto& g : golds) {
    if (g.empty()) throw ValidationError("score: empty gold label set");
    for (const auto& l : g)
      if (!task.class_index(l)) throw ValidationError("score: unknown gold label '" + l + "'");
  }
  for (const auto& p : preds) {
    for (const auto& l : p)
      if (!task.class_index(l)) throw ValidationError("score: unknown predicted label '" + l + "'");
  }
}

std::vector<ClassScore> count(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                              const TaskSpec& task) {
  std::vector<ClassScore> per_class;
  for (const auto& c : task.label_space) {
    ClassScore s;
    s.name = c.name;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const bool in_gold = golds[i].count(c.name) > 0;
      const bool in_pred = preds[i].count(c.name) > 0;
      s.tp += in_gold && in_pred;
      s.fp += !in_gold && in_pred;
      s.fn += in_gold && !in_pred;
    }
    const double tp = static_cast<double>(s.tp);
    s.precision = s.tp + s.fp ? tp / static_cast<double>(s.tp + s.fp) : 0.0;
    s.recall = s.tp + s.fn ? tp / static_cast<double>(s.tp + s.fn) : 0.0;
    // 2PR/(P+R) reduced to counts: one rounding instead of four.
    const std::size_t denom = 2 * s.tp + s.fp + s.fn;
    s.f1 = s.tp ? 2.0 * tp / static_cast<double>(denom) : 0.0;
    per_class.push_back(s);
  }
  return per_class;
}

}  // namespace

ScoreReport macro_f1(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                     const TaskSpec& task) {
  check_inputs(golds, preds, task);
  ScoreReport r{count(golds, preds, task), 0.0, MetricKind::macro_f1};
  // Extended-precision sum so the mean rounds once, e.g. exactly to 7/9.
  long double sum = 0.0L;
  for (const auto& c : r.per_class) {
    if (c.tp) sum += 2.0L * static_cast<long double>(c.tp) / static_cast<long double>(2 * c.tp + c.fp + c.fn);
  }
  r.aggregate = static_cast<double>(sum / static_cast<long double>(r.per_class.size()));
  return r;
}

ScoreReport micro_f1(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                     const TaskSpec& task) {
  check_inputs(golds, preds, task);
  ScoreReport r{count(golds, preds, task), 0.0, MetricKind::micro_f1};
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : r.per_class) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  r.aggregate = denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
  return r;
}

ScoreReport score(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                  const TaskSpec& task) {
  return task.metric == MetricKind::macro_f1 ? macro_f1(golds, preds, task)
                                             : micro_f1(golds, preds, task);
}

nlohmann::json to_json(const ScoreReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    per.push_back({{"class", c.name},
                   {"precision", c.precision},
                   {"recall", c.recall},
                   {"f1", c.f1},
                   {"tp", c.tp},
                   {"fp", c.fp},
                   {"fn", c.fn}});
  }
  return {{"metric", std::string(to_string(report.metric))},
          {"aggregate", report.aggregate},
          {"per_class", per}};
}

std::string csv_header(const ScoreReport& report) {
  std::string h = "task,strategy,shots,aggregate";
  for (const auto& c : report.per_class) h += ",f1_" + c.name;
  return h;
}

std::string csv_row(const ScoreReport& report, std::string_view task_id, std::string_view strategy,
                    int shots) {
  char buf[32];
  std::string row = std::string(task_id) + "," + std::string(strategy) + "," + std::to_string(shots);
  std::snprintf(buf, sizeof buf, ",%.6f", report.aggregate);
  row += buf;
  for (const auto& c : report.per_class) {
    std::snprintf(buf, sizeof buf, ",%.6f", c.f1);
    row += buf;
  }
  return row;
}

}  // namespace iclft
