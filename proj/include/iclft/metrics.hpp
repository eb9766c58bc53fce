#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iclft/labelmap.hpp"
#include "iclft/task.hpp"

namespace iclft {

/// Class names in the gold-name space of a task.
using LabelSet = std::set<std::string>;

/// Decodes free-text model output into gold labels: lowercase, split on
/// commas / newlines / semicolons, strip punctuation, match whole tokens
/// against the mapping's display names, then invert to gold names.
/// Single-label tasks keep the first recognized label.
LabelSet parse_prediction(std::string_view raw, const TaskSpec& task, const LabelMapping& mapping);

struct ClassScore {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct ScoreReport {
  std::vector<ClassScore> per_class;  // label-space order
  double aggregate = 0.0;
  MetricKind metric = MetricKind::macro_f1;
};

/// Unweighted mean of per-class F1 over the whole label space. A class that
/// never occurs in golds or preds contributes 0.
ScoreReport macro_f1(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                     const TaskSpec& task);

/// 2 TP / (2 TP + FP + FN) over counts pooled across classes; 0 when the
/// denominator is 0.
ScoreReport micro_f1(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                     const TaskSpec& task);

/// Dispatches on task.metric.
ScoreReport score(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                  const TaskSpec& task);

nlohmann::json to_json(const ScoreReport& report);
std::string csv_header(const ScoreReport& report);
std::string csv_row(const ScoreReport& report, std::string_view task_id, std::string_view strategy,
                    int shots);

}  // namespace iclft
