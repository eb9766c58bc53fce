#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iclft/metrics.hpp"
#include "iclft/task.hpp"
#include "iclft/toymodel.hpp"

namespace iclft::testing {

inline TaskSpec sentiment_task() {
  TaskSpec t;
  t.task_id = "sentiment";
  t.instruction = "Classify the sentiment of the speaker.";
  t.guidelines = "Answer with one class name.";
  t.label_space = {{"positive", "any hint of happiness or praise"},
                   {"negative", "any hint of criticism or sadness"},
                   {"neutral", "no clear emotion either way"}};
  return t;
}

inline const std::vector<std::string>& dialog_act_names() {
  static const std::vector<std::string> names = {
      "acknowledge",      "answer_agree",   "answer_dis",     "answer_general", "apology",
      "backchannel",      "disfluency",     "other",          "question_check", "question_general",
      "question_repeat",  "self",           "statement_close", "statement_general", "statement_instruct",
      "statement_open",   "statement_problem", "thanks"};
  return names;
}

inline TaskSpec dialog_act_task() {
  TaskSpec t;
  t.task_id = "dialog_acts";
  t.multi_label = true;
  t.instruction = "Identify all applicable dialogue actions.";
  t.guidelines = "List every matching class name.";
  for (const auto& n : dialog_act_names()) t.label_space.push_back({n, "utterance acting as " + n});
  return t;
}

inline Example make_example(std::string id, std::string text, std::vector<std::string> labels) {
  Example e;
  e.id = std::move(id);
  e.text = std::move(text);
  e.labels = std::move(labels);
  return e;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("iclft_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ---------------------------------------------------------------------------
// Brute-force F1: walks every (example, class) pair.
// ---------------------------------------------------------------------------

struct BruteF1 {
  double macro;
  double micro;
};

inline BruteF1 brute_force_f1(const std::vector<LabelSet>& golds, const std::vector<LabelSet>& preds,
                              const std::vector<std::string>& classes) {
  double macro_sum = 0.0;
  long tp_all = 0, fp_all = 0, fn_all = 0;
  for (const auto& c : classes) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const bool in_gold = golds[i].find(c) != golds[i].end();
      const bool in_pred = preds[i].find(c) != preds[i].end();
      if (in_gold && in_pred) ++tp;
      if (!in_gold && in_pred) ++fp;
      if (in_gold && !in_pred) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    macro_sum += p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  const long denom = 2 * tp_all + fp_all + fn_all;
  return {macro_sum / double(classes.size()), denom == 0 ? 0.0 : 2.0 * double(tp_all) / double(denom)};
}

// ---------------------------------------------------------------------------
// Central finite differences against the analytic gradient.
// ---------------------------------------------------------------------------

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t coords = 0;
};

/// Checks `n_coords` random coordinates of every trainable tensor. B factors
/// are randomized so the adapter path carries gradient into A.
inline GradCheck finite_difference_check(std::uint64_t seed, toy::TrainableSet trainable, bool multi_label,
                                         std::size_t n_coords = 50, double eps = 1e-5) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const int d = 6, vocab = 15, classes = 4;
  auto model = toy::init_model(d, vocab, classes, classes, seed);
  toy::LoraConfig lc;
  lc.rank = 3;
  lc.alpha = 6.0;
  lc.targets = {toy::LoraTarget::query, toy::LoraTarget::key, toy::LoraTarget::value, toy::LoraTarget::output};
  auto adapters = toy::attach_adapters(model, lc, seed ^ 0x5a5a);
  for (auto& a : adapters) {
    for (Eigen::Index i = 0; i < a.b.size(); ++i) a.b.data()[i] = u(gen);
  }

  std::vector<toy::Sample> batch;
  for (int s = 0; s < 2; ++s) {
    toy::Sample smp;
    const int len = 5 + s * 3;
    for (int i = 0; i < len; ++i) {
      smp.input.tokens.push_back(static_cast<int>(gen() % vocab));
      smp.input.slots.push_back(static_cast<int>(gen() % (classes + 1)));
    }
    smp.n_classes = classes - s;  // second sample uses a smaller label space
    smp.multi_label = multi_label;
    smp.target_slots = {static_cast<int>(gen() % smp.n_classes)};
    if (multi_label) smp.target_slots.push_back((smp.target_slots[0] + 1) % smp.n_classes);
    std::sort(smp.target_slots.begin(), smp.target_slots.end());
    batch.push_back(std::move(smp));
  }

  auto objective = [&] {
    double total = 0.0;
    for (const auto& smp : batch) {
      const auto logits = toy::forward(model, adapters, smp.input.tokens, smp.input.slots);
      total += toy::loss(logits, smp.target_slots, smp.n_classes, smp.multi_label);
    }
    return total / double(batch.size());
  };

  const auto [value, g] = toy::grad(model, adapters, batch, trainable);
  (void)value;
  auto params = toy::tensor_refs(model, adapters);
  const auto grads = toy::tensor_refs(g.model, g.adapters);

  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const bool trainable_tensor = trainable == toy::TrainableSet::full || params[t].adapter;
    for (std::size_t c = 0; c < n_coords; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(params[t].size()));
      const double analytic = grads[t].data[i];
      if (!trainable_tensor) {
        out.max_rel_err = std::max(out.max_rel_err, std::abs(analytic) == 0.0 ? 0.0 : 1.0);
        continue;
      }
      const double keep = params[t].data[i];
      params[t].data[i] = keep + eps;
      const double up = objective();
      params[t].data[i] = keep - eps;
      const double down = objective();
      params[t].data[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      out.max_rel_err = std::max(out.max_rel_err, std::abs(numeric - analytic) / denom);
      ++out.coords;
    }
  }
  return out;
}

}  // namespace iclft::testing
