#include <gtest/gtest.h>

#include "helpers.hpp"
#include "iclft/error.hpp"
#include "iclft/labelmap.hpp"
#include "iclft/metrics.hpp"
#include "iclft/rng.hpp"

using namespace iclft;
using namespace iclft::testing;

namespace {

TaskSpec abcd_task(std::size_t n, bool multi) {
  TaskSpec t;
  t.task_id = "letters";
  t.multi_label = multi;
  t.metric = MetricKind::micro_f1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name(1, static_cast<char>('a' + i));
    t.label_space.push_back({name, "letter " + name});
  }
  return t;
}

}  // namespace

TEST(Parse, CapitalizedWithPunctuation) {
  const auto t = sentiment_task();
  EXPECT_EQ(parse_prediction("Positive.", t, identity_mapping(t)), LabelSet{"positive"});
}

TEST(Parse, MultiLabelCommaList) {
  const auto t = dialog_act_task();
  EXPECT_EQ(parse_prediction("question_check, acknowledge", t, identity_mapping(t)),
            (LabelSet{"question_check", "acknowledge"}));
  EXPECT_EQ(parse_prediction("thanks;\napology", t, identity_mapping(t)), (LabelSet{"thanks", "apology"}));
}

TEST(Parse, UnrecognizedGivesEmpty) {
  const auto t = sentiment_task();
  EXPECT_TRUE(parse_prediction("definitely happy!", t, identity_mapping(t)).empty());
  EXPECT_TRUE(parse_prediction("", t, identity_mapping(t)).empty());
  EXPECT_TRUE(parse_prediction("neutrality", t, identity_mapping(t)).empty());
}

TEST(Parse, SingleLabelKeepsFirst) {
  const auto t = sentiment_task();
  EXPECT_EQ(parse_prediction("negative, positive", t, identity_mapping(t)), LabelSet{"negative"});
}

TEST(Parse, InvertsPermutedAndSymbolMappings) {
  const auto t = sentiment_task();
  EXPECT_EQ(parse_prediction("neutral", t, permuted_mapping(t, {0, 2, 1})), LabelSet{"negative"});
  EXPECT_EQ(parse_prediction("gamma", t, symbol_mapping(t)), LabelSet{"neutral"});
  EXPECT_TRUE(parse_prediction("neutral", t, symbol_mapping(t)).empty());
}

TEST(Parse, RemapThenParseIsIdentityForAnyMapping) {
  const auto t = dialog_act_task();
  const auto pool = sample_permutation_pool(t, 10, 8);
  Rng rng(4);
  for (const auto& m : pool.mappings) {
    for (int i = 0; i < 20; ++i) {
      std::vector<std::string> gold;
      for (const auto& n : t.class_names()) {
        if (rng.uniform01() < 0.2) gold.push_back(n);
      }
      std::string rendered;
      for (const auto& d : remap_labels(m, gold)) rendered += (rendered.empty() ? "" : ", ") + d;
      EXPECT_EQ(parse_prediction(rendered, t, m), LabelSet(gold.begin(), gold.end()));
    }
  }
}

TEST(MacroF1, WorkedExampleIsSevenNinths) {
  const auto t = sentiment_task();
  std::vector<LabelSet> golds = {{"positive"}, {"positive"}, {"negative"}, {"neutral"}};
  std::vector<LabelSet> preds = {{"positive"}, {"negative"}, {"negative"}, {"neutral"}};
  const auto r = macro_f1(golds, preds, t);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[2].f1, 1.0);
  EXPECT_EQ(r.aggregate, 7.0 / 9.0);
  EXPECT_EQ(r.per_class[1].fp, 1u);
}

TEST(MacroF1, PerfectAndEmptyPredictions) {
  const auto t = sentiment_task();
  std::vector<LabelSet> golds = {{"positive"}, {"negative"}, {"neutral"}};
  EXPECT_EQ(macro_f1(golds, golds, t).aggregate, 1.0);
  EXPECT_EQ(macro_f1(golds, std::vector<LabelSet>(3), t).aggregate, 0.0);
}

TEST(MacroF1, AbsentClassContributesZero) {
  const auto t = sentiment_task();
  std::vector<LabelSet> golds = {{"positive"}, {"negative"}};
  EXPECT_NEAR(macro_f1(golds, golds, t).aggregate, 2.0 / 3.0, 1e-15);
}

TEST(MicroF1, WorkedExampleIsTwoThirds) {
  const auto t = abcd_task(4, true);
  std::vector<LabelSet> golds = {{"a", "b"}, {"c"}};
  std::vector<LabelSet> preds = {{"a"}, {"c", "d"}};
  const auto r = micro_f1(golds, preds, t);
  EXPECT_EQ(r.aggregate, 2.0 / 3.0);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : r.per_class) tp += c.tp, fp += c.fp, fn += c.fn;
  EXPECT_EQ(tp, 2u);
  EXPECT_EQ(fp, 1u);
  EXPECT_EQ(fn, 1u);
}

TEST(MicroF1, ExactAndDisjoint) {
  const auto t = abcd_task(4, true);
  std::vector<LabelSet> golds = {{"a", "b"}, {"c"}};
  EXPECT_EQ(micro_f1(golds, golds, t).aggregate, 1.0);
  EXPECT_EQ(micro_f1(golds, {{"c", "d"}, {"a"}}, t).aggregate, 0.0);
}

TEST(Metrics, InputErrors) {
  const auto t = sentiment_task();
  EXPECT_THROW(macro_f1({{"positive"}}, {}, t), ValidationError);
  EXPECT_THROW(macro_f1({}, {}, t), ValidationError);
  EXPECT_THROW(micro_f1({LabelSet{}}, {LabelSet{}}, t), ValidationError);
  EXPECT_THROW(micro_f1({{"joy"}}, {{"positive"}}, t), ValidationError);
}

TEST(Metrics, AgreeWithBruteForceOnRandomInstances) {
  Rng rng(1234);
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n_classes = 2 + rng.uniform_index(4);
    const bool multi = rng.uniform01() < 0.5;
    const auto t = abcd_task(n_classes, multi);
    const std::size_t n = 1 + rng.uniform_index(10);
    std::vector<LabelSet> golds(n), preds(n);
    const auto names = t.class_names();
    for (std::size_t i = 0; i < n; ++i) {
      if (multi) {
        for (const auto& c : names) {
          if (rng.uniform01() < 0.4) golds[i].insert(c);
          if (rng.uniform01() < 0.4) preds[i].insert(c);
        }
        if (golds[i].empty()) golds[i].insert(names[rng.uniform_index(n_classes)]);
      } else {
        golds[i].insert(names[rng.uniform_index(n_classes)]);
        if (rng.uniform01() < 0.85) preds[i].insert(names[rng.uniform_index(n_classes)]);
      }
    }
    const auto oracle = brute_force_f1(golds, preds, names);
    ASSERT_NEAR(macro_f1(golds, preds, t).aggregate, oracle.macro, 1e-12) << inst;
    ASSERT_NEAR(micro_f1(golds, preds, t).aggregate, oracle.micro, 1e-12) << inst;
  }
}

TEST(Metrics, PermutationInvariant) {
  const auto t = abcd_task(4, true);
  std::vector<LabelSet> golds = {{"a"}, {"b", "c"}, {"d"}, {"a", "d"}};
  std::vector<LabelSet> preds = {{"a", "b"}, {"c"}, {}, {"d"}};
  const double m = macro_f1(golds, preds, t).aggregate, u = micro_f1(golds, preds, t).aggregate;
  std::reverse(golds.begin(), golds.end());
  std::reverse(preds.begin(), preds.end());
  EXPECT_EQ(macro_f1(golds, preds, t).aggregate, m);
  EXPECT_EQ(micro_f1(golds, preds, t).aggregate, u);
}

TEST(Metrics, ScoreDispatchesOnTaskMetric) {
  auto t = abcd_task(3, true);
  std::vector<LabelSet> golds = {{"a", "b"}, {"c"}};
  std::vector<LabelSet> preds = {{"a"}, {"c"}};
  EXPECT_EQ(score(golds, preds, t).metric, MetricKind::micro_f1);
  t.metric = MetricKind::macro_f1;
  EXPECT_EQ(score(golds, preds, t).aggregate, macro_f1(golds, preds, t).aggregate);
}

TEST(Metrics, JsonAndCsv) {
  const auto t = sentiment_task();
  std::vector<LabelSet> golds = {{"positive"}, {"positive"}, {"negative"}, {"neutral"}};
  std::vector<LabelSet> preds = {{"positive"}, {"negative"}, {"negative"}, {"neutral"}};
  const auto r = macro_f1(golds, preds, t);
  EXPECT_EQ(csv_header(r), "task,strategy,shots,aggregate,f1_positive,f1_negative,f1_neutral");
  EXPECT_EQ(csv_row(r, "sentiment", "regular", 2), "sentiment,regular,2,0.777778,0.666667,0.666667,1.000000");
  const auto j = to_json(r);
  EXPECT_DOUBLE_EQ(j.at("aggregate").get<double>(), 7.0 / 9.0);
  EXPECT_EQ(j.at("per_class").size(), 3u);
}
