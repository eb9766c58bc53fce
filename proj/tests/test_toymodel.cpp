#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "helpers.hpp"
#include "iclft/backend.hpp"
#include "iclft/error.hpp"
#include "iclft/toymodel.hpp"

using namespace iclft;
using namespace iclft::testing;
using toy::RowVec;

namespace {

toy::OptimConfig small_optim(int warmup = 5) {
  toy::OptimConfig c;
  c.warmup_steps = warmup;
  c.base_lr = 5e-3;
  return c;
}

std::vector<toy::Sample> toy_samples(int n, std::uint64_t seed, int vocab, int classes) {
  Rng rng(seed);
  std::vector<toy::Sample> out;
  for (int i = 0; i < n; ++i) {
    toy::Sample s;
    const int label = static_cast<int>(rng.uniform_index(classes));
    s.input.tokens = {label + 4, static_cast<int>(4 + classes + rng.uniform_index(vocab - 4 - classes)),
                      static_cast<int>(4 + classes + rng.uniform_index(vocab - 4 - classes))};
    s.target_slots = {label};
    s.n_classes = classes;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Init, DeterministicFiniteAndBounded) {
  const auto a = toy::init_model(8, 100, 3, 3, 42);
  EXPECT_EQ(a, toy::init_model(8, 100, 3, 3, 42));
  EXPECT_FALSE(a == toy::init_model(8, 100, 3, 3, 43));
  EXPECT_EQ(a.head.rows(), 8);
  EXPECT_EQ(a.head.cols(), 3);
  EXPECT_EQ(a.embeddings.rows(), 100);
  EXPECT_TRUE(a.embeddings.allFinite());
  EXPECT_LE(a.embeddings.cwiseAbs().maxCoeff(), 1.0);
  const double bound = 1.0 / std::sqrt(8.0);
  for (const auto* w : {&a.wq, &a.wk, &a.wv, &a.wo, &a.head}) EXPECT_LE(w->cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.head_bias.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(toy::init_model(1, 100, 3, 3, 1), ValidationError);
}

TEST(Init, FromVocab) {
  Corpus c;
  c.examples = {make_example("a", "one two three", {"x"})};
  const auto v = build_vocab({&c}, {});
  const auto m = toy::init_model(4, v, 3, 9);
  EXPECT_EQ(m.vocab_size(), 7);
  EXPECT_EQ(m.n_slots(), 3);
}

TEST(Forward, FreshAdaptersLeaveLogitsUnchanged) {
  const auto m = toy::init_model(8, 30, 3, 3, 5);
  toy::LoraConfig lc;
  lc.targets = {toy::LoraTarget::query, toy::LoraTarget::key, toy::LoraTarget::value, toy::LoraTarget::output};
  const auto adapters = toy::attach_adapters(m, lc, 6);
  for (const auto& a : adapters) {
    EXPECT_EQ(a.b.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(a.a.cwiseAbs().maxCoeff(), 0.0);
  }
  const std::vector<int> toks = {4, 9, 17, 2, 29, 3};
  const std::vector<int> slots = {0, 1, 1, 2, 3, 0};
  EXPECT_EQ(toy::forward(m, adapters, toks, slots), toy::forward(m, {}, toks, slots));
}

TEST(Forward, SingleTokenClosedForm) {
  const auto m = toy::init_model(6, 20, 4, 4, 8);
  const int tok = 11;
  const RowVec<double> x = m.embeddings.row(tok);
  const RowVec<double> expected = (x + x * m.wv * m.wo) * m.head + m.head_bias;
  const auto got = toy::forward(m, {}, {tok});
  ASSERT_EQ(got.size(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], expected[i], 1e-14);
}

// Attention classifier written with scalar loops, no adapters or slots.
static std::vector<double> loop_forward(const toy::ModelParams& m, const std::vector<int>& tokens) {
  const std::size_t n = tokens.size();
  const int d = static_cast<int>(m.dim());
  std::vector<std::vector<double>> x(n, std::vector<double>(d)), q = x, k = x, v = x, o = x;
  for (std::size_t l = 0; l < n; ++l)
    for (int j = 0; j < d; ++j) x[l][j] = m.embeddings(tokens[l], j);
  for (std::size_t l = 0; l < n; ++l)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) {
        q[l][j] += x[l][i] * m.wq(i, j);
        k[l][j] += x[l][i] * m.wk(i, j);
        v[l][j] += x[l][i] * m.wv(i, j);
      }
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> w(n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += q[r][j] * k[c][j];
      w[c] = std::exp(dot / std::sqrt(double(d)));
      z += w[c];
    }
    for (std::size_t c = 0; c < n; ++c)
      for (int j = 0; j < d; ++j) o[r][j] += w[c] / z * v[c][j];
  }
  std::vector<double> pooled(d, 0.0);
  for (std::size_t l = 0; l < n; ++l)
    for (int j = 0; j < d; ++j) {
      double h = x[l][j];
      for (int i = 0; i < d; ++i) h += o[l][i] * m.wo(i, j);
      pooled[j] += h / double(n);
    }
  std::vector<double> logits(static_cast<std::size_t>(m.n_classes()));
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] = m.head_bias(static_cast<Eigen::Index>(c));
    for (int j = 0; j < d; ++j) logits[c] += pooled[j] * m.head(j, static_cast<Eigen::Index>(c));
  }
  return logits;
}

TEST(Forward, MatchesLoopReferenceAndIgnoresOrder) {
  const auto m = toy::init_model(4, 10, 3, 3, 2024);
  const std::vector<int> a = {4, 7, 8, 5}, b = {4, 8, 7, 5};
  const auto la = toy::forward(m, {}, a), lb = toy::forward(m, {}, b);
  // Mean pooling over a permutation-equivariant block: swapping tokens leaves
  // the pooled representation unchanged up to rounding.
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(la[i], lb[i], 1e-12);
  const auto ref = loop_forward(m, a);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(la[i], ref[static_cast<std::size_t>(i)], 1e-12);
  // Slot embeddings break the symmetry.
  const auto ls = toy::forward(m, {}, a, {0, 1, 2, 0});
  EXPECT_GT((ls - la).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Forward, InputErrors) {
  const auto m = toy::init_model(4, 10, 3, 3, 1);
  EXPECT_THROW(toy::forward(m, {}, {}), ValidationError);
  EXPECT_THROW(toy::forward(m, {}, {10}), ValidationError);
  EXPECT_THROW(toy::forward(m, {}, {1}, {4}), ValidationError);
  EXPECT_THROW(toy::forward(m, {}, {1, 2}, {0}), ValidationError);
}

TEST(Forward, FloatInstantiationTracksDouble) {
  const auto m = toy::init_model(6, 20, 3, 3, 4);
  toy::BasicModelParams<float> f;
  f.embeddings = m.embeddings.cast<float>();
  f.slot_embeddings = m.slot_embeddings.cast<float>();
  f.wq = m.wq.cast<float>();
  f.wk = m.wk.cast<float>();
  f.wv = m.wv.cast<float>();
  f.wo = m.wo.cast<float>();
  f.head = m.head.cast<float>();
  f.head_bias = m.head_bias.cast<float>();
  const std::vector<int> toks = {1, 5, 9, 12};
  const auto ld = toy::forward(m, {}, toks);
  const auto lf = toy::forward<float>(f, {}, toks);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(lf[i], ld[i], 1e-5);
}

TEST(Loss, ClosedForms) {
  RowVec<double> uniform = RowVec<double>::Zero(3);
  EXPECT_NEAR(toy::loss(uniform, {1}, 3, false), std::log(3.0), 1e-15);
  RowVec<double> onehot = RowVec<double>::Zero(3);
  onehot[2] = 1e6;
  EXPECT_NEAR(toy::loss(onehot, {2}, 3, false), 0.0, 1e-12);
  RowVec<double> zero2 = RowVec<double>::Zero(2);
  EXPECT_NEAR(toy::loss(zero2, {0}, 2, true), std::log(2.0), 1e-15);
  EXPECT_THROW(toy::loss(uniform, {}, 3, false), ValidationError);
  // Logits past n_classes are ignored.
  RowVec<double> wide(4);
  wide << 0, 0, 0, 50;
  EXPECT_NEAR(toy::loss(wide, {0}, 3, false), std::log(3.0), 1e-15);
}

TEST(Grad, FiniteDifferencesFullModel) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (bool multi : {false, true}) {
      const auto r = finite_difference_check(seed, toy::TrainableSet::full, multi);
      EXPECT_LT(r.max_rel_err, 1e-4) << seed << " multi=" << multi;
      EXPECT_GT(r.coords, 0u);
    }
  }
}

TEST(Grad, FiniteDifferencesAdaptersOnly) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = finite_difference_check(seed, toy::TrainableSet::adapters_only, false);
    EXPECT_LT(r.max_rel_err, 1e-4) << seed;
  }
}

TEST(Grad, FrozenBaseHasZeroGradient) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  auto ad = toy::attach_adapters(m, {}, 3);
  const auto batch = toy_samples(3, 1, 20, 3);
  const auto [l, g] = toy::grad(m, ad, batch, toy::TrainableSet::adapters_only);
  for (const auto& t : toy::tensor_refs(g.model, g.adapters)) {
    if (!t.adapter) {
      EXPECT_EQ(t.map().cwiseAbs().maxCoeff(), 0.0) << t.name;
    }
  }
  double adapter_norm = 0.0;
  for (const auto& a : g.adapters) adapter_norm += a.b.norm();
  EXPECT_GT(adapter_norm, 0.0);
}

TEST(Grad, LinearInLossScale) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  const auto ad = toy::attach_adapters(m, {}, 3);
  const std::vector<int> toks = {4, 8, 9};
  toy::ForwardCache<double> cache;
  const auto logits = toy::forward(m, ad, toks, {}, &cache);
  RowVec<double> dl;
  toy::loss(logits, {1}, 3, false, &dl);
  auto g1 = toy::zero_gradients(m, ad), g2 = toy::zero_gradients(m, ad);
  toy::backward(m, ad, toks, {}, cache, dl, toy::TrainableSet::full, g1);
  toy::backward(m, ad, toks, {}, cache, RowVec<double>(2.0 * dl), toy::TrainableSet::full, g2);
  const auto r1 = toy::tensor_refs(g1.model, g1.adapters), r2 = toy::tensor_refs(g2.model, g2.adapters);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_LE((r2[i].map() - 2.0 * r1[i].map()).cwiseAbs().maxCoeff(), 1e-14) << r1[i].name;
  }
}

TEST(Schedule, ClosedFormAtKeySteps) {
  toy::OptimConfig c;
  c.total_steps = 1000;
  EXPECT_EQ(c.warmup_steps, 100);
  const double base = c.base_lr;
  auto closed = [&](int s) {
    if (s < 100) return base * s / 100.0;
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * (s - 100) / 900.0));
  };
  for (int s : {0, 1, 100, 550, 1000}) EXPECT_NEAR(toy::lr_at(s, c), closed(s), 1e-12) << s;
  EXPECT_EQ(toy::lr_at(0, c), 0.0);
  EXPECT_EQ(toy::lr_at(100, c), base);
  EXPECT_NEAR(toy::lr_at(550, c), base / 2, 1e-15);
  EXPECT_NEAR(toy::lr_at(1000, c), 0.0, 1e-15);
  for (int s = 0; s <= 1000; ++s) ASSERT_NEAR(toy::lr_at(s, c), closed(s), 1e-12);
  EXPECT_THROW(toy::lr_at(1001, c), ValidationError);
  EXPECT_THROW(toy::lr_at(-1, c), ValidationError);
  EXPECT_EQ(toy::OptimConfig::large_model().base_lr, 1e-5);
}

TEST(Schedule, ValidatesConfig) {
  toy::OptimConfig c;
  c.total_steps = 100;
  EXPECT_THROW(toy::validate(c), ValidationError);
  c.total_steps = 101;
  EXPECT_NO_THROW(toy::validate(c));
  c.clip_norm = 0;
  EXPECT_THROW(toy::validate(c), ValidationError);
}

TEST(Clip, GlobalNormBound) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  const auto ad = toy::attach_adapters(m, {}, 3);
  auto [l, g] = toy::grad(m, ad, toy_samples(4, 2, 20, 3), toy::TrainableSet::full);
  const double before = toy::global_norm(g);
  ASSERT_GT(before, 0.01);
  EXPECT_NEAR(toy::clip_global_norm(g, 0.01), before, 1e-15);
  EXPECT_LE(toy::global_norm(g), 0.01 + 1e-9);
  auto copy = g;
  toy::clip_global_norm(copy, 10.0);
  EXPECT_EQ(toy::global_norm(copy), toy::global_norm(g));
}

TEST(Train, TinyClipBoundsFirstUpdate) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  const auto ad = toy::attach_adapters(m, {}, 3);
  auto cfg = small_optim();
  cfg.clip_norm = 1e-12;
  cfg.total_steps = 10;
  Rng rng(1);
  const auto r = toy::train(m, ad, toy_samples(1, 3, 20, 3), cfg, toy::TrainableSet::full, rng);
  // Adam step magnitude per coordinate is lr * |g| / (|g| + eps) <= lr * clip / eps.
  const double bound = toy::lr_at(1, cfg) * 1e-12 / cfg.adam_eps;
  const auto before = toy::tensor_refs(m, ad);
  const auto after = toy::tensor_refs(r.model, r.adapters);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_LE((after[i].map() - before[i].map()).cwiseAbs().maxCoeff(), bound * (1 + 1e-9)) << before[i].name;
  }
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  const auto m = toy::init_model(8, 16, 3, 3, 7);
  const auto ad = toy::attach_adapters(m, {}, 8);
  const int per_epoch = 30, epochs = 8;
  std::vector<toy::Sample> stream;
  const auto base = toy_samples(per_epoch, 5, 16, 3);
  for (int e = 0; e < epochs; ++e) stream.insert(stream.end(), base.begin(), base.end());
  Rng r1(9), r2(9);
  const auto a = toy::train(m, ad, stream, small_optim(20), toy::TrainableSet::full, r1);
  const auto b = toy::train(m, ad, stream, small_optim(20), toy::TrainableSet::full, r2);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.adapters, b.adapters);
  ASSERT_EQ(a.sample_losses.size(), stream.size());
  double first = 0, last = 0;
  for (int i = 0; i < per_epoch; ++i) {
    first += a.sample_losses[static_cast<std::size_t>(i)];
    last += a.sample_losses[stream.size() - per_epoch + static_cast<std::size_t>(i)];
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(a.trace.size(), stream.size());
  EXPECT_EQ(a.trace.back().lr, 0.0);
}

TEST(Train, AccumulationGroupsMicroBatches) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  const auto ad = toy::attach_adapters(m, {}, 3);
  auto cfg = small_optim(2);
  cfg.accumulation = 4;
  Rng rng(1);
  const auto r = toy::train(m, ad, toy_samples(18, 3, 20, 3), cfg, toy::TrainableSet::full, rng);
  EXPECT_EQ(r.trace.size(), 5u);
  EXPECT_EQ(r.sample_losses.size(), 18u);
}

TEST(Train, AdaptersOnlyFreezesBase) {
  const auto m = toy::init_model(6, 20, 3, 3, 2);
  const auto ad = toy::attach_adapters(m, {}, 3);
  Rng rng(1);
  const auto r = toy::train(m, ad, toy_samples(20, 3, 20, 3), small_optim(), toy::TrainableSet::adapters_only, rng);
  EXPECT_EQ(r.model, m);
  EXPECT_FALSE(r.adapters == ad);
}

TEST(Train, NonFiniteLossAborts) {
  auto m = toy::init_model(4, 10, 3, 3, 2);
  m.head(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  EXPECT_THROW(toy::train(m, {}, toy_samples(12, 3, 10, 3), small_optim(), toy::TrainableSet::full, rng),
               TrainingError);
}

TEST(Predict, SlotsFollowTheMapping) {
  const auto t = sentiment_task();
  RowVec<double> logits(3);
  logits << 5, -1, -1;
  EXPECT_EQ(toy::predict(logits, t, identity_mapping(t)), "positive");
  // Slot 0 now shows the negative definition: the answer decodes to negative.
  const auto m = permuted_mapping(t, {1, 0, 2});
  const auto raw = toy::predict(logits, t, m);
  EXPECT_EQ(parse_prediction(raw, t, m), LabelSet{"negative"});
  EXPECT_EQ(toy::predict(logits, t, symbol_mapping(t)), "alpha");
}

TEST(Predict, MultiLabelThreshold) {
  const auto t = dialog_act_task();
  RowVec<double> logits = RowVec<double>::Constant(18, -20.0);
  EXPECT_EQ(toy::predict(logits, t, identity_mapping(t)), "");
  logits[0] = 3;
  logits[17] = 0.5;
  EXPECT_EQ(toy::predict(logits, t, identity_mapping(t)), "acknowledge, thanks");
}

TEST(Checkpoint, RoundTripAndHeader) {
  const auto m = toy::init_model(5, 12, 3, 3, 2);
  auto ad = toy::attach_adapters(m, {}, 3);
  ad[0].b.setConstant(0.25);
  const toy::Checkpoint ck{m, ad, 0xabcdefULL, 77};
  std::stringstream s;
  toy::write_checkpoint(s, ck);
  const std::string bytes = s.str();
  EXPECT_EQ(bytes.substr(0, 8), "ICLCKPT1");
  const auto back = toy::read_checkpoint(s);
  EXPECT_EQ(back.model, m);
  EXPECT_EQ(back.adapters, ad);
  EXPECT_EQ(back.vocab_hash, 0xabcdefULL);
  EXPECT_EQ(back.seed, 77u);
  std::stringstream again;
  toy::write_checkpoint(again, back);
  EXPECT_EQ(again.str(), bytes);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(toy::read_checkpoint(truncated), ParseError);
  std::stringstream bad("NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(toy::read_checkpoint(bad), ParseError);
}

TEST(Checkpoint, BackendRejectsOtherVocabulary) {
  Corpus c;
  c.examples = {make_example("a", "one two", {"x"})};
  const auto v = build_vocab({&c}, {});
  const auto m = toy::init_model(4, v, 3, 1);
  ToyBackend backend(v, m, {}, toy::TrainableSet::full, 1);
  Corpus other;
  other.examples = {make_example("a", "three four", {"x"})};
  EXPECT_THROW(ToyBackend::from_checkpoint(build_vocab({&other}, {}), backend.checkpoint(), toy::TrainableSet::full),
               ValidationError);
  EXPECT_NO_THROW(ToyBackend::from_checkpoint(v, backend.checkpoint(), toy::TrainableSet::full));
}

TEST(Trace, CsvFormat) {
  std::ostringstream out;
  toy::write_loss_trace(out, {{1, 0.5, 0.001}, {2, 0.25, 0.0005}});
  EXPECT_EQ(out.str(), "step,loss,lr\n1,0.5,0.001\n2,0.25,0.00050000000000000001\n");
}
