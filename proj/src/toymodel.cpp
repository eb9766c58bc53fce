#include "iclft/toymodel.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "iclft/text.hpp"

namespace iclft::toy {

std::string_view to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::query: return "query";
    case LoraTarget::key: return "key";
    case LoraTarget::value: return "value";
    case LoraTarget::output: return "output";
  }
  return "query";
}

LoraTarget parse_lora_target(std::string_view s) {
  if (s == "query" || s == "q") return LoraTarget::query;
  if (s == "key" || s == "k") return LoraTarget::key;
  if (s == "value" || s == "v") return LoraTarget::value;
  if (s == "output" || s == "o") return LoraTarget::output;
  throw ParseError("unknown LoRA target '" + std::string(s) + "'");
}

std::string_view to_string(TrainableSet t) {
  return t == TrainableSet::full ? "full" : "adapters_only";
}

TrainableSet parse_trainable_set(std::string_view s) {
  if (s == "full") return TrainableSet::full;
  if (s == "adapters_only") return TrainableSet::adapters_only;
  throw ParseError("unknown trainable set '" + std::string(s) + "'");
}

void validate(const OptimConfig& cfg) {
  if (!(cfg.warmup_steps > 0 && cfg.warmup_steps < cfg.total_steps)) {
    throw ValidationError("optimizer: need 0 < warmup_steps (" + std::to_string(cfg.warmup_steps) +
                          ") < total_steps (" + std::to_string(cfg.total_steps) + ")");
  }
  if (!(cfg.clip_norm > 0.0)) throw ValidationError("optimizer: clip_norm must be positive");
  if (cfg.accumulation < 1) throw ValidationError("optimizer: accumulation must be >= 1");
  if (!(cfg.base_lr > 0.0)) throw ValidationError("optimizer: base_lr must be positive");
}

double lr_at(int step, const OptimConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(cfg.total_steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

ModelParams init_model(int d, int vocab_size, int n_classes, int n_slots, std::uint64_t seed) {
  if (d < 2) throw ValidationError("init_model: d must be >= 2");
  if (vocab_size < 1 || n_classes < 1 || n_slots < 0) {
    throw ValidationError("init_model: degenerate dimensions");
  }
  Rng rng(derive_seed(seed, 0x11));
  auto fill = [&](Mat<double>& m, Eigen::Index rows, Eigen::Index cols, double bound) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  };
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  ModelParams m;
  fill(m.embeddings, vocab_size, d, 1.0);
  fill(m.slot_embeddings, n_slots, d, 1.0);
  fill(m.wq, d, d, proj);
  fill(m.wk, d, d, proj);
  fill(m.wv, d, d, proj);
  fill(m.wo, d, d, proj);
  fill(m.head, d, n_classes, proj);
  m.head_bias = RowVec<double>::Zero(n_classes);
  return m;
}

ModelParams init_model(int d, const Vocab& vocab, int n_classes, std::uint64_t seed) {
  return init_model(d, static_cast<int>(vocab.size()), n_classes, n_classes, seed);
}

std::vector<LoraAdapter> attach_adapters(const ModelParams& model, const LoraConfig& cfg,
                                         std::uint64_t seed) {
  if (cfg.rank < 1) throw ValidationError("LoRA rank must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw ValidationError("LoRA dropout must lie in [0, 1)");
  }
  Rng rng(derive_seed(seed, 0x22));
  const Eigen::Index d = model.dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<LoraAdapter> out;
  for (auto t : cfg.targets) {
    for (const auto& existing : out) {
      if (existing.target == t) throw ValidationError("duplicate LoRA target");
    }
    LoraAdapter a;
    a.target = t;
    a.alpha = cfg.alpha;
    a.dropout = cfg.dropout;
    a.a.resize(cfg.rank, d);
    for (Eigen::Index i = 0; i < a.a.size(); ++i) a.a.data()[i] = rng.uniform(-bound, bound);
    a.b = Mat<double>::Zero(d, cfg.rank);
    out.push_back(std::move(a));
  }
  return out;
}

std::pair<double, Gradients> grad(const ModelParams& model, const std::vector<LoraAdapter>& adapters,
                                  const std::vector<Sample>& batch, TrainableSet trainable,
                                  Rng* dropout_rng) {
  if (batch.empty()) throw ValidationError("grad: empty batch");
  Gradients g = zero_gradients(model, adapters);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ForwardCache<double> cache;
  for (const auto& s : batch) {
    const auto logits = forward(model, adapters, s.input.tokens, s.input.slots, &cache, dropout_rng);
    RowVec<double> dlogits;
    total += loss<double>(logits, s.target_slots, s.n_classes, s.multi_label, &dlogits);
    dlogits *= inv_b;
    backward(model, adapters, s.input.tokens, s.input.slots, cache, dlogits, trainable, g);
  }
  return {total * inv_b, std::move(g)};
}

double global_norm(const Gradients& g) {
  double sq = 0.0;
  for (const auto& t : tensor_refs(g.model, g.adapters)) sq += t.map().squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& g, double clip_norm) {
  const double norm = global_norm(g);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& t : tensor_refs(g.model, g.adapters)) t.map() *= scale;
  }
  return norm;
}

namespace {

void add_into(Gradients& acc, Gradients& g) {
  auto dst = tensor_refs(acc.model, acc.adapters);
  auto src = tensor_refs(g.model, g.adapters);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].map() += src[i].map();
}

}  // namespace

TrainResult train(ModelParams model, std::vector<LoraAdapter> adapters,
                  const std::vector<Sample>& samples, const OptimConfig& cfg, TrainableSet trainable,
                  Rng& rng) {
  if (samples.empty()) throw ValidationError("train: empty sample stream");
  const std::size_t acc = static_cast<std::size_t>(std::max(1, cfg.accumulation));
  const int steps = static_cast<int>((samples.size() + acc - 1) / acc);
  OptimConfig sched = cfg;
  if (sched.total_steps == 0) sched.total_steps = steps;
  validate(sched);
  if (steps > sched.total_steps) {
    throw ValidationError("train: " + std::to_string(steps) + " steps exceed total_steps " +
                          std::to_string(sched.total_steps));
  }

  TrainResult out;
  Gradients m1 = zero_gradients(model, adapters);
  Gradients m2 = zero_gradients(model, adapters);
  out.sample_losses.reserve(samples.size());

  for (int step = 0; step < steps; ++step) {
    const std::size_t begin = static_cast<std::size_t>(step) * acc;
    const std::size_t end = std::min(samples.size(), begin + acc);
    Gradients total = zero_gradients(model, adapters);
    double step_loss = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      auto [l, g] = grad(model, adapters, {samples[i]}, trainable, &rng);
      if (!std::isfinite(l)) {
        throw TrainingError("non-finite loss " + std::to_string(l) + " at step " +
                            std::to_string(step + 1) + ", sample " + std::to_string(i));
      }
      out.sample_losses.push_back(l);
      step_loss += l;
      add_into(total, g);
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (auto& t : tensor_refs(total.model, total.adapters)) t.map() *= inv;
    step_loss *= inv;
    clip_global_norm(total, cfg.clip_norm);

    const int t = step + 1;
    const double lr = lr_at(t, sched);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto params = tensor_refs(model, adapters);
    auto grads = tensor_refs(total.model, total.adapters);
    auto first = tensor_refs(m1.model, m1.adapters);
    auto second = tensor_refs(m2.model, m2.adapters);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (trainable == TrainableSet::adapters_only && !params[k].adapter) continue;
      auto p = params[k].map();
      auto g = grads[k].map();
      auto mm = first[k].map();
      auto vv = second[k].map();
      mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
      vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      p.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + cfg.adam_eps);
    }
    out.trace.push_back({t, step_loss, lr});
  }
  out.model = std::move(model);
  out.adapters = std::move(adapters);
  return out;
}

std::string predict(const RowVec<double>& logits, const TaskSpec& task, const LabelMapping& mapping) {
  const auto n = static_cast<Eigen::Index>(task.num_classes());
  if (logits.size() < n || mapping.size() != task.num_classes()) {
    throw ValidationError("predict: logits do not cover the label space");
  }
  if (!task.multi_label) {
    Eigen::Index best = 0;
    logits.head(n).maxCoeff(&best);
    return mapping.entries[static_cast<std::size_t>(best)].display_name;
  }
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (logits(i) > 0.0) names.push_back(mapping.entries[static_cast<std::size_t>(i)].display_name);
  }
  return text::join(names, ", ");
}

void write_loss_trace(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,loss,lr\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.step, r.loss, r.lr);
    out << buf;
  }
}

}  // namespace iclft::toy
