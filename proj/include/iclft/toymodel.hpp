#pragma once

// Desk-scale trainable classifier: token + slot embeddings, one single-head
// self-attention block with a residual connection, mean pooling and a linear
// head. Optional LoRA adapters on the attention projections.
//
// Row convention throughout: a sequence is an L x d matrix, projections act
// as X * W, and an adapter adds (alpha / r) * (X * B) * A, i.e. the effective
// weight is W + (alpha / r) * B * A.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "iclft/error.hpp"
#include "iclft/labelmap.hpp"
#include "iclft/prompt.hpp"
#include "iclft/rng.hpp"
#include "iclft/task.hpp"

namespace iclft::toy {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class LoraTarget : std::uint32_t { query = 0, key = 1, value = 2, output = 3 };

std::string_view to_string(LoraTarget t);
LoraTarget parse_lora_target(std::string_view s);

enum class TrainableSet { full, adapters_only };

std::string_view to_string(TrainableSet t);
TrainableSet parse_trainable_set(std::string_view s);

template <typename Scalar = double>
struct BasicModelParams {
  Mat<Scalar> embeddings;       // vocab x d
  Mat<Scalar> slot_embeddings;  // n_slots x d, row s-1 for slot s
  Mat<Scalar> wq, wk, wv, wo;   // d x d
  Mat<Scalar> head;             // d x n_classes
  RowVec<Scalar> head_bias;     // n_classes

  Eigen::Index dim() const { return wq.rows(); }
  Eigen::Index vocab_size() const { return embeddings.rows(); }
  Eigen::Index n_classes() const { return head.cols(); }
  Eigen::Index n_slots() const { return slot_embeddings.rows(); }

  bool operator==(const BasicModelParams& o) const {
    return embeddings == o.embeddings && slot_embeddings == o.slot_embeddings && wq == o.wq &&
           wk == o.wk && wv == o.wv && wo == o.wo && head == o.head && head_bias == o.head_bias;
  }

  BasicModelParams zeros_like() const {
    BasicModelParams z;
    z.embeddings = Mat<Scalar>::Zero(embeddings.rows(), embeddings.cols());
    z.slot_embeddings = Mat<Scalar>::Zero(slot_embeddings.rows(), slot_embeddings.cols());
    z.wq = Mat<Scalar>::Zero(wq.rows(), wq.cols());
    z.wk = z.wq;
    z.wv = z.wq;
    z.wo = z.wq;
    z.head = Mat<Scalar>::Zero(head.rows(), head.cols());
    z.head_bias = RowVec<Scalar>::Zero(head_bias.size());
    return z;
  }
};

template <typename Scalar = double>
struct BasicLoraAdapter {
  LoraTarget target = LoraTarget::query;
  Mat<Scalar> a;  // r x d
  Mat<Scalar> b;  // d x r
  Scalar alpha = Scalar(32);
  Scalar dropout = Scalar(0.1);

  Eigen::Index rank() const { return a.rows(); }
  Scalar scale() const { return alpha / static_cast<Scalar>(rank()); }
  Mat<Scalar> delta() const { return scale() * b * a; }

  bool operator==(const BasicLoraAdapter& o) const {
    return target == o.target && a == o.a && b == o.b && alpha == o.alpha && dropout == o.dropout;
  }

  BasicLoraAdapter zeros_like() const {
    BasicLoraAdapter z = *this;
    z.a.setZero();
    z.b.setZero();
    return z;
  }
};

using ModelParams = BasicModelParams<double>;
using LoraAdapter = BasicLoraAdapter<double>;

/// Non-owning view of one parameter tensor (row-major storage). `T` is
/// `Scalar` or `const Scalar`.
template <typename T>
struct TensorRef {
  using Scalar = std::remove_const_t<T>;
  using MapType = Eigen::Map<std::conditional_t<std::is_const_v<T>, const Mat<Scalar>, Mat<Scalar>>>;

  std::string name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;
  bool adapter;

  Eigen::Index size() const { return rows * cols; }
  MapType map() const { return MapType(data, rows, cols); }
};

namespace detail {

template <typename T, typename Params, typename Adapters>
std::vector<TensorRef<T>> collect_tensors(Params& m, Adapters& adapters) {
  std::vector<TensorRef<T>> out;
  auto add = [&](std::string name, auto& t, bool adapter) {
    out.push_back({std::move(name), t.data(), t.rows(), t.cols(), adapter});
  };
  add("embeddings", m.embeddings, false);
  add("slot_embeddings", m.slot_embeddings, false);
  add("wq", m.wq, false);
  add("wk", m.wk, false);
  add("wv", m.wv, false);
  add("wo", m.wo, false);
  add("head", m.head, false);
  add("head_bias", m.head_bias, false);
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    const std::string tag = "lora" + std::to_string(i) + "_" + std::string(to_string(adapters[i].target));
    add(tag + ".a", adapters[i].a, true);
    add(tag + ".b", adapters[i].b, true);
  }
  return out;
}

}  // namespace detail

/// Every tensor of (model, adapters) in a fixed canonical order.
template <typename Scalar>
std::vector<TensorRef<Scalar>> tensor_refs(BasicModelParams<Scalar>& m,
                                           std::vector<BasicLoraAdapter<Scalar>>& adapters) {
  return detail::collect_tensors<Scalar>(m, adapters);
}

template <typename Scalar>
std::vector<TensorRef<const Scalar>> tensor_refs(const BasicModelParams<Scalar>& m,
                                                 const std::vector<BasicLoraAdapter<Scalar>>& adapters) {
  return detail::collect_tensors<const Scalar>(m, adapters);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> x, q, k, v, attn, o, h;
  RowVec<Scalar> pooled;
  RowVec<Scalar> logits;
  std::vector<Mat<Scalar>> masks;  // per adapter; empty matrix when dropout is off
};

namespace detail {

template <typename Scalar>
const BasicLoraAdapter<Scalar>* find_adapter(const std::vector<BasicLoraAdapter<Scalar>>& adapters,
                                             LoraTarget t, std::size_t* index) {
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    if (adapters[i].target == t) {
      if (index) *index = i;
      return &adapters[i];
    }
  }
  return nullptr;
}

template <typename Scalar>
Mat<Scalar> project(const Mat<Scalar>& in, const Mat<Scalar>& w, const BasicLoraAdapter<Scalar>* ad,
                    const Mat<Scalar>& mask) {
  Mat<Scalar> y = in * w;
  if (ad) {
    if (mask.size()) {
      y.noalias() += ad->scale() * ((mask.cwiseProduct(in) * ad->b) * ad->a);
    } else {
      y.noalias() += ad->scale() * ((in * ad->b) * ad->a);
    }
  }
  return y;
}

/// Accumulates gradients of y = in*W + s*((mask.in)*B)*A and returns d(in).
template <typename Scalar>
Mat<Scalar> project_backward(const Mat<Scalar>& in, const Mat<Scalar>& w,
                             const BasicLoraAdapter<Scalar>* ad, const Mat<Scalar>& mask,
                             const Mat<Scalar>& dy, Mat<Scalar>* dw, BasicLoraAdapter<Scalar>* dad) {
  if (dw) dw->noalias() += in.transpose() * dy;
  Mat<Scalar> din = dy * w.transpose();
  if (ad) {
    const Mat<Scalar> xd = mask.size() ? Mat<Scalar>(mask.cwiseProduct(in)) : in;
    const Mat<Scalar> u = xd * ad->b;
    const Mat<Scalar> du = ad->scale() * (dy * ad->a.transpose());
    if (dad) {
      dad->a.noalias() += ad->scale() * (u.transpose() * dy);
      dad->b.noalias() += xd.transpose() * du;
    }
    Mat<Scalar> dxd = du * ad->b.transpose();
    if (mask.size()) dxd = dxd.cwiseProduct(mask);
    din += dxd;
  }
  return din;
}

}  // namespace detail

inline void check_input(Eigen::Index vocab_size, Eigen::Index n_slots, const std::vector<int>& tokens,
                        const std::vector<int>& slots) {
  if (tokens.empty()) throw ValidationError("forward: empty token list");
  if (!slots.empty() && slots.size() != tokens.size()) {
    throw ValidationError("forward: slot annotation length mismatch");
  }
  for (int t : tokens) {
    if (t < 0 || t >= vocab_size) throw ValidationError("forward: token id out of range: " + std::to_string(t));
  }
  for (int s : slots) {
    if (s < 0 || s > n_slots) throw ValidationError("forward: slot id out of range: " + std::to_string(s));
  }
}

/// Forward pass. `slots` may be empty (no slot annotation). With `dropout_rng`
/// null the adapters run in eval mode.
template <typename Scalar>
RowVec<Scalar> forward(const BasicModelParams<Scalar>& m,
                       const std::vector<BasicLoraAdapter<Scalar>>& adapters,
                       const std::vector<int>& tokens, const std::vector<int>& slots = {},
                       ForwardCache<Scalar>* cache = nullptr, Rng* dropout_rng = nullptr) {
  check_input(m.vocab_size(), m.n_slots(), tokens, slots);
  const Eigen::Index len = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = m.dim();

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.x.resize(len, d);
  for (Eigen::Index l = 0; l < len; ++l) {
    c.x.row(l) = m.embeddings.row(tokens[static_cast<std::size_t>(l)]);
    if (!slots.empty() && slots[static_cast<std::size_t>(l)] > 0) {
      c.x.row(l) += m.slot_embeddings.row(slots[static_cast<std::size_t>(l)] - 1);
    }
  }

  c.masks.assign(adapters.size(), Mat<Scalar>());
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    const double p = static_cast<double>(adapters[i].dropout);
    if (!dropout_rng || p <= 0.0) continue;
    const Scalar keep = Scalar(1) / Scalar(1.0 - p);
    c.masks[i].resize(len, d);
    for (Eigen::Index r = 0; r < len; ++r)
      for (Eigen::Index col = 0; col < d; ++col)
        c.masks[i](r, col) = dropout_rng->uniform01() < p ? Scalar(0) : keep;
  }
  auto proj = [&](const Mat<Scalar>& in, const Mat<Scalar>& w, LoraTarget t) {
    std::size_t idx = 0;
    const auto* ad = detail::find_adapter(adapters, t, &idx);
    static const Mat<Scalar> none;
    return detail::project<Scalar>(in, w, ad, ad ? c.masks[idx] : none);
  };

  c.q = proj(c.x, m.wq, LoraTarget::query);
  c.k = proj(c.x, m.wk, LoraTarget::key);
  c.v = proj(c.x, m.wv, LoraTarget::value);
  using std::sqrt;
  const Scalar inv_sqrt_d = Scalar(1) / sqrt(static_cast<Scalar>(d));
  c.attn = (c.q * c.k.transpose()) * inv_sqrt_d;
  for (Eigen::Index r = 0; r < len; ++r) {
    auto row = c.attn.row(r);
    const Scalar mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  c.o = c.attn * c.v;
  c.h = c.x + proj(c.o, m.wo, LoraTarget::output);
  c.pooled = c.h.colwise().mean();
  c.logits = c.pooled * m.head + m.head_bias;
  return c.logits;
}

/// Parameter gradients in the same layout as the parameters.
template <typename Scalar>
struct BasicGradients {
  BasicModelParams<Scalar> model;
  std::vector<BasicLoraAdapter<Scalar>> adapters;
};

using Gradients = BasicGradients<double>;

template <typename Scalar>
BasicGradients<Scalar> zero_gradients(const BasicModelParams<Scalar>& m,
                                      const std::vector<BasicLoraAdapter<Scalar>>& adapters) {
  BasicGradients<Scalar> g{m.zeros_like(), {}};
  for (const auto& a : adapters) g.adapters.push_back(a.zeros_like());
  return g;
}

/// Backpropagates d(loss)/d(logits) through a cached forward pass and adds the
/// result into `grads`. Base-model tensors are skipped for adapters_only.
template <typename Scalar>
void backward(const BasicModelParams<Scalar>& m, const std::vector<BasicLoraAdapter<Scalar>>& adapters,
              const std::vector<int>& tokens, const std::vector<int>& slots,
              const ForwardCache<Scalar>& c, const RowVec<Scalar>& dlogits, TrainableSet trainable,
              BasicGradients<Scalar>& grads) {
  const bool base = trainable == TrainableSet::full;
  const Eigen::Index len = c.x.rows();
  const Eigen::Index d = m.dim();
  auto& gm = grads.model;

  if (base) {
    gm.head.noalias() += c.pooled.transpose() * dlogits;
    gm.head_bias += dlogits;
  }
  const RowVec<Scalar> dpooled = dlogits * m.head.transpose();
  const Mat<Scalar> dh = Mat<Scalar>::Ones(len, 1) * (dpooled / static_cast<Scalar>(len));

  auto adapter_for = [&](LoraTarget t, const BasicLoraAdapter<Scalar>** ad, BasicLoraAdapter<Scalar>** dad,
                         const Mat<Scalar>** mask) {
    static const Mat<Scalar> none;
    std::size_t idx = 0;
    *ad = detail::find_adapter(adapters, t, &idx);
    *dad = *ad ? &grads.adapters[idx] : nullptr;
    *mask = *ad ? &c.masks[idx] : &none;
  };
  const BasicLoraAdapter<Scalar>* ad = nullptr;
  BasicLoraAdapter<Scalar>* dad = nullptr;
  const Mat<Scalar>* mask = nullptr;

  Mat<Scalar> dx = dh;
  adapter_for(LoraTarget::output, &ad, &dad, &mask);
  const Mat<Scalar> dout =
      detail::project_backward<Scalar>(c.o, m.wo, ad, *mask, dh, base ? &gm.wo : nullptr, dad);

  const Mat<Scalar> dattn = dout * c.v.transpose();
  const Mat<Scalar> dv = c.attn.transpose() * dout;
  Mat<Scalar> dscores = c.attn.cwiseProduct(dattn);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = dscores.rowwise().sum();
  dscores -= c.attn.cwiseProduct(row_dot * RowVec<Scalar>::Ones(len));
  using std::sqrt;
  const Scalar inv_sqrt_d = Scalar(1) / sqrt(static_cast<Scalar>(d));
  const Mat<Scalar> dq = (dscores * c.k) * inv_sqrt_d;
  const Mat<Scalar> dk = (dscores.transpose() * c.q) * inv_sqrt_d;

  adapter_for(LoraTarget::query, &ad, &dad, &mask);
  dx += detail::project_backward<Scalar>(c.x, m.wq, ad, *mask, dq, base ? &gm.wq : nullptr, dad);
  adapter_for(LoraTarget::key, &ad, &dad, &mask);
  dx += detail::project_backward<Scalar>(c.x, m.wk, ad, *mask, dk, base ? &gm.wk : nullptr, dad);
  adapter_for(LoraTarget::value, &ad, &dad, &mask);
  dx += detail::project_backward<Scalar>(c.x, m.wv, ad, *mask, dv, base ? &gm.wv : nullptr, dad);

  if (base) {
    for (Eigen::Index l = 0; l < len; ++l) {
      gm.embeddings.row(tokens[static_cast<std::size_t>(l)]) += dx.row(l);
      if (!slots.empty() && slots[static_cast<std::size_t>(l)] > 0) {
        gm.slot_embeddings.row(slots[static_cast<std::size_t>(l)] - 1) += dx.row(l);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Loss over the first `n_classes` logits. Single-label: softmax cross-entropy
/// against the one target slot. Multi-label: mean per-class sigmoid binary
/// cross-entropy. If `dlogits` is given it receives d(loss)/d(logits), sized
/// like `logits` and zero past n_classes.
template <typename Scalar>
Scalar loss(const RowVec<Scalar>& logits, const std::vector<int>& target_slots, Eigen::Index n_classes,
            bool multi_label, RowVec<Scalar>* dlogits = nullptr) {
  if (target_slots.empty()) throw ValidationError("loss: empty target");
  if (n_classes < 1 || n_classes > logits.size()) throw ValidationError("loss: bad class count");
  for (int t : target_slots) {
    if (t < 0 || t >= n_classes) throw ValidationError("loss: target slot out of range");
  }
  using std::exp;
  using std::log;
  using std::log1p;
  using std::abs;
  if (dlogits) *dlogits = RowVec<Scalar>::Zero(logits.size());
  const auto z = logits.head(n_classes);
  if (!multi_label) {
    if (target_slots.size() != 1) throw ValidationError("loss: single-label target needs one slot");
    const Scalar mx = z.maxCoeff();
    const Scalar lse = mx + log((z.array() - mx).exp().sum());
    if (dlogits) {
      dlogits->head(n_classes) = (z.array() - lse).exp().matrix();
      (*dlogits)(target_slots[0]) -= Scalar(1);
    }
    return lse - z(target_slots[0]);
  }
  Scalar total(0);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n_classes);
  for (Eigen::Index i = 0; i < n_classes; ++i) {
    const bool positive = std::find(target_slots.begin(), target_slots.end(), i) != target_slots.end();
    const Scalar zi = z(i);
    const Scalar softplus = (zi > Scalar(0) ? zi : Scalar(0)) + log1p(exp(-abs(zi)));
    total += softplus - (positive ? zi : Scalar(0));
    if (dlogits) {
      const Scalar sig = Scalar(1) / (Scalar(1) + exp(-zi));
      (*dlogits)(i) = (sig - (positive ? Scalar(1) : Scalar(0))) * inv_n;
    }
  }
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Non-template API (double precision)
// ---------------------------------------------------------------------------

struct LoraConfig {
  int rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;
  std::vector<LoraTarget> targets = {LoraTarget::query, LoraTarget::value};
};

struct OptimConfig {
  double base_lr = 1e-3;
  int warmup_steps = 100;
  int total_steps = 0;  // 0: derived from the sample count and accumulation
  double clip_norm = 1.0;
  int accumulation = 1;
  int epochs = 15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Large-model setting; this base_lr is far too small for the toy model.
  static OptimConfig large_model() {
    OptimConfig c;
    c.base_lr = 1e-5;
    return c;
  }
};

/// Throws ValidationError unless 0 < warmup < total and clip_norm > 0.
void validate(const OptimConfig& cfg);

/// Linear warmup from 0 to base_lr, then cosine annealing to 0 at total_steps.
double lr_at(int step, const OptimConfig& cfg);

/// Scaled-uniform initialization: embeddings in [-1, 1], projections and head
/// in [-1/sqrt(d), 1/sqrt(d)], zero bias.
ModelParams init_model(int d, int vocab_size, int n_classes, int n_slots, std::uint64_t seed);
ModelParams init_model(int d, const Vocab& vocab, int n_classes, std::uint64_t seed);

/// Fresh adapters: A small-uniform, B zero, so the initial delta is exactly 0.
std::vector<LoraAdapter> attach_adapters(const ModelParams& model, const LoraConfig& cfg,
                                         std::uint64_t seed);

/// One training example for the toy model.
struct Sample {
  EncodedPrompt input;
  std::vector<int> target_slots;
  int n_classes = 0;
  bool multi_label = false;
};

/// Mean loss over `batch` and its exact gradient.
std::pair<double, Gradients> grad(const ModelParams& model, const std::vector<LoraAdapter>& adapters,
                                  const std::vector<Sample>& batch, TrainableSet trainable,
                                  Rng* dropout_rng = nullptr);

double global_norm(const Gradients& g);
/// Rescales `g` so its global norm is at most clip_norm; returns the pre-clip norm.
double clip_global_norm(Gradients& g, double clip_norm);

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams model;
  std::vector<LoraAdapter> adapters;
  std::vector<TraceRow> trace;        // one row per optimizer step
  std::vector<double> sample_losses;  // one per input sample, in order
};

/// Adam with the lr_at schedule. Consumes `samples` in order, accumulating
/// cfg.accumulation micro-batches (batch size 1) per step and clipping the
/// global gradient norm before each update. `rng` drives adapter dropout.
TrainResult train(ModelParams model, std::vector<LoraAdapter> adapters,
                  const std::vector<Sample>& samples, const OptimConfig& cfg, TrainableSet trainable,
                  Rng& rng);

/// Decodes logits into the display-label string for the view's slot order.
/// Single-label: argmax slot. Multi-label: every slot with sigmoid > 0.5.
std::string predict(const RowVec<double>& logits, const TaskSpec& task, const LabelMapping& mapping);

void write_loss_trace(std::ostream& out, const std::vector<TraceRow>& trace);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelParams model;
  std::vector<LoraAdapter> adapters;
  std::uint64_t vocab_hash = 0;
  std::uint64_t seed = 0;
};

/// "ICLCKPT1", u32 version, u32 d, vocab, classes, slots, u64 vocab hash,
/// u64 seed, u32 adapter count with (target, rank, alpha, dropout) each, then
/// every tensor in canonical order as u32 rows, u32 cols and row-major
/// little-endian float64 values.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iclft::toy
