#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "iclft/labelmap.hpp"
#include "iclft/rng.hpp"
#include "iclft/task.hpp"

namespace iclft {

using EmbeddingVector = Eigen::VectorXd;

inline constexpr Eigen::Index kDefaultEmbeddingDim = 1024;
inline constexpr int kMaxShots = 5;

/// Pluggable text embedder. Implementations must be deterministic and keep a
/// fixed dimension.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Eigen::Index dimension() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Hashed bag-of-words with TF weighting and IDF weights fitted on a
/// candidate pool; L2-normalized when nonzero. Unfitted instances use IDF 1.
class HashedTfIdfEmbedder final : public TextEmbedder {
 public:
  explicit HashedTfIdfEmbedder(Eigen::Index dim = kDefaultEmbeddingDim);

  /// Smoothed IDF: ln((1 + N) / (1 + df)) + 1, per hash bucket.
  void fit(const std::vector<std::string_view>& documents);
  void fit(const std::vector<const Example*>& documents);

  Eigen::Index dimension() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;

  Eigen::Index bucket(std::string_view token) const;
  const Eigen::VectorXd& idf() const noexcept { return idf_; }

 private:
  Eigen::Index dim_;
  Eigen::VectorXd idf_;
};

/// u.v / (|u| |v|); 0 when either norm is 0. Throws on dimension mismatch.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

/// A few-shot example whose labels are already expressed in the display
/// names of the mapping in force for the enclosing prompt.
struct Demonstration {
  std::string example_id;
  std::string text;
  std::vector<std::string> display_labels;
  std::string mapping_ref;

  bool operator==(const Demonstration&) const = default;
};

struct RetrievalHit {
  const Example* example = nullptr;
  double score = 0.0;
};

/// Candidate pool with embeddings precomputed once; read-only afterwards.
class Retriever {
 public:
  /// The pool must not contain duplicate ids. Examples are copied.
  Retriever(std::vector<Example> pool, std::shared_ptr<const TextEmbedder> embedder);

  /// Top-k candidates by cosine to the query text, descending, ties by
  /// ascending id. Never returns the query id or anything in `exclude_ids`.
  std::vector<RetrievalHit> retrieve(const Example& query, std::size_t k,
                                     const std::set<std::string>& exclude_ids = {}) const;

  const std::vector<Example>& pool() const noexcept { return pool_; }
  const TextEmbedder& embedder() const noexcept { return *embedder_; }
  const std::vector<EmbeddingVector>& embeddings() const noexcept { return embeddings_; }

 private:
  std::vector<Example> pool_;
  std::shared_ptr<const TextEmbedder> embedder_;
  std::vector<EmbeddingVector> embeddings_;
};

/// Builds a TF-IDF retriever fitted on the union of `corpora`.
Retriever make_tfidf_retriever(const std::vector<const Corpus*>& corpora,
                               Eigen::Index dim = kDefaultEmbeddingDim);

/// Packages hits as demonstrations with labels remapped under `mapping`.
std::vector<Demonstration> package(const std::vector<RetrievalHit>& hits,
                                   const LabelMapping& mapping);

/// Uniform draw from {0, ..., kMaxShots}.
int sample_shot_count(Rng& rng);

using EmbeddingCache = std::vector<std::pair<std::string, EmbeddingVector>>;

/// Binary cache: "ICLEMB01", u32 dimension, u64 count, then per record a
/// u32-length-prefixed id and `dimension` little-endian float32 values.
void write_embedding_cache(const std::filesystem::path& path, const EmbeddingCache& cache);
EmbeddingCache read_embedding_cache(const std::filesystem::path& path);

}  // namespace iclft
