#include "iclft/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "iclft/binio.hpp"
#include "iclft/error.hpp"
#include "iclft/text.hpp"

namespace iclft {

HashedTfIdfEmbedder::HashedTfIdfEmbedder(Eigen::Index dim) : dim_(dim), idf_(Eigen::VectorXd::Ones(dim)) {
  if (dim < 1) throw ValidationError("embedding dimension must be positive");
}

Eigen::Index HashedTfIdfEmbedder::bucket(std::string_view token) const {
  return static_cast<Eigen::Index>(text::fnv1a(token) % static_cast<std::uint64_t>(dim_));
}

void HashedTfIdfEmbedder::fit(const std::vector<std::string_view>& documents) {
  Eigen::VectorXd df = Eigen::VectorXd::Zero(dim_);
  for (auto doc : documents) {
    std::vector<Eigen::Index> seen;
    for (const auto& w : text::words(doc)) seen.push_back(bucket(w));
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto b : seen) df[b] += 1.0;
  }
  const double n = static_cast<double>(documents.size());
  idf_ = ((1.0 + n) / (1.0 + df.array())).log() + 1.0;
}

void HashedTfIdfEmbedder::fit(const std::vector<const Example*>& documents) {
  std::vector<std::string_view> docs;
  docs.reserve(documents.size());
  for (const auto* ex : documents) docs.push_back(ex->text);
  fit(docs);
}

EmbeddingVector HashedTfIdfEmbedder::embed(std::string_view input) const {
  EmbeddingVector v = EmbeddingVector::Zero(dim_);
  for (const auto& w : text::words(input)) v[bucket(w)] += 1.0;
  v.array() *= idf_.array();
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine: dimension mismatch " + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()));
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

Retriever::Retriever(std::vector<Example> pool, std::shared_ptr<const TextEmbedder> embedder)
    : pool_(std::move(pool)), embedder_(std::move(embedder)) {
  std::set<std::string> ids;
  for (const auto& ex : pool_) {
    if (!ids.insert(ex.id).second) {
      throw ValidationError("retrieval pool has duplicate id '" + ex.id + "'");
    }
  }
  embeddings_.reserve(pool_.size());
  for (const auto& ex : pool_) embeddings_.push_back(embedder_->embed(ex.text));
}

std::vector<RetrievalHit> Retriever::retrieve(const Example& query, std::size_t k,
                                              const std::set<std::string>& exclude_ids) const {
  if (k == 0) return {};
  const EmbeddingVector q = embedder_->embed(query.text);
  std::vector<RetrievalHit> hits;
  hits.reserve(pool_.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    const auto& ex = pool_[i];
    if (ex.id == query.id || exclude_ids.count(ex.id)) continue;
    hits.push_back({&ex, cosine(q, embeddings_[i])});
  }
  const auto keep = std::min(k, hits.size());
  auto before = [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example->id < b.example->id;
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), before);
  hits.resize(keep);
  return hits;
}

Retriever make_tfidf_retriever(const std::vector<const Corpus*>& corpora, Eigen::Index dim) {
  std::vector<Example> pool;
  for (const auto* c : corpora) pool.insert(pool.end(), c->examples.begin(), c->examples.end());
  auto embedder = std::make_shared<HashedTfIdfEmbedder>(dim);
  std::vector<std::string_view> docs;
  for (const auto& ex : pool) docs.push_back(ex.text);
  embedder->fit(docs);
  return Retriever(std::move(pool), std::move(embedder));
}

std::vector<Demonstration> package(const std::vector<RetrievalHit>& hits,
                                   const LabelMapping& mapping) {
  std::vector<Demonstration> out;
  out.reserve(hits.size());
  const auto ref = mapping.fingerprint();
  for (const auto& h : hits) {
    out.push_back({h.example->id, h.example->text, remap_labels(mapping, h.example->labels), ref});
  }
  return out;
}

int sample_shot_count(Rng& rng) { return static_cast<int>(rng.uniform_index(kMaxShots + 1)); }

namespace {
constexpr char kCacheMagic[9] = "ICLEMB01";
}

void write_embedding_cache(const std::filesystem::path& path, const EmbeddingCache& cache) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t dim = cache.empty() ? 0 : static_cast<std::uint32_t>(cache.front().second.size());
  binio::put_magic(out, kCacheMagic);
  binio::put_uint<std::uint32_t>(out, dim);
  binio::put_uint<std::uint64_t>(out, cache.size());
  for (const auto& [id, vec] : cache) {
    if (static_cast<std::uint32_t>(vec.size()) != dim) {
      throw ValidationError("embedding cache: inconsistent dimension for '" + id + "'");
    }
    binio::put_string(out, id);
    for (Eigen::Index i = 0; i < vec.size(); ++i) binio::put_f32(out, static_cast<float>(vec[i]));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingCache read_embedding_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binio::expect_magic(in, kCacheMagic);
  const auto dim = binio::get_uint<std::uint32_t>(in);
  const auto count = binio::get_uint<std::uint64_t>(in);
  EmbeddingCache cache;
  for (std::uint64_t r = 0; r < count; ++r) {
    std::string id = binio::get_string(in);
    EmbeddingVector v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = binio::get_f32(in);
    cache.emplace_back(std::move(id), std::move(v));
  }
  return cache;
}

}  // namespace iclft
