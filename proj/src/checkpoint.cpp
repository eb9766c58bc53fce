#include <fstream>

#include "iclft/binio.hpp"
#include "iclft/toymodel.hpp"

namespace iclft::toy {
namespace {

constexpr char kMagic[9] = "ICLCKPT1";
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& model = ckpt.model;
  const auto& adapters = ckpt.adapters;
  binio::put_magic(out, kMagic);
  binio::put_uint<std::uint32_t>(out, kVersion);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.vocab_size()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.n_classes()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.n_slots()));
  binio::put_uint<std::uint64_t>(out, ckpt.vocab_hash);
  binio::put_uint<std::uint64_t>(out, ckpt.seed);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(adapters.size()));
  for (const auto& a : adapters) {
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(a.target));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(a.rank()));
    binio::put_f64(out, a.alpha);
    binio::put_f64(out, a.dropout);
  }
  for (const auto& t : tensor_refs(model, adapters)) {
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    for (Eigen::Index i = 0; i < t.size(); ++i) binio::put_f64(out, t.data[i]);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  binio::expect_magic(in, kMagic);
  if (binio::get_uint<std::uint32_t>(in) != kVersion) throw ParseError("unsupported checkpoint version");
  const auto d = binio::get_uint<std::uint32_t>(in);
  const auto vocab = binio::get_uint<std::uint32_t>(in);
  const auto classes = binio::get_uint<std::uint32_t>(in);
  const auto slots = binio::get_uint<std::uint32_t>(in);
  if (d < 2 || vocab == 0 || classes == 0 || d > 4096 || vocab > (1u << 24) || classes > 4096 ||
      slots > 4096) {
    throw ParseError("checkpoint dimensions out of range");
  }
  Checkpoint ckpt;
  ckpt.vocab_hash = binio::get_uint<std::uint64_t>(in);
  ckpt.seed = binio::get_uint<std::uint64_t>(in);
  ckpt.model = init_model(static_cast<int>(d), static_cast<int>(vocab), static_cast<int>(classes),
                          static_cast<int>(slots), 0);
  const auto n_adapters = binio::get_uint<std::uint32_t>(in);
  if (n_adapters > 4) throw ParseError("checkpoint: too many adapters");
  for (std::uint32_t i = 0; i < n_adapters; ++i) {
    LoraAdapter a;
    const auto target = binio::get_uint<std::uint32_t>(in);
    if (target > 3) throw ParseError("checkpoint: bad adapter target");
    a.target = static_cast<LoraTarget>(target);
    const auto rank = binio::get_uint<std::uint32_t>(in);
    if (rank == 0) throw ParseError("checkpoint: bad adapter rank");
    a.alpha = binio::get_f64(in);
    a.dropout = binio::get_f64(in);
    a.a = Mat<double>::Zero(rank, d);
    a.b = Mat<double>::Zero(d, rank);
    ckpt.adapters.push_back(std::move(a));
  }
  for (auto& t : tensor_refs(ckpt.model, ckpt.adapters)) {
    const auto rows = binio::get_uint<std::uint32_t>(in);
    const auto cols = binio::get_uint<std::uint32_t>(in);
    if (rows != t.rows || cols != t.cols) throw ParseError("checkpoint: tensor shape mismatch for " + t.name);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = binio::get_f64(in);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace iclft::toy
