#pragma once

// Binary embedding index. All integers little-endian, floats IEEE-754 binary64.
//
//   header:  "LGKNIDX1" | u32 version (1) | u32 mode | u32 d | u32 delta | u32 pooled_dim
//            | 16 bytes checkpoint hash (hex ascii) | u64 count
//   record:  u32 id_len | id bytes | u32 n | n*d f64 H (row-major) | n*delta^2 i64 histograms
//            | f64 self_norm | pooled_dim f64 pooled vector
//
// mode: 0 GKN, 1 GEN, 3 GK (GMN has no index).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kernel.hpp"
#include "model.hpp"
#include "parallel.hpp"

namespace lgkn {

static_assert(std::endian::native == std::endian::little, "index format assumes a little-endian host");

struct EmbeddingIndex {
  Mode mode = Mode::GKN;
  int d = 0;
  int delta = kDefaultDelta;
  int pooled_dim = 0;
  std::string checkpoint_hash;
  std::vector<EmbeddedGraph> records;
};

inline constexpr char kIndexMagic[8] = {'L', 'G', 'K', 'N', 'I', 'D', 'X', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {
template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw MalformedInput(0, std::string("index truncated reading ") + what);
  return v;
}
}  // namespace detail

inline EmbeddingIndex build_index(const Model& m, std::span<const FloorPlanGraph> graphs, const KernelConfig& kcfg,
                                  const std::string& checkpoint_hash, int threads = 1) {
  EmbeddingIndex idx;
  idx.mode = m.config().mode;
  idx.d = m.config().embedding_dim();
  idx.delta = m.config().delta;
  idx.pooled_dim = idx.mode == Mode::GEN ? m.config().graph_dim() : 0;
  idx.checkpoint_hash = checkpoint_hash;
  idx.records.resize(graphs.size());
  if (idx.mode == Mode::GMN)
    throw Refused("cross-graph mode cannot precompute embeddings: GMN node states depend on the compared graph");
  parallel_for(graphs.size(), threads, [&](std::size_t i) { idx.records[i] = embed(m, graphs[i], kcfg); });
  return idx;
}

inline void write_index(const EmbeddingIndex& idx, std::ostream& out) {
  if (idx.checkpoint_hash.size() != 16) throw InvalidArgument("write_index: checkpoint hash must be 16 hex characters");
  out.write(kIndexMagic, 8);
  detail::put<std::uint32_t>(out, kIndexVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(idx.mode));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(idx.d));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(idx.delta));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(idx.pooled_dim));
  out.write(idx.checkpoint_hash.data(), 16);
  detail::put<std::uint64_t>(out, idx.records.size());
  const int cells = idx.delta * idx.delta;
  for (const auto& r : idx.records) {
    if (r.H.cols() != idx.d || r.hist.cols() != cells || r.hist.rows() != r.H.rows() ||
        r.pooled.size() != idx.pooled_dim)
      throw InvalidArgument("write_index: record '" + r.id + "' does not match the index header");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.id.size()));
    out.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.H.rows()));
    out.write(reinterpret_cast<const char*>(r.H.data()), static_cast<std::streamsize>(r.H.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(r.hist.data()),
              static_cast<std::streamsize>(r.hist.size() * sizeof(std::int64_t)));
    detail::put<double>(out, r.self_norm);
    out.write(reinterpret_cast<const char*>(r.pooled.data()),
              static_cast<std::streamsize>(r.pooled.size() * sizeof(double)));
  }
  if (!out) throw InvalidArgument("write_index: stream error");
}

// Reads and validates: header count must match and every self_norm must agree with a
// recomputation from H and the histograms within 1e-9.
inline EmbeddingIndex read_index(std::istream& in, const KernelConfig& kcfg) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kIndexMagic, 8) != 0) throw MalformedInput(0, "not an embedding index");
  EmbeddingIndex idx;
  if (detail::get<std::uint32_t>(in, "version") != kIndexVersion) throw MalformedInput(0, "unsupported index version");
  const auto mode = detail::get<std::uint32_t>(in, "mode");
  if (mode > static_cast<std::uint32_t>(Mode::GK) || mode == static_cast<std::uint32_t>(Mode::GMN))
    throw MalformedInput(0, "index has invalid mode");
  idx.mode = static_cast<Mode>(mode);
  idx.d = static_cast<int>(detail::get<std::uint32_t>(in, "d"));
  idx.delta = static_cast<int>(detail::get<std::uint32_t>(in, "delta"));
  idx.pooled_dim = static_cast<int>(detail::get<std::uint32_t>(in, "pooled_dim"));
  if (idx.d < 1 || idx.delta < 1 || idx.delta > 64) throw MalformedInput(0, "index header has invalid sizes");
  idx.checkpoint_hash.resize(16);
  if (!in.read(idx.checkpoint_hash.data(), 16)) throw MalformedInput(0, "index truncated reading hash");
  const auto count = detail::get<std::uint64_t>(in, "count");
  const int cells = idx.delta * idx.delta;
  const double mu = kcfg.mu_for(idx.d);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t rec = static_cast<std::size_t>(i + 1);
    EmbeddedGraph r;
    r.delta = idx.delta;
    const auto len = detail::get<std::uint32_t>(in, "id length");
    if (len > (1u << 20)) throw MalformedInput(rec, "index record id too long");
    r.id.resize(len);
    if (!in.read(r.id.data(), len)) throw MalformedInput(rec, "index truncated reading id");
    const auto n = detail::get<std::uint32_t>(in, "node count");
    if (n == 0 || n > 4096) throw MalformedInput(rec, "index record has invalid node count");
    r.H.resize(n, idx.d);
    r.hist.resize(n, cells);
    if (!in.read(reinterpret_cast<char*>(r.H.data()), static_cast<std::streamsize>(r.H.size() * sizeof(double))) ||
        !in.read(reinterpret_cast<char*>(r.hist.data()),
                 static_cast<std::streamsize>(r.hist.size() * sizeof(std::int64_t))))
      throw MalformedInput(rec, "index truncated reading embeddings");
    r.self_norm = detail::get<double>(in, "self_norm");
    r.pooled.resize(idx.pooled_dim);
    if (!in.read(reinterpret_cast<char*>(r.pooled.data()),
                 static_cast<std::streamsize>(r.pooled.size() * sizeof(double))))
      throw MalformedInput(rec, "index truncated reading pooled vector");
    const double expect = self_norm(r.H, r.hist, mu);
    if (!(std::abs(expect - r.self_norm) <= 1e-9 * std::max(1.0, std::abs(expect))))
      throw MalformedInput(rec, "index record '" + r.id + "' self_norm does not match its embeddings");
    idx.records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw MalformedInput(0, "index has trailing data beyond header count");
  return idx;
}

inline void save_index(const std::string& path, const EmbeddingIndex& idx) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write index '" + path + "'");
  write_index(idx, out);
}

inline EmbeddingIndex load_index(const std::string& path, const KernelConfig& kcfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open index '" + path + "'");
  return read_index(in, kcfg);
}

struct Ranked {
  std::string id;
  double score = 0;
  bool operator==(const Ranked&) const = default;
};

struct RankResult {
  std::string query;
  std::vector<Ranked> ranking;
};

// Top-k of the index against one embedded query. Scores non-increasing, ties by ascending id.
inline RankResult rank(const EmbeddingIndex& idx, const EmbeddedGraph& q, int k, const KernelConfig& kcfg) {
  if (k < 1) throw InvalidArgument("rank: k must be >= 1");
  RankResult out{q.id, {}};
  out.ranking.reserve(idx.records.size());
  for (const auto& r : idx.records) out.ranking.push_back({r.id, embedded_similarity(idx.mode, q, r, kcfg)});
  auto better = [](const Ranked& a, const Ranked& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; };
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), out.ranking.size());
  std::partial_sort(out.ranking.begin(), out.ranking.begin() + static_cast<std::ptrdiff_t>(keep), out.ranking.end(),
                    better);
  out.ranking.resize(keep);
  return out;
}

}  // namespace lgkn
