#pragma once

// Shortest-path (GraphHopper) graph kernel on learned node embeddings:
//   k(G1, G2) = sum_u sum_v <M_u, M_v>_F * exp(-mu * ||h_u - h_v||^2)

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "graph.hpp"

namespace lgkn {

using ad::Matrix;
using ad::RowVector;

// One row per node: the node's delta x delta histogram flattened row-major.
using HistogramMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KernelConfig {
  std::optional<double> mu;  // unset means 1/d
  int delta = kDefaultDelta;

  double mu_for(Eigen::Index d) const {
    const double m = mu.value_or(1.0 / static_cast<double>(d));
    if (!(m > 0) || !std::isfinite(m)) throw InvalidArgument("KernelConfig: mu must be positive");
    return m;
  }
};

inline HistogramMatrix histogram_matrix(const std::vector<PathHistogram>& hist) {
  if (hist.empty()) return HistogramMatrix(0, 0);
  const int cells = hist[0].delta * hist[0].delta;
  HistogramMatrix m(static_cast<Eigen::Index>(hist.size()), cells);
  for (std::size_t u = 0; u < hist.size(); ++u)
    for (int c = 0; c < cells; ++c) m(static_cast<Eigen::Index>(u), c) = hist[u].m[c];
  return m;
}

// W(u, v) = <M_u, M_v>_F, accumulated in integers.
inline Matrix histogram_gram(const HistogramMatrix& a, const HistogramMatrix& b) {
  if (a.cols() != b.cols())
    throw InvalidArgument("histogram_gram: histogram sizes differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()) + " cells)");
  HistogramMatrix w = a * b.transpose();
  return w.cast<double>();
}

// Final node embeddings of one graph plus what query-time scoring needs.
struct EmbeddedGraph {
  std::string id;
  Matrix H;                  // |V| x d
  HistogramMatrix hist;      // |V| x delta^2
  int delta = kDefaultDelta;
  double self_norm = 0.0;    // sqrt(k(G, G))
  RowVector pooled;          // graph vector (GEN only, else empty)
};

inline double node_kernel(std::span<const double> hu, std::span<const double> hv, double mu) {
  if (hu.size() != hv.size())
    throw InvalidArgument("node_kernel: dimension mismatch " + std::to_string(hu.size()) + " vs " +
                          std::to_string(hv.size()));
  double d2 = 0;
  for (std::size_t i = 0; i < hu.size(); ++i) d2 += (hu[i] - hv[i]) * (hu[i] - hv[i]);
  return std::exp(-mu * d2);
}

inline double graph_kernel(const Matrix& h1, const HistogramMatrix& m1, const Matrix& h2, const HistogramMatrix& m2,
                           double mu) {
  if (h1.cols() != h2.cols())
    throw InvalidArgument("graph_kernel: embedding widths differ (" + std::to_string(h1.cols()) + " vs " +
                          std::to_string(h2.cols()) + ")");
  if (m1.cols() != m2.cols()) throw InvalidArgument("graph_kernel: histogram delta differs");
  if (h1.rows() != m1.rows() || h2.rows() != m2.rows())
    throw InvalidArgument("graph_kernel: embedding rows do not match histogram rows");
  const Eigen::Index cells = m1.cols();
  double k = 0;
  for (Eigen::Index u = 0; u < h1.rows(); ++u) {
    for (Eigen::Index v = 0; v < h2.rows(); ++v) {
      std::int64_t w = 0;
      for (Eigen::Index c = 0; c < cells; ++c) w += m1(u, c) * m2(v, c);
      if (w == 0) continue;
      k += static_cast<double>(w) * std::exp(-mu * (h1.row(u) - h2.row(v)).squaredNorm());
    }
  }
  return k;
}

inline void check_compatible(const EmbeddedGraph& a, const EmbeddedGraph& b, const KernelConfig& cfg) {
  if (a.delta != b.delta || a.delta != cfg.delta)
    throw InvalidArgument("graph_kernel: delta mismatch (" + std::to_string(a.delta) + ", " + std::to_string(b.delta) +
                          ", config " + std::to_string(cfg.delta) + ")");
  if (a.H.cols() != b.H.cols()) throw InvalidArgument("graph_kernel: embedding dimension mismatch");
}

inline double graph_kernel(const EmbeddedGraph& a, const EmbeddedGraph& b, const KernelConfig& cfg) {
  check_compatible(a, b, cfg);
  return graph_kernel(a.H, a.hist, b.H, b.hist, cfg.mu_for(a.H.cols()));
}

inline double self_norm(const Matrix& h, const HistogramMatrix& m, double mu) {
  return std::sqrt(graph_kernel(h, m, h, m, mu));
}

// k(a, b) / sqrt(k(a, a) k(b, b)) using the cached self norms.
inline double normalized_similarity(const EmbeddedGraph& a, const EmbeddedGraph& b, const KernelConfig& cfg) {
  return graph_kernel(a, b, cfg) / (a.self_norm * b.self_norm);
}

// Differentiable form; `weights` is histogram_gram of the two graphs.
inline ad::Tensor graph_kernel(const ad::Tensor& h1, const ad::Tensor& h2, const Matrix& weights, double mu) {
  if (weights.rows() != h1.rows() || weights.cols() != h2.rows())
    throw InvalidArgument("graph_kernel: weight matrix does not match embedding rows");
  return ad::frobenius_dot(ad::constant(weights), ad::exp(ad::scale(ad::sqdist(h1, h2), -mu)));
}

}  // namespace lgkn
