#pragma once

// Node encoder, message passing network, and the pooling / cross-graph heads used by the
// GEN and GMN baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "kernel.hpp"

namespace lgkn {

// GKN: kernel on node embeddings. GEN: pooled vectors. GMN: pooled vectors with
// cross-graph attention in every layer. GK: kernel on raw [category; shape] features.
enum class Mode { GKN, GEN, GMN, GK };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::GKN: return "GKN";
    case Mode::GEN: return "GEN";
    case Mode::GMN: return "GMN";
    case Mode::GK: return "GK";
  }
  return "?";
}

inline Mode parse_mode(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "GKN") return Mode::GKN;
  if (s == "GEN") return Mode::GEN;
  if (s == "GMN") return Mode::GMN;
  if (s == "GK") return Mode::GK;
  throw InvalidArgument("unknown mode '" + s + "' (expected GKN, GEN, GMN or GK)");
}

inline bool uses_pooling(Mode m) { return m == Mode::GEN || m == Mode::GMN; }

struct ModelConfig {
  Mode mode = Mode::GKN;
  int d = 64;
  int layers = 5;
  int d_g = 0;  // 0 means 2d
  bool layer_norm = true;
  bool batch_norm = true;
  std::uint64_t seed = 0;
  int delta = kDefaultDelta;

  int graph_dim() const { return d_g > 0 ? d_g : 2 * d; }
  int embedding_dim() const { return mode == Mode::GK ? kNumCategories + kShapeDim : d; }
};

inline void check(const ModelConfig& c) {
  if (c.d < 1) throw InvalidArgument("ModelConfig: d must be >= 1");
  if (c.layers < 0) throw InvalidArgument("ModelConfig: layers must be >= 0");
  if (c.d_g < 0) throw InvalidArgument("ModelConfig: d_g must be >= 0");
  if (c.delta < 1) throw InvalidArgument("ModelConfig: delta must be >= 1");
}

struct Linear {
  ad::Tensor w, b;  // in x out, 1 x out
};

// Two layers with a relu in between; hidden width equals the output width.
struct Mlp {
  Linear hidden, out;
};

struct Affine {
  ad::Tensor gamma, beta;
};

// Standard GRU cell; gate blocks are ordered [reset | update | candidate].
struct GruCell {
  ad::Tensor w_x, b_x, w_h, b_h;
};

struct PropLayer {
  Mlp intra;
  Affine norm;
  GruCell gru;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    check(cfg_);
    if (cfg_.mode == Mode::GK) return;
    std::mt19937_64 rng(cfg_.seed);
    const int d = cfg_.d;
    f_cat = make_mlp(kNumCategories, d, rng);
    f_shape = make_mlp(kShapeDim, d, rng);
    f_edge = make_mlp(kEdgeDim, d, rng);
    f_node = make_mlp(2 * d, d, rng);
    if (cfg_.layer_norm) {
      ln_cat = make_affine(d), ln_shape = make_affine(d), ln_edge = make_affine(d), ln_node = make_affine(d);
    }
    self_edge = ad::Tensor(uniform(1, kEdgeDim, 0.0, 1.0, rng), true);
    const int gru_in = cfg_.mode == Mode::GMN ? 2 * d : d;
    for (int l = 0; l < cfg_.layers; ++l) {
      PropLayer layer;
      layer.intra = make_mlp(3 * d, d, rng);
      if (cfg_.batch_norm) layer.norm = make_affine(d);
      const double bx = 1.0 / std::sqrt(static_cast<double>(d));
      layer.gru.w_x = ad::Tensor(uniform(gru_in, 3 * d, -bx, bx, rng), true);
      layer.gru.b_x = ad::Tensor(uniform(1, 3 * d, -bx, bx, rng), true);
      layer.gru.w_h = ad::Tensor(uniform(d, 3 * d, -bx, bx, rng), true);
      layer.gru.b_h = ad::Tensor(uniform(1, 3 * d, -bx, bx, rng), true);
      layers.push_back(std::move(layer));
      bn_states.emplace_back(d);
    }
    if (uses_pooling(cfg_.mode)) {
      pool_gate = make_mlp(d, cfg_.graph_dim(), rng, d);
      pool_transform = make_mlp(d, cfg_.graph_dim(), rng, d);
    }
  }

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    if (cfg_.mode == Mode::GK) return out;
    auto mlp = [&](const std::string& n, const Mlp& m) {
      out.push_back({n + ".hidden.w", m.hidden.w});
      out.push_back({n + ".hidden.b", m.hidden.b});
      out.push_back({n + ".out.w", m.out.w});
      out.push_back({n + ".out.b", m.out.b});
    };
    auto affine = [&](const std::string& n, const Affine& a) {
      out.push_back({n + ".gamma", a.gamma});
      out.push_back({n + ".beta", a.beta});
    };
    mlp("f_cat", f_cat);
    mlp("f_shape", f_shape);
    mlp("f_edge", f_edge);
    mlp("f_node", f_node);
    if (cfg_.layer_norm) {
      affine("ln_cat", ln_cat);
      affine("ln_shape", ln_shape);
      affine("ln_edge", ln_edge);
      affine("ln_node", ln_node);
    }
    out.push_back({"self_edge", self_edge});
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l);
      mlp(p + ".f_intra", layers[l].intra);
      if (cfg_.batch_norm) affine(p + ".bn", layers[l].norm);
      out.push_back({p + ".gru.w_x", layers[l].gru.w_x});
      out.push_back({p + ".gru.b_x", layers[l].gru.b_x});
      out.push_back({p + ".gru.w_h", layers[l].gru.w_h});
      out.push_back({p + ".gru.b_h", layers[l].gru.b_h});
    }
    if (uses_pooling(cfg_.mode)) {
      mlp("pool.gate", pool_gate);
      mlp("pool.transform", pool_transform);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += static_cast<std::size_t>(p.tensor.value().size());
    return n;
  }

  void zero_grad() const {
    for (auto p : parameters()) p.tensor.zero_grad();
  }

  // Parameter values and running statistics, for best-epoch bookkeeping.
  struct Snapshot {
    std::vector<Matrix> params;
    std::vector<ad::BatchNormState> bn;
  };
  Snapshot snapshot() const {
    Snapshot s;
    for (const auto& p : parameters()) s.params.push_back(p.tensor.value());
    s.bn = bn_states;
    return s;
  }
  void restore(const Snapshot& s) {
    auto ps = parameters();
    if (ps.size() != s.params.size()) throw InvalidArgument("Model::restore: snapshot layout mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].tensor.mutable_value() = s.params[i];
    bn_states = s.bn;
  }

  Mlp f_cat, f_shape, f_edge, f_node;
  Affine ln_cat, ln_shape, ln_edge, ln_node;
  ad::Tensor self_edge;  // learned 1 x 2 edge vector for a node's message to itself
  std::vector<PropLayer> layers;
  std::vector<ad::BatchNormState> bn_states;
  Mlp pool_gate, pool_transform;

 private:
  static Matrix uniform(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  }
  // Fan-in scaled uniform init, bound 1/sqrt(fan_in).
  static Linear make_linear(int in, int out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return {ad::Tensor(uniform(in, out, -bound, bound, rng), true),
            ad::Tensor(uniform(1, out, -bound, bound, rng), true)};
  }
  static Mlp make_mlp(int in, int out, std::mt19937_64& rng, int hidden = -1) {
    if (hidden < 0) hidden = out;
    Mlp m;
    m.hidden = make_linear(in, hidden, rng);
    m.out = make_linear(hidden, out, rng);
    return m;
  }
  static Affine make_affine(int d) {
    return {ad::Tensor(Matrix::Ones(1, d), true), ad::Tensor(Matrix::Zero(1, d), true)};
  }

  ModelConfig cfg_;
};

// Closed-form parameter count for a configuration.
inline std::size_t parameter_count(const ModelConfig& c) {
  if (c.mode == Mode::GK) return 0;
  const std::size_t d = static_cast<std::size_t>(c.d);
  auto mlp = [](std::size_t in, std::size_t hidden, std::size_t out) { return in * hidden + hidden + hidden * out + out; };
  std::size_t n = mlp(kNumCategories, d, d) + mlp(kShapeDim, d, d) + mlp(kEdgeDim, d, d) + mlp(2 * d, d, d);
  if (c.layer_norm) n += 4 * 2 * d;
  n += kEdgeDim;
  const std::size_t gru_in = c.mode == Mode::GMN ? 2 * d : d;
  const std::size_t per_layer = mlp(3 * d, d, d) + (c.batch_norm ? 2 * d : 0) + gru_in * 3 * d + 3 * d + d * 3 * d + 3 * d;
  n += per_layer * static_cast<std::size_t>(c.layers);
  if (uses_pooling(c.mode)) n += 2 * mlp(d, d, static_cast<std::size_t>(c.graph_dim()));
  return n;
}

// Disjoint union of graphs with the gather/scatter indices message passing needs.
struct GraphBatch {
  int num_graphs = 0;
  int num_nodes = 0;
  std::vector<int> offset;      // first node of each graph; size num_graphs + 1
  std::vector<int> node_graph;  // owning graph of each node
  Matrix categories;            // N x 8 one-hot
  Matrix shapes;                // N x 6
  Matrix edge_features;         // one row per directed edge
  // One message row per (target, source) pair: the self message first, then neighbors by index.
  // msg_edge indexes edge_features, or equals edge_features.rows() for the self message.
  std::vector<int> msg_target, msg_source, msg_edge;

  int graph_size(int g) const { return offset[g + 1] - offset[g]; }
};

inline GraphBatch make_batch(std::span<const FloorPlanGraph* const> graphs) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  b.offset.push_back(0);
  int directed = 0;
  for (const auto* g : graphs) {
    b.num_nodes += g->size();
    b.offset.push_back(b.num_nodes);
    directed += 2 * static_cast<int>(g->edges.size());
  }
  b.categories = Matrix::Zero(b.num_nodes, kNumCategories);
  b.shapes = Matrix::Zero(b.num_nodes, kShapeDim);
  b.edge_features = Matrix::Zero(directed, kEdgeDim);
  b.node_graph.reserve(static_cast<std::size_t>(b.num_nodes));
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const FloorPlanGraph& g = *graphs[gi];
    const int base = b.offset[gi];
    for (int u = 0; u < g.size(); ++u) {
      b.node_graph.push_back(gi);
      b.categories(base + u, static_cast<int>(g.nodes[u].category)) = 1.0;
      auto s = g.nodes[u].shape.as_vector();
      for (int k = 0; k < kShapeDim; ++k) b.shapes(base + u, k) = s[k];
    }
  }
  int edge_row = 0;
  std::vector<std::pair<int, int>> self_slots;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const FloorPlanGraph& g = *graphs[gi];
    const int base = b.offset[gi];
    Adjacency adj(g);
    for (int u = 0; u < g.size(); ++u) {
      b.msg_target.push_back(base + u);
      b.msg_source.push_back(base + u);
      b.msg_edge.push_back(-1);
      for (auto [v, kind] : adj.out[u]) {
        auto ev = edge_vector(kind);
        b.edge_features(edge_row, 0) = ev[0];
        b.edge_features(edge_row, 1) = ev[1];
        b.msg_target.push_back(base + u);
        b.msg_source.push_back(base + v);
        b.msg_edge.push_back(edge_row++);
      }
    }
  }
  for (int& e : b.msg_edge)
    if (e < 0) e = directed;
  return b;
}

inline GraphBatch make_batch(const FloorPlanGraph& g) {
  const FloorPlanGraph* p = &g;
  return make_batch(std::span<const FloorPlanGraph* const>(&p, 1));
}

// Raw node features [one-hot category; shape] used by the untrained kernel baseline.
inline Matrix raw_node_features(const GraphBatch& b) {
  Matrix x(b.num_nodes, kNumCategories + kShapeDim);
  x << b.categories, b.shapes;
  return x;
}

inline ad::Tensor linear(const Linear& l, const ad::Tensor& x) { return ad::add(ad::matmul(x, l.w), l.b); }

inline ad::Tensor mlp(const Mlp& m, const ad::Tensor& x) { return linear(m.out, ad::relu(linear(m.hidden, x))); }

namespace detail {
inline ad::Tensor encoder_out(const Model& m, const Mlp& f, const Affine& ln, const ad::Tensor& x) {
  ad::Tensor y = mlp(f, x);
  return m.config().layer_norm ? ad::layernorm(y, ln.gamma, ln.beta) : y;
}
}  // namespace detail

// h0 = f_node([f_cat(c); f_shape(s)]) per node.
inline ad::Tensor encode_nodes(const Model& m, const GraphBatch& b) {
  ad::Tensor c = detail::encoder_out(m, m.f_cat, m.ln_cat, ad::constant(b.categories));
  ad::Tensor s = detail::encoder_out(m, m.f_shape, m.ln_shape, ad::constant(b.shapes));
  return detail::encoder_out(m, m.f_node, m.ln_node, ad::concat_cols({c, s}));
}

// Encoded edge vector for every message row (self rows use the learned self-edge vector).
inline ad::Tensor encode_message_edges(const Model& m, const GraphBatch& b) {
  ad::Tensor inputs = ad::concat_rows({ad::constant(b.edge_features), m.self_edge});
  ad::Tensor enc = detail::encoder_out(m, m.f_edge, m.ln_edge, inputs);
  return ad::gather_rows(enc, b.msg_edge);
}

inline ad::Tensor gru_cell(const GruCell& c, const ad::Tensor& input, const ad::Tensor& state) {
  const Eigen::Index d = state.cols();
  ad::Tensor gx = linear({c.w_x, c.b_x}, input);
  ad::Tensor gh = linear({c.w_h, c.b_h}, state);
  ad::Tensor r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, d), ad::slice_cols(gh, 0, d)));
  ad::Tensor z = ad::sigmoid(ad::add(ad::slice_cols(gx, d, d), ad::slice_cols(gh, d, d)));
  ad::Tensor n = ad::tanh(ad::add(ad::slice_cols(gx, 2 * d, d), ad::mul(r, ad::slice_cols(gh, 2 * d, d))));
  // (1 - z) * n + z * h
  return ad::add(n, ad::mul(z, ad::sub(state, n)));
}

// Cross-graph message for one pair: a = softmax_v(h_u . h_v), mc_u = h_u - sum_v a_uv h_v.
inline std::pair<ad::Tensor, ad::Tensor> cross_message(const ad::Tensor& h1, const ad::Tensor& h2) {
  if (h1.rows() == 0 || h2.rows() == 0) throw InvalidArgument("cross_message: empty graph");
  ad::Tensor s = ad::matmul(h1, ad::transpose(h2));
  ad::Tensor a12 = ad::softmax_rows(s);
  ad::Tensor a21 = ad::softmax_rows(ad::transpose(s));
  return {ad::sub(h1, ad::matmul(a12, h2)), ad::sub(h2, ad::matmul(a21, h1))};
}

// Batched cross message over graph pairs of a batch (fused forward and backward).
// Nodes of graphs that are in no pair receive a zero message.
inline ad::Tensor cross_message(const ad::Tensor& h, const GraphBatch& b, std::vector<std::pair<int, int>> pairs) {
  using ad::Matrix;
  const Eigen::Index d = h.cols();
  Matrix out = Matrix::Zero(h.rows(), d);
  struct Block {
    int o1, n1, o2, n2;
    Matrix a12, a21;
  };
  std::vector<Block> blocks;
  auto softmax = [](Matrix m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m.row(i).array() -= m.row(i).maxCoeff();
      m.row(i) = m.row(i).array().exp().matrix();
      m.row(i) /= m.row(i).sum();
    }
    return m;
  };
  for (auto [g1, g2] : pairs) {
    Block blk{b.offset[g1], b.graph_size(g1), b.offset[g2], b.graph_size(g2), {}, {}};
    auto h1 = h.value().middleRows(blk.o1, blk.n1);
    auto h2 = h.value().middleRows(blk.o2, blk.n2);
    Matrix s = h1 * h2.transpose();
    blk.a12 = softmax(s);
    blk.a21 = softmax(s.transpose());
    out.middleRows(blk.o1, blk.n1) = h1 - blk.a12 * h2;
    out.middleRows(blk.o2, blk.n2) = h2 - blk.a21 * h1;
    blocks.push_back(std::move(blk));
  }
  return ad::detail::emit(std::move(out), h.requires_grad(), [h, blocks = std::move(blocks)](const Matrix& g) {
    auto softmax_back = [](const Matrix& p, const Matrix& dp) {
      Eigen::VectorXd dot = dp.cwiseProduct(p).rowwise().sum();
      return Matrix(p.array() * (dp.array().colwise() - dot.array()));
    };
    for (const Block& blk : blocks) {
      auto h1 = h.value().middleRows(blk.o1, blk.n1);
      auto h2 = h.value().middleRows(blk.o2, blk.n2);
      auto g1 = g.middleRows(blk.o1, blk.n1);
      auto g2 = g.middleRows(blk.o2, blk.n2);
      Matrix dh1 = g1, dh2 = g2;
      // mc1 = h1 - a12 h2, a12 = softmax(S), S = h1 h2^T
      dh2.noalias() -= blk.a12.transpose() * g1;
      Matrix ds12 = softmax_back(blk.a12, -g1 * h2.transpose());
      // mc2 = h2 - a21 h1, a21 = softmax(S^T)
      dh1.noalias() -= blk.a21.transpose() * g2;
      Matrix ds21 = softmax_back(blk.a21, -g2 * h1.transpose());
      Matrix ds = ds12 + ds21.transpose();  // total dL/dS
      dh1.noalias() += ds * h2;
      dh2.noalias() += ds.transpose() * h1;
      h.grad().middleRows(blk.o1, blk.n1) += dh1;
      h.grad().middleRows(blk.o2, blk.n2) += dh2;
    }
  });
}

// Running statistics to update during training; null in evaluation.
using TrainStats = std::vector<ad::BatchNormState>*;

// h_{l+1} = GRU(state = h_l, input = BN(mean over ne(u) and u of f_intra([h_u; h_v; r_uv]))).
// In GMN mode the GRU input is [message; cross message].
inline ad::Tensor message_pass(const Model& m, const GraphBatch& b, const ad::Tensor& h, const ad::Tensor& edge_enc,
                               int layer, TrainStats train_stats = nullptr,
                               const std::vector<std::pair<int, int>>* pairs = nullptr) {
  if (h.rows() != b.num_nodes || h.cols() != m.config().d)
    throw InvalidArgument("message_pass: hidden state " + h.shape_str() + " does not match batch of " +
                          std::to_string(b.num_nodes) + " nodes with d=" + std::to_string(m.config().d));
  const PropLayer& p = m.layers.at(static_cast<std::size_t>(layer));
  ad::Tensor x = ad::concat_cols({ad::gather_rows(h, b.msg_target), ad::gather_rows(h, b.msg_source), edge_enc});
  ad::Tensor msg = ad::segment_mean(mlp(p.intra, x), b.msg_target, b.num_nodes);
  if (m.config().batch_norm) {
    msg = train_stats ? ad::batchnorm(msg, p.norm.gamma, p.norm.beta, (*train_stats)[layer], true)
                      : ad::batchnorm_eval(msg, p.norm.gamma, p.norm.beta, m.bn_states[layer]);
  }
  if (m.config().mode == Mode::GMN) {
    if (pairs == nullptr) throw InvalidArgument("message_pass: GMN mode needs graph pairs");
    msg = ad::concat_cols({msg, cross_message(h, b, *pairs)});
  }
  return gru_cell(p.gru, msg, h);
}

// Final node embeddings H = h_L for every node of the batch.
inline ad::Tensor node_embeddings(const Model& m, const GraphBatch& b, TrainStats train_stats = nullptr,
                                  const std::vector<std::pair<int, int>>* pairs = nullptr) {
  if (m.config().mode == Mode::GK) return ad::constant(raw_node_features(b));
  ad::Tensor h = encode_nodes(m, b);
  if (m.layers.empty()) return h;
  ad::Tensor edge_enc = encode_message_edges(m, b);
  for (int l = 0; l < static_cast<int>(m.layers.size()); ++l) h = message_pass(m, b, h, edge_enc, l, train_stats, pairs);
  return h;
}

// Gated sum per graph: sum_u sigmoid(gate(h_u)) * transform(h_u). Returns num_graphs x d_g.
inline ad::Tensor pool(const Model& m, const ad::Tensor& h, const GraphBatch& b) {
  if (!uses_pooling(m.config().mode)) throw InvalidArgument("pool: mode " + to_string(m.config().mode) + " has no pooling head");
  ad::Tensor gated = ad::mul(ad::sigmoid(mlp(m.pool_gate, h)), mlp(m.pool_transform, h));
  return ad::segment_sum(gated, b.node_graph, b.num_graphs);
}

// Single-graph pooling of an embedding matrix.
inline ad::Tensor pool(const Model& m, const ad::Tensor& h) {
  if (h.rows() == 0) throw InvalidArgument("pool: empty embedding matrix");
  ad::Tensor gated = ad::mul(ad::sigmoid(mlp(m.pool_gate, h)), mlp(m.pool_transform, h));
  return ad::segment_sum(gated, std::vector<int>(static_cast<std::size_t>(h.rows()), 0), 1);
}

// Independent embedding of one graph in evaluation mode (no tape, running BN statistics).
inline EmbeddedGraph embed(const Model& m, const FloorPlanGraph& g, const KernelConfig& kcfg = {}) {
  if (m.config().mode == Mode::GMN)
    throw Refused("cross-graph mode cannot precompute embeddings: GMN node states depend on the compared graph");
  if (kcfg.delta != m.config().delta) throw InvalidArgument("embed: kernel delta differs from model delta");
  ad::NoGradScope no_grad;
  GraphBatch b = make_batch(g);
  ad::Tensor h = node_embeddings(m, b);
  EmbeddedGraph e;
  e.id = g.id;
  e.H = h.value();
  e.delta = m.config().delta;
  e.hist = histogram_matrix(shortest_path_histograms(g, e.delta));
  e.self_norm = self_norm(e.H, e.hist, kcfg.mu_for(e.H.cols()));
  if (m.config().mode == Mode::GEN) e.pooled = pool(m, h).value().row(0);
  return e;
}

// Pooled vectors of a pair after joint (cross-attending) propagation. GMN only.
inline std::pair<RowVector, RowVector> gmn_pair_vectors(const Model& m, const FloorPlanGraph& g1,
                                                        const FloorPlanGraph& g2) {
  if (m.config().mode != Mode::GMN) throw InvalidArgument("gmn_pair_vectors: model is not GMN");
  ad::NoGradScope no_grad;
  const FloorPlanGraph* gs[2] = {&g1, &g2};
  GraphBatch b = make_batch(std::span<const FloorPlanGraph* const>(gs, 2));
  std::vector<std::pair<int, int>> pairs{{0, 1}};
  ad::Tensor h = node_embeddings(m, b, nullptr, &pairs);
  Matrix v = pool(m, h, b).value();
  return {v.row(0), v.row(1)};
}

// Similarity of precomputed embeddings: normalized kernel (GKN, GK) or negative distance (GEN).
inline double embedded_similarity(Mode mode, const EmbeddedGraph& a, const EmbeddedGraph& b, const KernelConfig& k) {
  if (mode == Mode::GEN) return -(a.pooled - b.pooled).norm();
  if (mode == Mode::GMN) throw Refused("cross-graph mode cannot score precomputed embeddings");
  return normalized_similarity(a, b, k);
}

// Similarity computed from scratch for any mode.
inline double pair_similarity(const Model& m, const FloorPlanGraph& g1, const FloorPlanGraph& g2,
                              const KernelConfig& k = {}) {
  if (m.config().mode == Mode::GMN) {
    auto [v1, v2] = gmn_pair_vectors(m, g1, g2);
    return -(v1 - v2).norm();
  }
  return embedded_similarity(m.config().mode, embed(m, g1, k), embed(m, g2, k), k);
}

}  // namespace lgkn
