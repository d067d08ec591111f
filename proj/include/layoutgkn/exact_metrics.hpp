#pragma once

// Ground-truth similarity oracles (exact GED / sGED, rasterized MIoU) and ranking metrics.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"

namespace lgkn {

struct EditCostModel {
  double node_sub = 1.0, node_ins = 1.0, node_del = 1.0;
  double edge_sub = 1.0, edge_ins = 1.0, edge_del = 1.0;
};

inline void check(const EditCostModel& c) {
  for (double x : {c.node_sub, c.node_ins, c.node_del, c.edge_sub, c.edge_ins, c.edge_del})
    if (!(x >= 0) || !std::isfinite(x)) throw InvalidArgument("EditCostModel: costs must be finite and >= 0");
  if (c.node_ins != c.node_del || c.edge_ins != c.edge_del)
    throw InvalidArgument("EditCostModel: insertion and deletion costs must match");
}

struct GedOptions {
  int max_total_nodes = 20;
};

namespace detail {

// Cheapest way to turn multiset a into multiset b when labels may be freely paired.
template <std::size_t K>
double multiset_cost(const std::array<int, K>& a, const std::array<int, K>& b, double sub, double del, double ins) {
  int na = 0, nb = 0, same = 0;
  for (std::size_t k = 0; k < K; ++k) {
    na += a[k];
    nb += b[k];
    same += std::min(a[k], b[k]);
  }
  const int r1 = na - same, r2 = nb - same, crossed = std::min(r1, r2);
  return crossed * std::min(sub, del + ins) + (r1 - crossed) * del + (r2 - crossed) * ins;
}

class GedSearch {
 public:
  GedSearch(const FloorPlanGraph& g1, const FloorPlanGraph& g2, const EditCostModel& c)
      : c_(c), n1_(g1.size()), n2_(g2.size()) {
    label1_.resize(n1_);
    label2_.resize(n2_);
    for (int i = 0; i < n1_; ++i) label1_[i] = static_cast<int>(g1.nodes[i].category);
    for (int i = 0; i < n2_; ++i) label2_[i] = static_cast<int>(g2.nodes[i].category);
    e1_.assign(n1_ * n1_, -1);
    e2_.assign(n2_ * n2_, -1);
    for (const auto& e : g1.edges) e1_[e.u * n1_ + e.v] = e1_[e.v * n1_ + e.u] = static_cast<int>(e.kind);
    for (const auto& e : g2.edges) {
      e2_[e.u * n2_ + e.v] = e2_[e.v * n2_ + e.u] = static_cast<int>(e.kind);
      edges2_.push_back(e);
    }
    order_ = search_order(g1);
    // Label/edge-kind counts of the still-unassigned part of g1 at each depth.
    suffix_nodes_.assign(n1_ + 1, {});
    suffix_edges_.assign(n1_ + 1, {});
    std::vector<int> depth_of(n1_);
    for (int k = 0; k < n1_; ++k) depth_of[order_[k]] = k;
    for (int k = n1_ - 1; k >= 0; --k) {
      suffix_nodes_[k] = suffix_nodes_[k + 1];
      suffix_nodes_[k][label1_[order_[k]]]++;
    }
    for (int k = 0; k <= n1_; ++k)
      for (const auto& e : g1.edges)
        if (std::max(depth_of[e.u], depth_of[e.v]) >= k) suffix_edges_[k][static_cast<int>(e.kind)]++;
    map_.assign(n1_, -1);
  }

  double run() {
    best_ = greedy_upper_bound();
    dfs(0, 0u, 0.0);
    return best_;
  }

 private:
  static constexpr int kDeleted = -2;

  // BFS from the highest-degree node so that edge costs materialize early.
  static std::vector<int> search_order(const FloorPlanGraph& g) {
    const int n = g.size();
    std::vector<int> deg(n, 0);
    for (const auto& e : g.edges) deg[e.u]++, deg[e.v]++;
    Adjacency adj(g);
    std::vector<int> order;
    std::vector<char> seen(n, 0);
    while (static_cast<int>(order.size()) < n) {
      int start = -1;
      for (int i = 0; i < n; ++i)
        if (!seen[i] && (start < 0 || deg[i] > deg[start])) start = i;
      std::vector<int> queue{start};
      seen[start] = 1;
      for (std::size_t h = 0; h < queue.size(); ++h) {
        order.push_back(queue[h]);
        for (auto [v, kind] : adj.out[queue[h]])
          if (!seen[v]) {
            seen[v] = 1;
            queue.push_back(v);
          }
      }
    }
    return order;
  }

  double edge_pair_cost(int k1, int k2) const {
    if (k1 < 0 && k2 < 0) return 0.0;
    if (k1 < 0) return c_.edge_ins;
    if (k2 < 0) return c_.edge_del;
    return k1 == k2 ? 0.0 : c_.edge_sub;
  }

  // Cost of assigning order_[depth] -> target given the assignments of shallower nodes.
  double step_cost(int depth, int target) const {
    const int u = order_[depth];
    double cost = 0;
    if (target == kDeleted)
      cost += c_.node_del;
    else if (label1_[u] != label2_[target])
      cost += c_.node_sub;
    for (int j = 0; j < depth; ++j) {
      const int w = order_[j];
      const int k1 = e1_[u * n1_ + w];
      const int mw = map_[w];
      const int k2 = (target == kDeleted || mw == kDeleted) ? -1 : e2_[target * n2_ + mw];
      cost += edge_pair_cost(k1, k2);
    }
    return cost;
  }

  // Everything left in g2 once all of g1 is assigned gets inserted.
  double completion_cost(std::uint32_t used) const {
    double cost = 0;
    for (int v = 0; v < n2_; ++v)
      if (!(used >> v & 1u)) cost += c_.node_ins;
    for (const auto& e : edges2_)
      if (!(used >> e.u & 1u) || !(used >> e.v & 1u)) cost += c_.edge_ins;
    return cost;
  }

  double lower_bound(int depth, std::uint32_t used) const {
    std::array<int, kNumCategories> nodes2{};
    std::array<int, 2> edges2{};
    for (int v = 0; v < n2_; ++v)
      if (!(used >> v & 1u)) nodes2[label2_[v]]++;
    for (const auto& e : edges2_)
      if (!(used >> e.u & 1u) || !(used >> e.v & 1u)) edges2[static_cast<int>(e.kind)]++;
    return multiset_cost(suffix_nodes_[depth], nodes2, c_.node_sub, c_.node_del, c_.node_ins) +
           multiset_cost(suffix_edges_[depth], edges2, c_.edge_sub, c_.edge_del, c_.edge_ins);
  }

  double greedy_upper_bound() {
    std::uint32_t used = 0;
    double total = 0;
    for (int depth = 0; depth < n1_; ++depth) {
      int best_target = kDeleted;
      double best_cost = step_cost(depth, kDeleted);
      for (int v = 0; v < n2_; ++v) {
        if (used >> v & 1u) continue;
        const double c = step_cost(depth, v);
        if (c < best_cost) best_cost = c, best_target = v;
      }
      map_[order_[depth]] = best_target;
      if (best_target != kDeleted) used |= 1u << best_target;
      total += best_cost;
    }
    total += completion_cost(used);
    std::fill(map_.begin(), map_.end(), -1);
    return total;
  }

  void dfs(int depth, std::uint32_t used, double g) {
    if (depth == n1_) {
      best_ = std::min(best_, g + completion_cost(used));
      return;
    }
    if (g + lower_bound(depth, used) >= best_ - 1e-12) return;
    const int u = order_[depth];
    for (int v = 0; v <= n2_; ++v) {
      const int target = (v == n2_) ? kDeleted : v;
      if (target != kDeleted && (used >> v & 1u)) continue;
      const double step = step_cost(depth, target);
      if (g + step >= best_ - 1e-12) continue;
      map_[u] = target;
      dfs(depth + 1, target == kDeleted ? used : (used | 1u << v), g + step);
      map_[u] = -1;
    }
  }

  EditCostModel c_;
  int n1_, n2_;
  std::vector<int> label1_, label2_, e1_, e2_, order_, map_;
  std::vector<Edge> edges2_;
  std::vector<std::array<int, kNumCategories>> suffix_nodes_;
  std::vector<std::array<int, 2>> suffix_edges_;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace detail

// Exact graph edit distance by depth-first branch and bound. Node labels are room
// categories, edge labels are door/wall; shapes and polygons play no role.
inline double ged(const FloorPlanGraph& g1, const FloorPlanGraph& g2, const EditCostModel& costs = {},
                  const GedOptions& opts = {}) {
  check(costs);
  const int total = g1.size() + g2.size();
  if (total > opts.max_total_nodes)
    throw Refused("ged: " + std::to_string(total) + " total nodes exceeds exact-search cap of " +
                  std::to_string(opts.max_total_nodes));
  if (g1.size() > 31 || g2.size() > 31) throw Refused("ged: graphs above 31 nodes are not supported");
  return detail::GedSearch(g1, g2, costs).run();
}

inline double sged_from_ged(double ged_value, int n1, int n2) {
  return std::exp(-ged_value / static_cast<double>(n1 + n2));
}

inline double sged(const FloorPlanGraph& g1, const FloorPlanGraph& g2, const EditCostModel& costs = {},
                   const GedOptions& opts = {}) {
  return sged_from_ged(ged(g1, g2, costs, opts), g1.size(), g2.size());
}

struct RasterConfig {
  int resolution = 128;
};

// Per-category occupancy bitsets of a plan drawn into the unit box [-0.5, 0.5]^2.
struct CategoryRaster {
  int resolution = 0;
  std::array<std::vector<std::uint64_t>, kNumCategories> masks;
  std::array<std::int64_t, kNumCategories> area{};
};

inline bool point_in_polygon(const std::vector<Point>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

// Pixel centers are sampled; rooms later in node order overwrite earlier ones.
inline CategoryRaster rasterize(const FloorPlanGraph& g, const RasterConfig& cfg = {}) {
  if (cfg.resolution < 8) throw InvalidArgument("RasterConfig: resolution must be >= 8");
  const int r = cfg.resolution;
  std::vector<std::int8_t> label(static_cast<std::size_t>(r) * r, -1);
  const double px = 1.0 / r;
  for (const Room& room : g.nodes) {
    if (room.polygon.size() < 3) continue;
    double x0 = room.polygon[0].x, x1 = x0, y0 = room.polygon[0].y, y1 = y0;
    for (const Point& p : room.polygon) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    const int i0 = std::max(0, static_cast<int>(std::floor((x0 + 0.5) * r - 0.5)));
    const int i1 = std::min(r - 1, static_cast<int>(std::ceil((x1 + 0.5) * r - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::floor((y0 + 0.5) * r - 0.5)));
    const int j1 = std::min(r - 1, static_cast<int>(std::ceil((y1 + 0.5) * r - 0.5)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        if (point_in_polygon(room.polygon, -0.5 + (i + 0.5) * px, -0.5 + (j + 0.5) * px))
          label[static_cast<std::size_t>(j) * r + i] = static_cast<std::int8_t>(room.category);
  }
  CategoryRaster out;
  out.resolution = r;
  const std::size_t words = (static_cast<std::size_t>(r) * r + 63) / 64;
  for (auto& m : out.masks) m.assign(words, 0);
  for (std::size_t p = 0; p < label.size(); ++p)
    if (label[p] >= 0) {
      out.masks[label[p]][p / 64] |= std::uint64_t{1} << (p % 64);
      out.area[label[p]]++;
    }
  return out;
}

inline double miou(const CategoryRaster& a, const CategoryRaster& b) {
  if (a.resolution != b.resolution) throw InvalidArgument("miou: raster resolutions differ");
  double sum = 0;
  int classes = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    if (a.area[c] == 0 && b.area[c] == 0) continue;
    std::int64_t inter = 0;
    for (std::size_t w = 0; w < a.masks[c].size(); ++w) inter += std::popcount(a.masks[c][w] & b.masks[c][w]);
    const std::int64_t uni = a.area[c] + b.area[c] - inter;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++classes;
  }
  return classes == 0 ? 0.0 : sum / classes;
}

inline double miou(const FloorPlanGraph& g1, const FloorPlanGraph& g2, const RasterConfig& cfg = {}) {
  return miou(rasterize(g1, cfg), rasterize(g2, cfg));
}

// gt_in_model_order[i] is the ground-truth score of the model's i-th ranked item.
// Relevant = ground truth ties with or beats the k-th largest ground truth in the list.
inline double precision_at_k(std::span<const double> gt_in_model_order, int k) {
  if (k <= 0) throw InvalidArgument("precision_at_k: k must be positive, got " + std::to_string(k));
  if (gt_in_model_order.size() < static_cast<std::size_t>(k))
    throw InvalidArgument("precision_at_k: ranking has fewer than k items");
  std::vector<double> sorted(gt_in_model_order.begin(), gt_in_model_order.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(), std::greater<>());
  const double threshold = sorted[k - 1];
  int hits = 0;
  for (int i = 0; i < k; ++i)
    if (gt_in_model_order[i] >= threshold) ++hits;
  return static_cast<double>(hits) / k;
}

inline double precision_at_k(std::span<const std::string> model_ranking,
                             const std::unordered_map<std::string, double>& gt_scores, int k) {
  std::vector<double> gt;
  gt.reserve(model_ranking.size());
  for (const auto& id : model_ranking) {
    auto it = gt_scores.find(id);
    if (it == gt_scores.end()) throw InvalidArgument("precision_at_k: no ground truth for '" + id + "'");
    gt.push_back(it->second);
  }
  return precision_at_k(std::span<const double>(gt), k);
}

// Fraction of (s_ap, s_an) with s_ap > s_an; ties are failures.
inline double triplet_accuracy(std::span<const std::pair<double, double>> preds) {
  if (preds.empty()) throw InvalidArgument("triplet_accuracy: empty prediction list");
  std::size_t ok = 0;
  for (auto [ap, an] : preds)
    if (ap > an) ++ok;
  return static_cast<double>(ok) / static_cast<double>(preds.size());
}

}  // namespace lgkn
