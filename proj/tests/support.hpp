#pragma once

// Graph builders and slow reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "layoutgkn/graph.hpp"
#include "layoutgkn/kernel.hpp"
#include "layoutgkn/synth.hpp"

namespace testing {

using namespace lgkn;

// Rooms laid side by side as vertical strips of the unit box.
inline FloorPlanGraph strip_graph(const std::vector<int>& categories, std::vector<Edge> edges, std::string id = "g") {
  FloorPlanGraph g;
  g.id = std::move(id);
  const int n = static_cast<int>(categories.size());
  for (int i = 0; i < n; ++i) {
    const double x0 = -0.5 + static_cast<double>(i) / n, x1 = -0.5 + static_cast<double>(i + 1) / n;
    g.nodes.push_back(room_from_rect({x0, -0.5, x1, 0.5}, static_cast<RoomCategory>(categories[i])));
  }
  for (auto& e : edges)
    if (e.u > e.v) std::swap(e.u, e.v);
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return std::pair(a.u, a.v) < std::pair(b.u, b.v); });
  g.edges = std::move(edges);
  return g;
}

// Connected random graph: random spanning tree plus extra edges, random kinds and categories.
inline FloorPlanGraph random_graph(std::mt19937_64& rng, int n, double extra = 0.3, int num_categories = kNumCategories) {
  std::uniform_int_distribution<int> cat(0, num_categories - 1);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<int> cats(n);
  for (auto& c : cats) c = cat(rng);
  std::vector<Edge> edges;
  std::vector<std::vector<char>> has(n, std::vector<char>(n, 0));
  for (int v = 1; v < n; ++v) {
    const int u = std::uniform_int_distribution<int>(0, v - 1)(rng);
    edges.push_back({u, v, unit(rng) < 0.5 ? EdgeKind::Door : EdgeKind::Wall});
    has[u][v] = 1;
  }
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!has[u][v] && unit(rng) < extra) edges.push_back({u, v, unit(rng) < 0.5 ? EdgeKind::Door : EdgeKind::Wall});
  auto g = strip_graph(cats, edges, "r" + std::to_string(rng() % 1000000));
  // Shuffle node order so tree structure is not aligned with indices.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return permute_nodes(g, perm);
}

inline std::vector<std::vector<int>> adjacency_lists(const FloorPlanGraph& g) {
  std::vector<std::vector<int>> adj(g.nodes.size());
  for (const auto& e : g.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  return adj;
}

// Every shortest path (as a node sequence) between every ordered pair, found by exhaustive
// simple-path search and keeping the minimum-length ones.
inline std::vector<std::vector<int>> all_shortest_paths(const FloorPlanGraph& g) {
  const int n = g.size();
  const auto adj = adjacency_lists(g);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < n; ++t) {
      std::vector<std::vector<int>> found;
      std::vector<int> path{s};
      std::vector<char> on(n, 0);
      on[s] = 1;
      std::function<void(int)> dfs = [&](int u) {
        if (u == t) {
          found.push_back(path);
          return;
        }
        for (int v : adj[u])
          if (!on[v]) {
            on[v] = 1;
            path.push_back(v);
            dfs(v);
            path.pop_back();
            on[v] = 0;
          }
      };
      dfs(s);
      if (found.empty()) continue;
      std::size_t best = std::numeric_limits<std::size_t>::max();
      for (const auto& p : found) best = std::min(best, p.size());
      for (auto& p : found)
        if (p.size() == best) out.push_back(std::move(p));
    }
  return out;
}

inline std::vector<PathHistogram> brute_histograms(const FloorPlanGraph& g, int delta) {
  std::vector<PathHistogram> h(g.nodes.size(), PathHistogram(delta));
  for (const auto& p : all_shortest_paths(g)) {
    const int len = static_cast<int>(p.size());
    if (len > delta) continue;
    for (int i = 0; i < len; ++i) h[p[i]].at(i, len - 1) += 1;
  }
  return h;
}

// GraphHopper by definition: sum over pairs of equal-length shortest paths of the node
// kernels at matched positions.
inline double brute_graphhopper(const FloorPlanGraph& g1, const Matrix& h1, const FloorPlanGraph& g2, const Matrix& h2,
                                double mu, int delta) {
  const auto p1 = all_shortest_paths(g1), p2 = all_shortest_paths(g2);
  double k = 0;
  for (const auto& a : p1) {
    if (static_cast<int>(a.size()) > delta) continue;
    for (const auto& b : p2) {
      if (a.size() != b.size()) continue;
      for (std::size_t i = 0; i < a.size(); ++i) k += std::exp(-mu * (h1.row(a[i]) - h2.row(b[i])).squaredNorm());
    }
  }
  return k;
}

// Exhaustive GED with unit costs: every injective partial map of g1 nodes into g2 nodes.
inline double brute_ged(const FloorPlanGraph& g1, const FloorPlanGraph& g2) {
  const int n1 = g1.size(), n2 = g2.size();
  std::vector<std::vector<int>> e1(n1, std::vector<int>(n1, -1)), e2(n2, std::vector<int>(n2, -1));
  for (const auto& e : g1.edges) e1[e.u][e.v] = e1[e.v][e.u] = static_cast<int>(e.kind);
  for (const auto& e : g2.edges) e2[e.u][e.v] = e2[e.v][e.u] = static_cast<int>(e.kind);
  std::vector<int> map(n1, -1);
  std::vector<char> used(n2, 0);
  double best = std::numeric_limits<double>::infinity();
  auto cost = [&] {
    double c = 0;
    std::vector<int> inv(n2, -1);
    for (int u = 0; u < n1; ++u) {
      if (map[u] < 0) c += 1;
      else {
        inv[map[u]] = u;
        if (g1.nodes[u].category != g2.nodes[map[u]].category) c += 1;
      }
    }
    for (int v = 0; v < n2; ++v)
      if (inv[v] < 0) c += 1;
    for (int u = 0; u < n1; ++u)
      for (int w = u + 1; w < n1; ++w) {
        const int a = e1[u][w];
        const int b = (map[u] >= 0 && map[w] >= 0) ? e2[map[u]][map[w]] : -1;
        if (a >= 0 && b >= 0) c += (a != b);
        else if (a >= 0 || b >= 0) c += 1;
      }
    for (int v = 0; v < n2; ++v)
      for (int x = v + 1; x < n2; ++x)
        if (e2[v][x] >= 0 && (inv[v] < 0 || inv[x] < 0)) c += 1;
    return c;
  };
  std::function<void(int)> rec = [&](int u) {
    if (u == n1) {
      best = std::min(best, cost());
      return;
    }
    map[u] = -1;
    rec(u + 1);
    for (int v = 0; v < n2; ++v)
      if (!used[v]) {
        used[v] = 1;
        map[u] = v;
        rec(u + 1);
        used[v] = 0;
        map[u] = -1;
      }
  };
  rec(0);
  return best;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace testing
