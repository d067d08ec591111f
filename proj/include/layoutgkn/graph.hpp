#pragma once

// Attributed floor-plan graphs and their shortest-path histograms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lgkn {

inline constexpr int kNumCategories = 8;
inline constexpr int kShapeDim = 6;
inline constexpr int kEdgeDim = 2;
inline constexpr int kDefaultDelta = 4;

enum class RoomCategory : int {
  LivingRoom = 0,
  Bedroom = 1,
  Kitchen = 2,
  Bathroom = 3,
  Dining = 4,
  StoreRoom = 5,
  Balcony = 6,
  Corridor = 7,
};

inline const char* category_name(RoomCategory c) {
  static constexpr const char* names[kNumCategories] = {
      "living room", "bedroom", "kitchen", "bathroom", "dining", "store room", "balcony", "corridor"};
  int i = static_cast<int>(c);
  return (i >= 0 && i < kNumCategories) ? names[i] : "invalid";
}

inline std::array<double, kNumCategories> one_hot(RoomCategory c) {
  std::array<double, kNumCategories> v{};
  v[static_cast<std::size_t>(c)] = 1.0;
  return v;
}

// [c_x; c_y; w; h; sqrt(a); p/4] in unit-box coordinates.
struct RoomShape {
  double cx = 0, cy = 0, w = 0, h = 0, sqrt_area = 0, quarter_perimeter = 0;

  std::array<double, kShapeDim> as_vector() const { return {cx, cy, w, h, sqrt_area, quarter_perimeter}; }
  static RoomShape from_vector(const std::array<double, kShapeDim>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  bool operator==(const RoomShape&) const = default;
};

enum class EdgeKind : int { Door = 0, Wall = 1 };

inline std::array<double, kEdgeDim> edge_vector(EdgeKind k) {
  return k == EdgeKind::Door ? std::array<double, kEdgeDim>{1.0, 0.0} : std::array<double, kEdgeDim>{0.0, 1.0};
}

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

struct Room {
  RoomCategory category = RoomCategory::LivingRoom;
  RoomShape shape;
  std::vector<Point> polygon;
  bool operator==(const Room&) const = default;
};

struct Edge {
  int u = 0, v = 0;
  EdgeKind kind = EdgeKind::Door;
  bool operator==(const Edge&) const = default;
};

struct FloorPlanGraph {
  std::string id;
  std::vector<Room> nodes;
  std::vector<Edge> edges;

  int size() const { return static_cast<int>(nodes.size()); }
  bool operator==(const FloorPlanGraph&) const = default;
};

// Neighbor lists over all edges (doors and walls); kind kept alongside.
struct Adjacency {
  std::vector<std::vector<std::pair<int, EdgeKind>>> out;

  explicit Adjacency(const FloorPlanGraph& g) : out(g.nodes.size()) {
    for (const auto& e : g.edges) {
      out[e.u].emplace_back(e.v, e.kind);
      out[e.v].emplace_back(e.u, e.kind);
    }
    for (auto& row : out) std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.first < b.first; });
  }
};

struct Violation {
  std::string code;
  std::string detail;
};
using ValidationReport = std::vector<Violation>;

namespace detail {

inline double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

inline bool on_segment(Point p, Point q, Point r) {
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
         q.y <= std::max(p.y, r.y);
}

inline int orientation(Point a, Point b, Point c) {
  double v = cross(a, b, c);
  if (std::abs(v) < 1e-15) return 0;
  return v > 0 ? 1 : 2;
}

inline bool segments_intersect(Point p1, Point q1, Point p2, Point q2) {
  int o1 = orientation(p1, q1, p2), o2 = orientation(p1, q1, q2);
  int o3 = orientation(p2, q2, p1), o4 = orientation(p2, q2, q1);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, q2, q1)) return true;
  if (o3 == 0 && on_segment(p2, p1, q2)) return true;
  if (o4 == 0 && on_segment(p2, q1, q2)) return true;
  return false;
}

}  // namespace detail

// Non-adjacent edges must not touch; adjacent edges may only share their common vertex.
inline bool polygon_is_simple(const std::vector<Point>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    Point a = poly[i], b = poly[(i + 1) % n];
    if (a == b) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      Point c = poly[j], d = poly[(j + 1) % n];
      bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Collinear overlap of neighbouring edges folds the boundary back on itself.
        Point shared = (j == i + 1) ? b : a;
        Point other_i = (j == i + 1) ? a : b;
        Point other_j = (j == i + 1) ? d : c;
        if (detail::orientation(other_i, shared, other_j) == 0 &&
            ((other_j.x - shared.x) * (other_i.x - shared.x) + (other_j.y - shared.y) * (other_i.y - shared.y)) > 0)
          return false;
        continue;
      }
      if (detail::segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

inline bool is_connected(const FloorPlanGraph& g) {
  if (g.nodes.empty()) return false;
  std::vector<std::vector<int>> adj(g.nodes.size());
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= g.size() || e.v >= g.size()) continue;
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  std::vector<char> seen(g.nodes.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == g.size();
}

inline ValidationReport validate(const FloorPlanGraph& g) {
  ValidationReport report;
  auto add = [&](std::string code, std::string detail) { report.push_back({std::move(code), std::move(detail)}); };
  const int n = g.size();
  if (n == 0) add("empty", "graph has no nodes");

  for (int i = 0; i < n; ++i) {
    const Room& r = g.nodes[i];
    const std::string at = "node " + std::to_string(i);
    int code = static_cast<int>(r.category);
    if (code < 0 || code >= kNumCategories) add("category out of range", at + ": code " + std::to_string(code));
    const RoomShape& s = r.shape;
    auto v = s.as_vector();
    if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
      add("shape not finite", at);
    } else {
      if (s.cx < -0.5 || s.cx > 0.5 || s.cy < -0.5 || s.cy > 0.5) add("shape center out of range", at);
      if (!(s.w > 0 && s.w <= 1) || !(s.h > 0 && s.h <= 1)) add("shape extent out of range", at);
      if (s.sqrt_area < 0 || s.sqrt_area * s.sqrt_area > s.w * s.h + 1e-9) add("shape area inconsistent", at);
      if (s.quarter_perimeter < (s.w + s.h) / 2 - 1e-9) add("shape perimeter inconsistent", at);
    }
    bool finite = true, inside = true;
    for (const Point& p : r.polygon) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) finite = false;
      if (std::abs(p.x) > 0.55 || std::abs(p.y) > 0.55) inside = false;
    }
    if (!finite) {
      add("polygon not finite", at);
    } else {
      if (!inside) add("polygon out of bounds", at);
      if (!polygon_is_simple(r.polygon)) add("polygon not simple", at);
    }
  }

  std::vector<std::pair<int, int>> seen;
  for (const Edge& e : g.edges) {
    const std::string at = "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")";
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n) {
      add("edge endpoint out of range", at);
      continue;
    }
    if (e.u == e.v) {
      add("self-loop", at);
      continue;
    }
    if (e.u > e.v) add("edge not normalized", at);
    int k = static_cast<int>(e.kind);
    if (k != 0 && k != 1) add("edge kind invalid", at);
    std::pair<int, int> key{std::min(e.u, e.v), std::max(e.u, e.v)};
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      add("duplicate edge", at);
    else
      seen.push_back(key);
  }
  if (n > 1 && !is_connected(g)) add("disconnected", "graph is not connected");
  return report;
}

inline bool is_valid(const FloorPlanGraph& g) { return validate(g).empty(); }

// delta x delta count matrix, row = position on the path (0-based), column = path node count - 1.
struct PathHistogram {
  int delta = kDefaultDelta;
  std::vector<std::int64_t> m;

  PathHistogram() : m(static_cast<std::size_t>(delta * delta), 0) {}
  explicit PathHistogram(int d) : delta(d), m(static_cast<std::size_t>(d * d), 0) {}

  std::int64_t& at(int i, int j) { return m[static_cast<std::size_t>(i * delta + j)]; }
  std::int64_t at(int i, int j) const { return m[static_cast<std::size_t>(i * delta + j)]; }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto x : m) s += x;
    return s;
  }
  bool operator==(const PathHistogram&) const = default;
};

inline std::int64_t frobenius(const PathHistogram& a, const PathHistogram& b) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < a.m.size(); ++i) s += a.m[i] * b.m[i];
  return s;
}

// Hop distances and shortest-path counts from every source; -1 marks unreachable.
struct AllPairsPaths {
  std::vector<std::vector<int>> dist;
  std::vector<std::vector<std::int64_t>> sigma;
};

inline AllPairsPaths all_pairs_paths(const FloorPlanGraph& g) {
  const int n = g.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : g.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  AllPairsPaths ap{std::vector<std::vector<int>>(n, std::vector<int>(n, -1)),
                   std::vector<std::vector<std::int64_t>>(n, std::vector<std::int64_t>(n, 0))};
  for (int s = 0; s < n; ++s) {
    auto& dist = ap.dist[s];
    auto& sigma = ap.sigma[s];
    std::queue<int> q;
    dist[s] = 0;
    sigma[s] = 1;
    q.push(s);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
        if (dist[v] == dist[u] + 1) sigma[v] += sigma[u];
      }
    }
  }
  return ap;
}

// Counts every shortest path with at most `delta` nodes, all ties included: node u at hop
// distance i from s on a shortest s->t path contributes sigma(s,u) * sigma(u,t) to m[i][d(s,t)].
inline std::vector<PathHistogram> shortest_path_histograms(const FloorPlanGraph& g, int delta = kDefaultDelta) {
  if (delta < 1) throw InvalidArgument("shortest_path_histograms: delta must be >= 1, got " + std::to_string(delta));
  const int n = g.size();
  std::vector<PathHistogram> hist(static_cast<std::size_t>(n), PathHistogram(delta));
  const AllPairsPaths ap = all_pairs_paths(g);
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      const int dst = ap.dist[s][t];
      if (dst < 0 || dst > delta - 1) continue;
      for (int u = 0; u < n; ++u) {
        const int dsu = ap.dist[s][u], dut = ap.dist[u][t];
        if (dsu < 0 || dut < 0 || dsu + dut != dst) continue;
        hist[u].at(dsu, dst) += ap.sigma[s][u] * ap.sigma[u][t];
      }
    }
  }
  return hist;
}

// Applies new_index = perm[old_index] to nodes and edges (edges re-normalized to u < v).
inline FloorPlanGraph permute_nodes(const FloorPlanGraph& g, const std::vector<int>& perm) {
  FloorPlanGraph out;
  out.id = g.id;
  out.nodes.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) out.nodes[perm[i]] = g.nodes[i];
  for (const auto& e : g.edges) {
    int a = perm[e.u], b = perm[e.v];
    out.edges.push_back({std::min(a, b), std::max(a, b), e.kind});
  }
  std::sort(out.edges.begin(), out.edges.end(), [](const Edge& x, const Edge& y) {
    return std::pair(x.u, x.v) < std::pair(y.u, y.v);
  });
  return out;
}

}  // namespace lgkn
