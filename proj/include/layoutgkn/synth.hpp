#pragma once

// Deterministic synthetic floor plans: recursive axis-aligned splits of the unit box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"

namespace lgkn {

struct GenConfig {
  int count = 100;
  std::uint64_t seed = 1;
  int rooms_min = 3;
  int rooms_max = 9;
  double extra_door_prob = 0.2;
  double wall_edge_prob = 0.5;
  // Weight of each category for non-living rooms; entry 0 (living room) is ignored.
  std::array<double, kNumCategories> category_weights{0.0, 3.0, 1.0, 2.0, 1.0, 0.5, 1.0, 1.0};
  std::string id_prefix = "plan";
};

inline void check(const GenConfig& cfg) {
  if (cfg.count < 0) throw InvalidArgument("GenConfig: count must be >= 0");
  if (!(1 <= cfg.rooms_min && cfg.rooms_min <= cfg.rooms_max && cfg.rooms_max <= 9))
    throw InvalidArgument("GenConfig: need 1 <= rooms_min <= rooms_max <= 9");
  if (cfg.extra_door_prob < 0 || cfg.extra_door_prob > 1 || cfg.wall_edge_prob < 0 || cfg.wall_edge_prob > 1)
    throw InvalidArgument("GenConfig: probabilities must lie in [0, 1]");
  double total = 0;
  for (int c = 1; c < kNumCategories; ++c) {
    if (cfg.category_weights[c] < 0) throw InvalidArgument("GenConfig: negative category weight");
    total += cfg.category_weights[c];
  }
  if (total <= 0 && cfg.rooms_max > 1) throw InvalidArgument("GenConfig: category weights sum to zero");
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Rect {
  double x0, y0, x1, y1;
  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
  double area() const { return w() * h(); }
};

// Positive-length shared boundary.
inline bool rects_adjacent(const Rect& a, const Rect& b) {
  constexpr double eps = 1e-12;
  auto overlap = [](double a0, double a1, double b0, double b1) { return std::min(a1, b1) - std::max(a0, b0); };
  if (std::abs(a.x1 - b.x0) < eps || std::abs(b.x1 - a.x0) < eps) return overlap(a.y0, a.y1, b.y0, b.y1) > eps;
  if (std::abs(a.y1 - b.y0) < eps || std::abs(b.y1 - a.y0) < eps) return overlap(a.x0, a.x1, b.x0, b.x1) > eps;
  return false;
}

inline Room room_from_rect(const Rect& r, RoomCategory c) {
  Room room;
  room.category = c;
  const double w = r.w(), h = r.h();
  room.shape = {(r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2, w, h, std::sqrt(w * h), (w + h) / 2};
  room.polygon = {{r.x0, r.y0}, {r.x1, r.y0}, {r.x1, r.y1}, {r.x0, r.y1}};
  return room;
}

inline FloorPlanGraph synth_one(const GenConfig& cfg, std::uint64_t item_seed, std::string id) {
  std::mt19937_64 rng(item_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = std::uniform_int_distribution<int>(cfg.rooms_min, cfg.rooms_max)(rng);

  std::vector<Rect> rects{{-0.5, -0.5, 0.5, 0.5}};
  while (static_cast<int>(rects.size()) < n) {
    std::vector<double> areas;
    for (const auto& r : rects) areas.push_back(r.area());
    std::size_t pick = std::discrete_distribution<std::size_t>(areas.begin(), areas.end())(rng);
    Rect r = rects[pick];
    const double frac = 0.35 + 0.3 * unit(rng);
    Rect a = r, b = r;
    if (r.w() >= r.h()) {
      const double x = r.x0 + frac * r.w();
      a.x1 = x;
      b.x0 = x;
    } else {
      const double y = r.y0 + frac * r.h();
      a.y1 = y;
      b.y0 = y;
    }
    rects[pick] = a;
    rects.insert(rects.begin() + static_cast<std::ptrdiff_t>(pick) + 1, b);
  }

  const std::size_t living = static_cast<std::size_t>(
      std::max_element(rects.begin(), rects.end(), [](const Rect& a, const Rect& b) { return a.area() < b.area(); }) -
      rects.begin());
  std::discrete_distribution<int> cat_dist(cfg.category_weights.begin() + 1, cfg.category_weights.end());

  FloorPlanGraph g;
  g.id = std::move(id);
  for (std::size_t i = 0; i < rects.size(); ++i) {
    RoomCategory c = (i == living) ? RoomCategory::LivingRoom : static_cast<RoomCategory>(1 + cat_dist(rng));
    g.nodes.push_back(room_from_rect(rects[i], c));
  }

  std::vector<std::pair<int, int>> adjacent;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rects_adjacent(rects[i], rects[j])) adjacent.emplace_back(i, j);

  // Random spanning tree of doors grown from the living room.
  std::vector<char> in_tree(n, 0), used(adjacent.size(), 0);
  in_tree[living] = 1;
  for (int added = 1; added < n; ++added) {
    std::vector<std::size_t> frontier;
    for (std::size_t k = 0; k < adjacent.size(); ++k)
      if (in_tree[adjacent[k].first] != in_tree[adjacent[k].second]) frontier.push_back(k);
    std::size_t k = frontier[std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng)];
    used[k] = 1;
    in_tree[adjacent[k].first] = in_tree[adjacent[k].second] = 1;
  }
  for (std::size_t k = 0; k < adjacent.size(); ++k) {
    auto [u, v] = adjacent[k];
    if (used[k]) {
      g.edges.push_back({u, v, EdgeKind::Door});
      continue;
    }
    const double r1 = unit(rng), r2 = unit(rng);
    if (r1 < cfg.extra_door_prob)
      g.edges.push_back({u, v, EdgeKind::Door});
    else if (r2 < cfg.wall_edge_prob)
      g.edges.push_back({u, v, EdgeKind::Wall});
  }
  return g;
}

inline std::string synth_id(const GenConfig& cfg, int index) {
  std::ostringstream os;
  os << cfg.id_prefix << '-' << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

// Item i depends only on (seed, i), so generation can be split across threads.
inline std::vector<FloorPlanGraph> synth_generate(const GenConfig& cfg) {
  check(cfg);
  std::vector<FloorPlanGraph> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i)
    out.push_back(synth_one(cfg, splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(i))), synth_id(cfg, i)));
  return out;
}

}  // namespace lgkn
