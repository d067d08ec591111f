#include <catch_amalgamated.hpp>

#include "layoutgkn/exact_metrics.hpp"
#include "support.hpp"

using namespace lgkn;
using Catch::Approx;
using testing::strip_graph;

namespace {
FloorPlanGraph path4(std::vector<int> cats) {
  return strip_graph(cats, {{0, 1, EdgeKind::Door}, {1, 2, EdgeKind::Door}, {2, 3, EdgeKind::Wall}});
}
}  // namespace

TEST_CASE("ged basics") {
  auto g = path4({0, 1, 2, 3});
  CHECK(ged(g, g) == 0);
  CHECK(sged(g, g) == 1.0);
  CHECK(ged(strip_graph({2}, {}), strip_graph({3}, {})) == 1);
}

TEST_CASE("sged closed forms on oracle-verified pairs") {
  auto a = path4({0, 1, 2, 3});
  auto b = path4({0, 1, 2, 4});
  REQUIRE(testing::brute_ged(a, b) == 1);
  CHECK(ged(a, b) == 1);
  CHECK(sged(a, b) == Approx(std::exp(-1.0 / 8)).epsilon(1e-14));
  CHECK(sged(a, b) == Approx(0.8825).margin(1e-4));

  auto c = strip_graph({0, 1, 2}, {{0, 1, EdgeKind::Door}, {1, 2, EdgeKind::Door}});
  auto d = strip_graph({0, 1, 5, 6}, {{0, 1, EdgeKind::Door}, {1, 2, EdgeKind::Door}, {2, 3, EdgeKind::Door}});
  REQUIRE(testing::brute_ged(c, d) == 3);
  CHECK(ged(c, d) == 3);
  CHECK(sged(c, d) == Approx(0.6514).margin(1e-4));
}

TEST_CASE("ged equals exhaustive mapping search on small random pairs") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 120; ++i) {
    auto a = testing::random_graph(rng, 1 + static_cast<int>(rng() % 5), 0.4, 4);
    auto b = testing::random_graph(rng, 1 + static_cast<int>(rng() % 5), 0.4, 4);
    const double expect = testing::brute_ged(a, b);
    REQUIRE(ged(a, b) == expect);
    REQUIRE(ged(b, a) == expect);
  }
}

TEST_CASE("ged satisfies the triangle inequality on small graphs") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 60; ++i) {
    auto a = testing::random_graph(rng, 1 + static_cast<int>(rng() % 4), 0.4, 3);
    auto b = testing::random_graph(rng, 1 + static_cast<int>(rng() % 4), 0.4, 3);
    auto c = testing::random_graph(rng, 1 + static_cast<int>(rng() % 4), 0.4, 3);
    CHECK(ged(a, c) <= ged(a, b) + ged(b, c));
  }
}

TEST_CASE("ged refuses instances beyond the node cap") {
  std::mt19937_64 rng(1);
  auto a = testing::random_graph(rng, 11);
  auto b = testing::random_graph(rng, 10);
  CHECK_THROWS_AS(ged(a, b), Refused);
  CHECK_NOTHROW(ged(testing::random_graph(rng, 10), b));
}

TEST_CASE("sged is in (0,1] and strictly decreasing in ged") {
  for (int g = 0; g < 20; ++g) {
    CHECK(sged_from_ged(g, 4, 5) > 0);
    CHECK(sged_from_ged(g, 4, 5) <= 1);
    CHECK(sged_from_ged(g + 1, 4, 5) < sged_from_ged(g, 4, 5));
  }
}

TEST_CASE("miou of a plan with itself and with disjoint categories") {
  GenConfig cfg;
  cfg.count = 5;
  auto gs = synth_generate(cfg);
  CHECK(miou(gs[0], gs[0]) == 1.0);
  auto a = strip_graph({1, 2}, {{0, 1, EdgeKind::Door}});
  auto b = strip_graph({3, 4}, {{0, 1, EdgeKind::Door}});
  CHECK(miou(a, b) == 0.0);
}

TEST_CASE("half-overlapping squares give IoU one third") {
  auto square = [](double x0, double y0, double s, int cat) { return room_from_rect({x0, y0, x0 + s, y0 + s}, static_cast<RoomCategory>(cat)); };
  FloorPlanGraph a{"a", {square(-0.5, -0.25, 0.5, 1)}, {}};
  FloorPlanGraph b{"b", {square(-0.25, -0.25, 0.5, 1)}, {}};
  for (int res : {64, 128, 256}) CHECK(miou(a, b, {res}) == Approx(1.0 / 3).margin(2.0 / res));
  a.nodes.push_back(square(0.3, 0.3, 0.2, 2));
  a.edges.push_back({0, 1, EdgeKind::Wall});
  REQUIRE(is_valid(a));
  CHECK(miou(a, b) == Approx(1.0 / 6).margin(2.0 / 128));
  CHECK(miou(a, b) == miou(b, a));
}

TEST_CASE("miou is symmetric and invariant to node order") {
  GenConfig cfg;
  cfg.count = 30;
  auto gs = synth_generate(cfg);
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i + 1 < gs.size(); ++i) {
    CHECK(miou(gs[i], gs[i + 1]) == miou(gs[i + 1], gs[i]));
    std::vector<int> perm(gs[i].size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    // Synthetic rooms tile the box without overlap, so paint order cannot matter.
    CHECK(miou(permute_nodes(gs[i], perm), gs[i + 1]) == miou(gs[i], gs[i + 1]));
  }
}

TEST_CASE("raster resolution below 8 is rejected") {
  CHECK_THROWS_AS(rasterize(strip_graph({0}, {}), {4}), InvalidArgument);
}

TEST_CASE("precision at k") {
  std::vector<double> gt(50);
  for (int i = 0; i < 50; ++i) gt[i] = 50 - i;
  CHECK(precision_at_k(gt, 5) == 1.0);
  CHECK(precision_at_k(gt, 10) == 1.0);
  std::vector<double> rev(gt.rbegin(), gt.rend());
  CHECK(precision_at_k(rev, 5) == 0.0);

  std::vector<double> ties(50, 0.5);
  ties[0] = ties[2] = ties[4] = 1.0;
  CHECK(precision_at_k(ties, 5) == 1.0);
  // 0.5 ties the 5th largest score, so every 0.5 item counts as relevant.
  std::vector<double> late(50, 0.5);
  late[45] = late[46] = late[47] = 1.0;
  CHECK(precision_at_k(late, 5) == 1.0);
  late[46] = late[47] = late[48] = late[49] = late[44] = 1.0;
  CHECK(precision_at_k(late, 5) == 0.0);

  std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  std::unordered_map<std::string, double> scores{{"a", 0.1}, {"b", 0.9}, {"c", 0.8}, {"d", 0.7}, {"e", 0.6}, {"f", 0.5}};
  CHECK(precision_at_k(ids, scores, 2) == 0.5);
  CHECK_THROWS_AS(precision_at_k(gt, 0), InvalidArgument);
  CHECK_THROWS_AS(precision_at_k(std::span<const double>(gt.data(), 3), 5), InvalidArgument);
}

TEST_CASE("triplet accuracy") {
  std::vector<std::pair<double, double>> good(4, {0.9, 0.1}), tied(4, {0.5, 0.5});
  CHECK(triplet_accuracy(good) == 1.0);
  CHECK(triplet_accuracy(tied) == 0.0);
  std::vector<std::pair<double, double>> mixed{{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.7, 0.6}};
  CHECK(triplet_accuracy(mixed) == 0.75);
  CHECK_THROWS_AS(triplet_accuracy({}), InvalidArgument);
}
