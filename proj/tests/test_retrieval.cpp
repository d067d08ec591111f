#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "layoutgkn/retrieval.hpp"
#include "support.hpp"

using namespace lgkn;
namespace fs = std::filesystem;

namespace {

std::vector<FloorPlanGraph> synth(int count, std::uint64_t seed) {
  GenConfig g;
  g.count = count;
  g.seed = seed;
  return synth_generate(g);
}

ModelConfig small_model(Mode mode) {
  ModelConfig c;
  c.mode = mode;
  c.d = 8;
  c.layers = 2;
  c.seed = 5;
  return c;
}

Checkpoint round_trip(const Model& m, const TrainingProvenance& prov = {}) {
  return parse_checkpoint(serialize_checkpoint(m, prov));
}

std::string index_bytes(const EmbeddingIndex& idx) {
  std::stringstream ss;
  write_index(idx, ss);
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("lgkn-test-" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("config files set nested options and reject unknown keys") {
  RunConfig c;
  std::istringstream in(
      "# comment line\n"
      "count = 12\n"
      "mode = GEN  # trailing comment\n"
      "d = 16\n"
      "mu = 0.5\n"
      "sweep_d = 8, 16\n"
      "layer_norm = false\n");
  apply_config(c, in);
  CHECK(c.gen.count == 12);
  CHECK(c.train.model.mode == Mode::GEN);
  CHECK(c.train.model.d == 16);
  CHECK(c.train.kernel.mu == 0.5);
  CHECK(c.sweep.d == std::vector<int>{8, 16});
  CHECK_FALSE(c.train.model.layer_norm);
  apply_setting(c, "mu", "auto");
  CHECK_FALSE(c.train.kernel.mu.has_value());

  std::istringstream bad("count = 3\nbogus = 1\n");
  try {
    apply_config(c, bad);
    FAIL("expected MalformedInput");
  } catch (const MalformedInput& e) {
    CHECK(e.record() == 2);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(c, "d", "eight"), InvalidArgument);
  CHECK_THROWS_AS(apply_setting(c, "mode", "XYZ"), InvalidArgument);
  c.set_seed(77);
  CHECK(c.gen.seed == 77);
  CHECK(c.train.model.seed == 77);
  CHECK(c.mining.seed == 77);
}

TEST_CASE("checkpoint round trip preserves parameters, statistics and provenance") {
  for (Mode mode : {Mode::GKN, Mode::GEN, Mode::GMN, Mode::GK}) {
    Model m(small_model(mode));
    if (!m.bn_states.empty()) m.bn_states[0].running_mean.setConstant(0.25);
    TrainingProvenance prov{2, "0123456789abcdef", 0.3};
    const std::string text = serialize_checkpoint(m, prov);
    Checkpoint ck = parse_checkpoint(text);
    CHECK(ck.model.config().mode == mode);
    CHECK(ck.provenance.fold == 2);
    CHECK(ck.provenance.split_hash == prov.split_hash);
    CHECK(ck.provenance.mu == 0.3);
    CHECK(ck.hash == hex64(fnv1a(text)));
    auto a = m.parameters(), b = ck.model.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].tensor.value() == b[i].tensor.value());
    }
    for (std::size_t l = 0; l < m.bn_states.size(); ++l) {
      CHECK(ck.model.bn_states[l].running_mean == m.bn_states[l].running_mean);
      CHECK(ck.model.bn_states[l].running_var == m.bn_states[l].running_var);
    }
    CHECK(serialize_checkpoint(ck.model, ck.provenance) == text);
  }
  CHECK_THROWS_AS(parse_checkpoint("{}"), MalformedInput);
  CHECK_THROWS_AS(parse_checkpoint("not json"), MalformedInput);
}

TEST_CASE("index round trip is lossless and corruption is detected") {
  auto gs = synth(30, 1);
  for (Mode mode : {Mode::GKN, Mode::GEN, Mode::GK}) {
    Checkpoint ck = round_trip(Model(small_model(mode)));
    EmbeddingIndex idx = index_dataset(ck, gs, 2);
    const std::string bytes = index_bytes(idx);
    std::stringstream in(bytes);
    EmbeddingIndex back = read_index(in, kernel_config(ck));
    CHECK(back.mode == mode);
    CHECK(back.checkpoint_hash == ck.hash);
    REQUIRE(back.records.size() == gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i) {
      CHECK(back.records[i].id == idx.records[i].id);
      CHECK(back.records[i].H == idx.records[i].H);
      CHECK(back.records[i].hist == idx.records[i].hist);
      CHECK(back.records[i].self_norm == idx.records[i].self_norm);
      CHECK(back.records[i].pooled == idx.records[i].pooled);
    }
    CHECK(index_bytes(back) == bytes);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(read_index(truncated, kernel_config(ck)), MalformedInput);
    std::stringstream trailing(bytes + "x");
    CHECK_THROWS_AS(read_index(trailing, kernel_config(ck)), MalformedInput);
    std::string flipped = bytes;
    const std::size_t first = 8 + 4 * 5 + 16 + 8 + 4 + gs[0].id.size() + 4;
    const std::size_t norm_at = first + 8 * static_cast<std::size_t>(gs[0].size()) * (idx.d + 16);
    flipped[norm_at + 6] ^= 0x40;  // first record's self_norm
    std::stringstream corrupt(flipped);
    CHECK_THROWS_AS(read_index(corrupt, kernel_config(ck)), MalformedInput);
    std::stringstream magic("LGKNIDX9" + bytes.substr(8));
    CHECK_THROWS_AS(read_index(magic, kernel_config(ck)), MalformedInput);
  }
}

TEST_CASE("query: self ranks first, scores match pairwise similarity") {
  auto gs = synth(40, 2);
  for (Mode mode : {Mode::GKN, Mode::GEN, Mode::GK}) {
    Checkpoint ck = round_trip(Model(small_model(mode)));
    const KernelConfig kcfg = kernel_config(ck);
    EmbeddingIndex idx = index_dataset(ck, gs, 1);
    auto res = query_index(idx, ck, std::span(gs).first(10), 5, 2);
    REQUIRE(res.size() == 10);
    for (std::size_t q = 0; q < 10; ++q) {
      CHECK(res[q].query == gs[q].id);
      REQUIRE(res[q].ranking.size() == 5);
      CHECK(res[q].ranking[0].id == gs[q].id);
      if (mode != Mode::GEN) CHECK(std::abs(res[q].ranking[0].score - 1.0) <= 1e-12);
      for (std::size_t r = 0; r < 5; ++r) {
        const auto& hit = res[q].ranking[r];
        std::size_t j = 0;
        while (gs[j].id != hit.id) ++j;
        CHECK(hit.score == pair_similarity(ck.model, gs[q], gs[j], kcfg));
        if (r > 0) CHECK(res[q].ranking[r - 1].score >= hit.score);
      }
    }
    auto all = query_index(idx, ck, std::span(gs).first(1), 100, 1);
    CHECK(all[0].ranking.size() == gs.size());
    CHECK_THROWS_AS(query_index(idx, ck, std::span(gs).first(1), 0, 1), InvalidArgument);
  }
}

TEST_CASE("query refuses a stale index and cross-graph mode") {
  auto gs = synth(10, 3);
  Checkpoint a = round_trip(Model(small_model(Mode::GKN)));
  ModelConfig other = small_model(Mode::GKN);
  other.seed = 99;
  Checkpoint b = round_trip(Model(other));
  EmbeddingIndex idx = index_dataset(a, gs, 1);
  CHECK_THROWS_AS(query_index(idx, b, gs, 3, 1), Refused);
  Checkpoint gmn = round_trip(Model(small_model(Mode::GMN)));
  try {
    index_dataset(gmn, gs, 1);
    FAIL("expected refusal");
  } catch (const Refused& e) {
    CHECK(std::string(e.what()).find("cross-graph mode cannot precompute") != std::string::npos);
  }
}

TEST_CASE("ties in ranking break by ascending id") {
  auto g = testing::strip_graph({1, 2}, {{0, 1, EdgeKind::Door}});
  std::vector<FloorPlanGraph> gs;
  for (std::string id : {"c", "a", "b"}) {
    gs.push_back(g);
    gs.back().id = id;
  }
  Checkpoint ck = round_trip(Model(small_model(Mode::GKN)));
  auto res = query_index(index_dataset(ck, gs, 1), ck, std::span(gs).first(1), 3, 1);
  CHECK(res[0].ranking[0].id == "a");
  CHECK(res[0].ranking[1].id == "b");
  CHECK(res[0].ranking[2].id == "c");
}

TEST_CASE("folds are disjoint, sized floor(0.2 n), and stable") {
  auto gs = synth(103, 4);
  std::vector<std::string> ids;
  for (const auto& g : gs) ids.push_back(g.id);
  DatasetMeta meta = make_folds(ids, 4, 0.2, 7);
  REQUIRE(meta.folds.size() == 4);
  std::set<std::string> seen;
  for (const auto& f : meta.folds) {
    CHECK(f.size() == 20);
    for (const auto& id : f) CHECK(seen.insert(id).second);
  }
  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  CHECK(make_folds(reversed, 4, 0.2, 7).folds == meta.folds);
  CHECK(make_folds(ids, 4, 0.2, 8).folds != meta.folds);
  CHECK_THROWS_AS(make_folds(ids, 6, 0.2, 7), InvalidArgument);

  Dataset data(gs);
  auto tr = train_ids(meta, data, 1);
  CHECK(tr.size() == 83);
  for (const auto& id : tr) CHECK(std::find(meta.folds[1].begin(), meta.folds[1].end(), id) == meta.folds[1].end());
  CHECK(train_ids(meta, data, -1).size() == 103);
  CHECK_THROWS_AS(test_ids(meta, 4), InvalidArgument);

  TempDir tmp;
  save_meta(tmp.file("m.json"), meta);
  DatasetMeta back = load_meta(tmp.file("m.json"));
  CHECK(back.folds == meta.folds);
  CHECK(back.seed == 7);
  CHECK_THROWS_AS(load_meta(tmp.file("missing.json")), InvalidArgument);
}

TEST_CASE("training refuses test-fold triplets and empty triplet files") {
  auto gs = synth(60, 5);
  Dataset data(gs);
  std::vector<std::string> ids;
  for (const auto& g : gs) ids.push_back(g.id);
  DatasetMeta meta = make_folds(ids, 4, 0.2, 1);
  TrainConfig cfg;
  cfg.model = small_model(Mode::GKN);
  cfg.max_epochs = 1;
  auto tr = train_ids(meta, data, 0);
  std::vector<Triplet> clean{{tr[0], tr[1], tr[2], 0.8, 0.6}, {tr[3], tr[4], tr[5], 0.8, 0.6}};
  std::vector<Triplet> leaky = clean;
  leaky.push_back({tr[6], meta.folds[0][0], tr[7], 0.8, 0.6});
  CHECK_THROWS_AS(train_fold(data, meta, 0, leaky, cfg), Refused);
  CHECK_THROWS_AS(train_fold(data, meta, 0, {}, cfg), InvalidArgument);
  TrainRun run = train_fold(data, meta, 0, clean, cfg);
  CHECK(run.provenance.fold == 0);
  CHECK(run.provenance.split_hash == split_hash(tr));
  CHECK(run.provenance.split_hash != split_hash(train_ids(meta, data, 1)));
}

TEST_CASE("evaluation refuses checkpoints from another split") {
  auto gs = synth(60, 6);
  Dataset data(gs);
  std::vector<std::string> ids;
  for (const auto& g : gs) ids.push_back(g.id);
  DatasetMeta meta = make_folds(ids, 4, 0.2, 1);
  RunConfig rc;
  Model m(small_model(Mode::GKN));
  Checkpoint wrong_fold = parse_checkpoint(serialize_checkpoint(m, {1, split_hash(train_ids(meta, data, 1))}));
  CHECK_THROWS_AS(evaluate_fold(wrong_fold, data, meta, 0, rc), Refused);
  Checkpoint untracked = round_trip(m);
  CHECK_THROWS_AS(evaluate_fold(untracked, data, meta, 0, rc), Refused);
  Checkpoint leaked = parse_checkpoint(serialize_checkpoint(m, {0, split_hash(ids)}));
  try {
    evaluate_fold(leaked, data, meta, 0, rc);
    FAIL("expected refusal");
  } catch (const Refused& e) {
    CHECK(std::string(e.what()).find("overlap") != std::string::npos);
  }
}

TEST_CASE("triplet files round trip") {
  std::vector<Triplet> ts{{"a", "b", "c", 0.8, 0.61}, {"x", "y", "z", 0.75, 0.6000000001}};
  std::stringstream ss;
  write_triplets(ts, ss);
  CHECK(parse_triplets(ss) == ts);
  std::stringstream bad("{\"a\":\"x\"}\n");
  CHECK_THROWS_AS(parse_triplets(bad), MalformedInput);
}

TEST_CASE("sample standard deviation") {
  auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == Catch::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(mean_std({0.7}).second == 0.0);
}
