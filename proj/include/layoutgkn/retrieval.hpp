#pragma once

// End-to-end pipeline steps shared by the command-line tool and the tests:
// fold metadata, triplet files, training runs, indexing, querying, evaluation,
// the precompute-vs-joint timing benchmark, and the model-size sweep.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "exact_metrics.hpp"
#include "graph_io.hpp"
#include "index.hpp"
#include "json.hpp"
#include "kernel.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace lgkn {

// ---------------------------------------------------------------- fold metadata

// Disjoint test folds over a dataset. For fold f the training portion is every other graph.
struct DatasetMeta {
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::vector<std::vector<std::string>> folds;  // test ids per fold, sorted
};

inline std::string meta_path(const std::string& dataset) { return dataset + ".meta.json"; }

inline DatasetMeta make_folds(std::vector<std::string> ids, int folds, double test_fraction, std::uint64_t seed) {
  if (folds < 1) throw InvalidArgument("make_folds: folds must be >= 1");
  if (!(test_fraction > 0) || test_fraction * folds > 1.0 + 1e-12)
    throw InvalidArgument("make_folds: need 0 < test_fraction and folds * test_fraction <= 1");
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(splitmix64(seed ^ 0xf01dULL));
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t per = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(ids.size()) + 1e-9));
  DatasetMeta meta{seed, test_fraction, {}};
  for (int f = 0; f < folds; ++f) {
    std::vector<std::string> test(ids.begin() + static_cast<std::ptrdiff_t>(f * per),
                                  ids.begin() + static_cast<std::ptrdiff_t>((f + 1) * per));
    std::sort(test.begin(), test.end());
    meta.folds.push_back(std::move(test));
  }
  return meta;
}

inline void save_meta(const std::string& path, const DatasetMeta& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["test_fraction"] = m.test_fraction;
  j["folds"] = m.folds;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write metadata '" + path + "'");
  out << j.dump() << "\n";
}

inline DatasetMeta load_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset metadata '" + path + "' (fold assignment is required)");
  try {
    const auto j = nlohmann::json::parse(in);
    DatasetMeta m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.test_fraction = j.at("test_fraction").get<double>();
    m.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(0, "dataset metadata '" + path + "': " + e.what());
  }
}

inline const std::vector<std::string>& test_ids(const DatasetMeta& m, int fold) {
  if (fold < 0 || fold >= static_cast<int>(m.folds.size()))
    throw InvalidArgument("fold " + std::to_string(fold) + " out of range (dataset has " +
                          std::to_string(m.folds.size()) + " folds)");
  return m.folds[static_cast<std::size_t>(fold)];
}

// Training ids of a fold in dataset order; fold -1 means the whole dataset.
inline std::vector<std::string> train_ids(const DatasetMeta& m, const Dataset& data, int fold) {
  std::unordered_set<std::string> held;
  if (fold >= 0) {
    const auto& t = test_ids(m, fold);
    held.insert(t.begin(), t.end());
  }
  std::vector<std::string> out;
  for (const auto& g : data.graphs())
    if (!held.count(g.id)) out.push_back(g.id);
  return out;
}

inline std::string split_hash(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = fnv1a("");
  for (const auto& id : ids) h = fnv1a(id + '\n', h);
  return hex64(h);
}

// ---------------------------------------------------------------- files

inline Dataset load_dataset(const std::string& path, int delta, std::ostream* warn = nullptr) {
  ReadResult r = read_graphs(path);
  if (warn)
    for (const auto& rej : r.rejected) {
      *warn << path << ": record " << rej.record << " ('" << rej.id << "') rejected:";
      for (const auto& v : rej.violations) *warn << " [" << v.code << ": " << v.detail << "]";
      *warn << "\n";
    }
  return Dataset(std::move(r.graphs), delta);
}

inline void write_triplets(const std::vector<Triplet>& ts, std::ostream& out) {
  for (const auto& t : ts) {
    nlohmann::ordered_json j;
    j["a"] = t.anchor;
    j["p"] = t.positive;
    j["n"] = t.negative;
    j["sged_ap"] = t.sged_ap;
    j["sged_an"] = t.sged_an;
    out << j.dump() << "\n";
  }
}

inline std::vector<Triplet> parse_triplets(std::istream& in) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("a").get<std::string>(), j.at("p").get<std::string>(), j.at("n").get<std::string>(),
                     j.at("sged_ap").get<double>(), j.at("sged_an").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw MalformedInput(lineno, std::string("triplet: ") + e.what());
    }
  }
  return out;
}

inline std::vector<Triplet> read_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open triplet file '" + path + "'");
  return parse_triplets(in);
}

inline void write_train_report(const TrainReport& r, std::ostream& out) {
  out << "epoch,train_loss,val_loss,val_triplet_accuracy\n" << std::setprecision(10);
  for (const auto& e : r.epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << "\n";
}

inline void write_rankings(const std::vector<RankResult>& rs, std::ostream& out) {
  for (const auto& r : rs) {
    nlohmann::ordered_json j;
    j["query"] = r.query;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& x : r.ranking) list.push_back({{"id", x.id}, {"score", x.score}});
    j["results"] = list;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------- mine / train

// Mines within the training portion of `fold` (whole dataset for fold -1).
inline std::vector<Triplet> mine_fold(const Dataset& data, const DatasetMeta& meta, int fold, const MiningConfig& cfg) {
  if (fold < 0) return mine_triplets(data, cfg);
  return mine_triplets(data.subset(train_ids(meta, data, fold)), cfg);
}

struct TrainRun {
  Model model;
  TrainReport report;
  TrainingProvenance provenance;
};

// Refuses triplets that touch the fold's test graphs.
inline TrainRun train_fold(const Dataset& data, const DatasetMeta& meta, int fold, const std::vector<Triplet>& triplets,
                           const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (triplets.empty()) throw InvalidArgument("train: triplet file is empty; nothing to train on");
  const std::vector<std::string> ids = train_ids(meta, data, fold);
  const std::unordered_set<std::string> allowed(ids.begin(), ids.end());
  for (const auto& t : triplets)
    for (const auto* id : {&t.anchor, &t.positive, &t.negative}) {
      if (!data.contains(*id)) throw InvalidArgument("train: triplet references unknown graph '" + *id + "'");
      if (!allowed.count(*id))
        throw Refused("train: triplet references '" + *id + "', which is in the test split of fold " +
                      std::to_string(fold));
    }
  TrainResult r = train(data, triplets, cfg, on_epoch);
  return {std::move(r.model), r.report, {fold, split_hash(ids), cfg.kernel.mu}};
}

// ---------------------------------------------------------------- embed / query

inline EmbeddingIndex index_dataset(const Checkpoint& ck, std::span<const FloorPlanGraph> graphs, int threads) {
  return build_index(ck.model, graphs, kernel_config(ck), ck.hash, threads);
}

inline std::vector<RankResult> query_index(const EmbeddingIndex& idx, const Checkpoint& ck,
                                           std::span<const FloorPlanGraph> queries, int k, int threads) {
  if (idx.checkpoint_hash != ck.hash)
    throw Refused("stale index: built from checkpoint " + idx.checkpoint_hash + ", queries use " + ck.hash);
  if (idx.d != ck.model.config().embedding_dim() || idx.delta != ck.model.config().delta || idx.mode != ck.model.config().mode)
    throw Refused("index header (d, delta, mode) does not match the checkpoint");
  const KernelConfig kcfg = kernel_config(ck);
  std::vector<RankResult> out(queries.size());
  parallel_for(queries.size(), threads,
               [&](std::size_t i) { out[i] = rank(idx, embed(ck.model, queries[i], kcfg), k, kcfg); });
  return out;
}

// ---------------------------------------------------------------- evaluation

struct FoldMetrics {
  int fold = 0;
  std::size_t queries = 0, triplets = 0;
  double p5 = 0, p10 = 0, triplet_accuracy = 0;
};

struct EvalSummary {
  std::vector<FoldMetrics> folds;
  double mean_p5 = 0, std_p5 = 0, mean_p10 = 0, std_p10 = 0, mean_acc = 0, std_acc = 0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// Similarities of one query against a gallery, in gallery order.
inline std::vector<double> score_gallery(const Model& m, const KernelConfig& kcfg, const FloorPlanGraph& q,
                                         std::span<const FloorPlanGraph> gallery, const std::vector<EmbeddedGraph>& emb,
                                         const EmbeddedGraph* q_emb) {
  std::vector<double> s(gallery.size());
  for (std::size_t j = 0; j < gallery.size(); ++j)
    s[j] = m.config().mode == Mode::GMN ? pair_similarity(m, q, gallery[j], kcfg)
                                        : embedded_similarity(m.config().mode, *q_emb, emb[j], kcfg);
  return s;
}

// Retrieval and triplet metrics on one held-out fold. Queries run against the rest of the
// test fold; the model's top `top` are re-ranked by exact ground truth for P@5 and P@10.
inline FoldMetrics evaluate_fold(const Checkpoint& ck, const Dataset& data, const DatasetMeta& meta, int fold,
                                 const RunConfig& cfg) {
  if (ck.provenance.fold != fold)
    throw Refused("eval: checkpoint was trained for fold " + std::to_string(ck.provenance.fold) +
                  ", refusing to evaluate it on fold " + std::to_string(fold));
  if (ck.provenance.split_hash != split_hash(train_ids(meta, data, fold)))
    throw Refused("eval: checkpoint training split does not match the recorded split of fold " + std::to_string(fold) +
                  "; training and test data may overlap");
  const Model& m = ck.model;
  const KernelConfig kcfg = kernel_config(ck);
  const Dataset test = data.subset(test_ids(meta, fold));
  const auto gallery = test.graphs();
  const int top = std::min<int>(cfg.eval.top, static_cast<int>(gallery.size()) - 1);
  if (top < 10) throw InvalidArgument("eval: test fold needs at least 11 graphs");

  std::vector<EmbeddedGraph> emb;
  if (m.config().mode != Mode::GMN) {
    emb.resize(gallery.size());
    parallel_for(gallery.size(), cfg.threads, [&](std::size_t i) { emb[i] = embed(m, gallery[i], kcfg); });
  }
  std::size_t nq = gallery.size();
  if (cfg.eval.max_queries > 0) nq = std::min<std::size_t>(nq, static_cast<std::size_t>(cfg.eval.max_queries));
  std::vector<CategoryRaster> rasters;
  if (cfg.eval.gt == "miou") {
    rasters.resize(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) rasters[i] = rasterize(gallery[i], {cfg.eval.resolution});
  }
  std::vector<double> p5(nq), p10(nq);
  parallel_for(nq, cfg.threads, [&](std::size_t qi) {
    std::vector<double> s = score_gallery(m, kcfg, gallery[qi], gallery, emb, emb.empty() ? nullptr : &emb[qi]);
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < gallery.size(); ++j)
      if (j != qi) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](std::size_t a, std::size_t b) {
      return s[a] != s[b] ? s[a] > s[b] : gallery[a].id < gallery[b].id;
    });
    std::vector<double> gt;
    for (int r = 0; r < top; ++r) {
      const std::size_t j = order[static_cast<std::size_t>(r)];
      gt.push_back(cfg.eval.gt == "miou" ? miou(rasters[qi], rasters[j]) : sged(gallery[qi], gallery[j], cfg.mining.costs));
    }
    p5[qi] = precision_at_k(gt, 5);
    p10[qi] = precision_at_k(gt, 10);
  });

  MiningConfig mc = cfg.mining;
  mc.threads = cfg.threads;
  mc.seed = splitmix64(cfg.mining.seed ^ (0x7e57ULL + static_cast<std::uint64_t>(fold)));
  const std::vector<Triplet> held = mine_triplets(test, mc);
  FoldMetrics fm;
  fm.fold = fold;
  fm.queries = nq;
  fm.triplets = held.size();
  fm.p5 = mean_std(p5).first;
  fm.p10 = mean_std(p10).first;
  if (!held.empty()) fm.triplet_accuracy = score_triplets(m, test, held, cfg.train.margin, kcfg, cfg.threads).accuracy;
  return fm;
}

inline EvalSummary summarize(std::vector<FoldMetrics> folds) {
  EvalSummary s;
  std::vector<double> a, b, c;
  for (const auto& f : folds) a.push_back(f.p5), b.push_back(f.p10), c.push_back(f.triplet_accuracy);
  std::tie(s.mean_p5, s.std_p5) = mean_std(a);
  std::tie(s.mean_p10, s.std_p10) = mean_std(b);
  std::tie(s.mean_acc, s.std_acc) = mean_std(c);
  s.folds = std::move(folds);
  return s;
}

inline void write_eval_csv(const EvalSummary& s, const std::string& mode, std::ostream& out) {
  out << "mode,fold,queries,triplets,p_at_5,p_at_10,triplet_accuracy\n" << std::setprecision(10);
  for (const auto& f : s.folds)
    out << mode << ',' << f.fold << ',' << f.queries << ',' << f.triplets << ',' << f.p5 << ',' << f.p10 << ','
        << f.triplet_accuracy << "\n";
}

// ---------------------------------------------------------------- benchmark

struct BenchResult {
  Mode mode = Mode::GKN;
  int pairs = 0;
  std::vector<double> seconds;  // one entry per timed run
  double mean_s = 0, std_s = 0;
  double flops_per_pair = 0;
  double precompute_s = 0;  // embedding the gallery (GKN/GEN only, not part of the timed runs)
};

// Approximate floating-point operations of one joint forward pass over a graph pair (GMN),
// counting a multiply-add as two.
inline double joint_forward_flops(const ModelConfig& c, const GraphBatch& b) {
  const double d = c.d, n = b.num_nodes, msgs = static_cast<double>(b.msg_target.size()),
               e = static_cast<double>(b.edge_features.rows()) + 1, dg = c.graph_dim();
  auto mlp = [](double in, double hid, double out) { return 2 * (in * hid + hid * out); };
  double f = n * (mlp(kNumCategories, d, d) + mlp(kShapeDim, d, d) + mlp(2 * d, d, d)) + e * mlp(kEdgeDim, d, d);
  double cross = 0;
  for (int g = 0; g + 1 < b.num_graphs; g += 2) cross += 2.0 * b.graph_size(g) * b.graph_size(g + 1) * d * 2 * 2;
  const double gru_in = c.mode == Mode::GMN ? 2 * d : d;
  f += c.layers * (msgs * mlp(3 * d, d, d) + n * 2 * (gru_in * 3 * d + d * 3 * d) + cross);
  f += n * (mlp(d, d, dg) * 2);
  return f;
}

inline double kernel_pair_flops(int n1, int n2, int d, int delta) {
  return static_cast<double>(n1) * n2 * (2.0 * delta * delta + 3.0 * d + 4.0) + 1;
}

// Times `pairs` random gallery pairs per run. GKN/GEN score from precomputed embeddings;
// GMN runs the full joint forward for every pair. Single-threaded by design.
inline BenchResult bench_mode(const Model& m, const KernelConfig& kcfg, std::span<const FloorPlanGraph> gallery,
                              const BenchConfig& bc, std::uint64_t seed) {
  if (gallery.size() < 2) throw InvalidArgument("bench: gallery needs at least two graphs");
  if (bc.runs < 1 || bc.pairs < 1 || bc.warmup < 0) throw InvalidArgument("bench: bad run/pair counts");
  BenchResult r;
  r.mode = m.config().mode;
  r.pairs = bc.pairs;
  std::mt19937_64 rng(splitmix64(seed ^ 0xbe7cULL));
  std::uniform_int_distribution<std::size_t> pick(0, gallery.size() - 1);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  while (pairs.size() < static_cast<std::size_t>(bc.pairs)) {
    const std::size_t a = pick(rng), b = pick(rng);
    if (a != b) pairs.emplace_back(a, b);
  }
  using clock = std::chrono::steady_clock;
  std::vector<EmbeddedGraph> emb;
  if (r.mode != Mode::GMN) {
    const auto t0 = clock::now();
    for (const auto& g : gallery) emb.push_back(embed(m, g, kcfg));
    r.precompute_s = std::chrono::duration<double>(clock::now() - t0).count();
  }
  volatile double sink = 0;
  auto run_once = [&] {
    double acc = 0;
    for (auto [a, b] : pairs)
      acc += r.mode == Mode::GMN ? pair_similarity(m, gallery[a], gallery[b], kcfg)
                                 : embedded_similarity(r.mode, emb[a], emb[b], kcfg);
    sink = sink + acc;
  };
  for (int w = 0; w < bc.warmup; ++w) run_once();
  for (int i = 0; i < bc.runs; ++i) {
    const auto t0 = clock::now();
    run_once();
    r.seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  std::tie(r.mean_s, r.std_s) = mean_std(r.seconds);
  double flops = 0;
  for (auto [a, b] : pairs) {
    const int n1 = gallery[a].size(), n2 = gallery[b].size();
    if (r.mode == Mode::GMN) {
      const FloorPlanGraph* gs[2] = {&gallery[a], &gallery[b]};
      flops += joint_forward_flops(m.config(), make_batch(std::span<const FloorPlanGraph* const>(gs, 2)));
    } else if (r.mode == Mode::GEN) {
      flops += 3.0 * m.config().graph_dim();
    } else {
      flops += kernel_pair_flops(n1, n2, m.config().embedding_dim(), m.config().delta);
    }
  }
  r.flops_per_pair = flops / static_cast<double>(pairs.size());
  return r;
}

inline std::vector<FloorPlanGraph> bench_gallery(const RunConfig& cfg, int count = 200) {
  GenConfig g = cfg.gen;
  g.count = count;
  g.rooms_min = g.rooms_max = cfg.bench.nodes;
  g.id_prefix = "bench";
  return synth_generate(g);
}

inline void write_bench_csv(const std::vector<BenchResult>& rs, std::ostream& out) {
  out << "mode,pairs,runs,mean_seconds,std_seconds,flops_per_pair,precompute_seconds\n" << std::setprecision(6);
  for (const auto& r : rs)
    out << to_string(r.mode) << ',' << r.pairs << ',' << r.seconds.size() << ',' << r.mean_s << ',' << r.std_s << ','
        << r.flops_per_pair << ',' << r.precompute_s << "\n";
}

// ---------------------------------------------------------------- sweep

struct SweepRow {
  Mode mode = Mode::GKN;
  int d = 0, layers = 0;
  std::size_t param_count = 0;
  double triplet_accuracy = 0;
};

// Trains each (mode, d, L) cell on `train_triplets` and scores held-out `test_triplets`.
inline std::vector<SweepRow> sweep(const Dataset& data, const std::vector<Triplet>& train_triplets,
                                   const std::vector<Triplet>& test_triplets, const RunConfig& cfg,
                                   const std::function<void(const SweepRow&)>& on_row = {}) {
  if (test_triplets.empty()) throw InvalidArgument("sweep: no held-out triplets");
  std::vector<SweepRow> rows;
  for (Mode mode : cfg.sweep.modes)
    for (int layers : cfg.sweep.layers)
      for (int d : cfg.sweep.d) {
        TrainConfig tc = cfg.train;
        tc.model.mode = mode;
        tc.model.d = d;
        tc.model.layers = layers;
        TrainResult tr = train(data, train_triplets, tc);
        SweepRow row{mode, d, layers, tr.model.parameter_count(),
                     score_triplets(tr.model, data, test_triplets, tc.margin, tc.kernel, cfg.threads).accuracy};
        if (on_row) on_row(row);
        rows.push_back(row);
      }
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "mode,d,L,param_count,triplet_accuracy\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << to_string(r.mode) << ',' << r.d << ',' << r.layers << ',' << r.param_count << ',' << r.triplet_accuracy << "\n";
}

}  // namespace lgkn
