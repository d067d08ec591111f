// layoutgkn: dataset generation, triplet mining, training, indexing, querying,
// evaluation, timing benchmark and model-size sweep.
//
// Exit status: 0 success, 1 runtime failure or refusal, 2 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layoutgkn/retrieval.hpp"

namespace {

using namespace lgkn;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::vector<std::string> set;
};

RunConfig resolve(const Globals& g) {
  RunConfig c;
  if (!g.config.empty()) c = load_config(g.config);
  if (g.seed) c.set_seed(*g.seed);
  if (g.threads) c.set_threads(*g.threads);
  for (const auto& kv : g.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
    apply_setting(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  return c;
}

// Writes to --out when given, else stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw InvalidArgument("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? static_cast<std::ostream&>(*file_) : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floor-plan graph similarity: learned shortest-path kernel, baselines and exact oracles"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key=value configuration file");
  app.add_option("--seed", g.seed, "root seed (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads (1 = bit-reproducible reference)");
  app.add_option("--out", g.out, "output path");
  app.add_option("--set", g.set, "extra key=value overrides, applied last");

  std::string data, triplets_path, checkpoint, index_path, queries, report;
  std::vector<std::string> checkpoints;
  int fold = -1, k = 10;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (JSON lines) and its fold metadata");
  auto* mine = app.add_subcommand("mine", "mine sGED triplets from the training part of a fold");
  mine->add_option("--data", data, "graph file")->required();
  mine->add_option("--fold", fold, "fold whose test graphs are excluded (-1: use everything)");
  auto* trn = app.add_subcommand("train", "train a model on a triplet file");
  trn->add_option("--data", data, "graph file")->required();
  trn->add_option("--triplets", triplets_path, "triplet file")->required();
  trn->add_option("--fold", fold, "fold the triplets were mined for");
  trn->add_option("--report", report, "per-epoch CSV (default: <out>.report.csv)");
  auto* emb = app.add_subcommand("embed", "precompute an embedding index");
  emb->add_option("--data", data, "graph file")->required();
  emb->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  auto* qry = app.add_subcommand("query", "rank an index against query graphs");
  qry->add_option("--index", index_path, "index file")->required();
  qry->add_option("--checkpoint", checkpoint, "checkpoint the index was built from")->required();
  qry->add_option("--queries", queries, "query graph file")->required();
  qry->add_option("-k,--k", k, "results per query");
  auto* evl = app.add_subcommand("eval", "P@5, P@10 and triplet accuracy over held-out folds");
  evl->add_option("--data", data, "graph file (with .meta.json)")->required();
  evl->add_option("--checkpoint", checkpoints, "one checkpoint per fold")->required();
  auto* bch = app.add_subcommand("bench", "time precomputed scoring against joint forward passes");
  bch->add_option("--checkpoint", checkpoints, "checkpoints to time (default: freshly initialized GKN, GEN, GMN)");
  auto* swp = app.add_subcommand("sweep", "accuracy against model size");
  swp->add_option("--data", data, "graph file (with .meta.json)")->required();
  swp->add_option("--fold", fold, "fold to train and test on")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed() && g.config.empty()) throw CLI::ValidationError("--config", "gen needs --config <path>");
    if (!g.config.empty() && !std::filesystem::exists(g.config))
      throw CLI::ValidationError("--config", "config file '" + g.config + "' does not exist");
    const RunConfig cfg = resolve(g);

    if (gen->parsed()) {
      if (g.out.empty()) throw CLI::ValidationError("--out", "gen needs --out <path>");
      const auto graphs = synth_generate(cfg.gen);
      write_graphs(graphs, g.out);
      std::vector<std::string> ids;
      for (const auto& x : graphs) ids.push_back(x.id);
      save_meta(meta_path(g.out), make_folds(ids, cfg.eval.folds, cfg.eval.test_fraction, cfg.seed));
      std::cerr << "wrote " << graphs.size() << " graphs to " << g.out << "\n";
    } else if (mine->parsed()) {
      const Dataset ds = load_dataset(data, cfg.train.model.delta, &std::cerr);
      const DatasetMeta meta = fold >= 0 ? load_meta(meta_path(data)) : DatasetMeta{};
      const auto ts = mine_fold(ds, meta, fold, cfg.mining);
      Output out(g.out);
      write_triplets(ts, out.stream());
      std::cerr << "mined " << ts.size() << " triplets\n";
    } else if (trn->parsed()) {
      if (g.out.empty()) throw CLI::ValidationError("--out", "train needs --out <checkpoint path>");
      const Dataset ds = load_dataset(data, cfg.train.model.delta, &std::cerr);
      const DatasetMeta meta = fold >= 0 ? load_meta(meta_path(data)) : DatasetMeta{};
      const auto ts = read_triplets(triplets_path);
      TrainRun run = train_fold(ds, meta, fold, ts, cfg.train, [](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_acc " << e.val_accuracy << "\n";
      });
      save_checkpoint(g.out, run.model, run.provenance);
      std::ofstream rep(report.empty() ? g.out + ".report.csv" : report, std::ios::binary);
      write_train_report(run.report, rep);
      std::cerr << "best epoch " << run.report.best_epoch << " val_acc " << run.report.best_val_accuracy
                << (run.report.diverged ? " (diverged; kept last finite best)" : "") << "\n";
    } else if (emb->parsed()) {
      if (g.out.empty()) throw CLI::ValidationError("--out", "embed needs --out <index path>");
      const Checkpoint ck = load_checkpoint(checkpoint);
      const auto graphs = read_graphs(data).graphs;
      save_index(g.out, index_dataset(ck, graphs, cfg.threads));
      std::cerr << "indexed " << graphs.size() << " graphs\n";
    } else if (qry->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const EmbeddingIndex idx = load_index(index_path, kernel_config(ck));
      const auto qs = read_graphs(queries).graphs;
      Output out(g.out);
      write_rankings(query_index(idx, ck, qs, k, cfg.threads), out.stream());
    } else if (evl->parsed()) {
      const Dataset ds = load_dataset(data, cfg.train.model.delta, &std::cerr);
      const DatasetMeta meta = load_meta(meta_path(data));
      std::vector<FoldMetrics> folds;
      std::string mode;
      for (const auto& path : checkpoints) {
        const Checkpoint ck = load_checkpoint(path);
        mode = to_string(ck.model.config().mode);
        folds.push_back(evaluate_fold(ck, ds, meta, ck.provenance.fold, cfg));
      }
      const EvalSummary s = summarize(folds);
      Output out(g.out);
      write_eval_csv(s, mode, out.stream());
      std::cerr << mode << " P@5 " << s.mean_p5 << " +- " << s.std_p5 << ", P@10 " << s.mean_p10 << " +- " << s.std_p10
                << ", triplet accuracy " << s.mean_acc << " +- " << s.std_acc << " over " << s.folds.size()
                << " fold(s)\n";
    } else if (bch->parsed()) {
      const auto gallery = bench_gallery(cfg);
      std::vector<BenchResult> rs;
      auto run = [&](const Model& m, const KernelConfig& kc) {
        rs.push_back(bench_mode(m, kc, gallery, cfg.bench, cfg.seed));
        std::cerr << to_string(rs.back().mode) << ": " << rs.back().mean_s << " s +- " << rs.back().std_s << " per "
                  << cfg.bench.pairs << " pairs\n";
      };
      if (checkpoints.empty()) {
        for (Mode mode : {Mode::GKN, Mode::GEN, Mode::GMN}) {
          ModelConfig mc = cfg.train.model;
          mc.mode = mode;
          run(Model(mc), cfg.train.kernel);
        }
      } else {
        for (const auto& path : checkpoints) {
          const Checkpoint ck = load_checkpoint(path);
          run(ck.model, kernel_config(ck));
        }
      }
      Output out(g.out);
      write_bench_csv(rs, out.stream());
    } else if (swp->parsed()) {
      const Dataset ds = load_dataset(data, cfg.train.model.delta, &std::cerr);
      const DatasetMeta meta = load_meta(meta_path(data));
      const auto train_ts = mine_fold(ds, meta, fold, cfg.mining);
      MiningConfig test_mc = cfg.mining;
      test_mc.seed = splitmix64(cfg.mining.seed ^ 0x7e57ULL);
      const Dataset test = ds.subset(test_ids(meta, fold));
      const auto test_ts = mine_triplets(test, test_mc);
      const auto rows = sweep(ds, train_ts, test_ts, cfg, [](const SweepRow& r) {
        std::cerr << to_string(r.mode) << " d=" << r.d << " L=" << r.layers << " acc " << r.triplet_accuracy << "\n";
      });
      Output out(g.out);
      write_sweep_csv(rows, out.stream());
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
