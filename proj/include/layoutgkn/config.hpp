#pragma once

// Flat key=value run configuration. '#' starts a comment; unknown keys are errors.
// One root `seed` feeds generation, fold assignment, mining, initialization and shuffling.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "exact_metrics.hpp"
#include "model.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace lgkn {

struct EvalConfig {
  int folds = 4;
  double test_fraction = 0.2;
  int top = 50;            // model shortlist re-ranked on ground truth
  std::string gt = "sged";  // sged | miou
  int resolution = 128;
  int max_queries = 0;     // 0: every test graph
};

struct BenchConfig {
  int pairs = 10000;
  int runs = 5;
  int warmup = 1;
  int nodes = 8;  // graph size of the benchmark gallery
};

struct SweepConfig {
  std::vector<Mode> modes{Mode::GKN, Mode::GEN};
  std::vector<int> d{8, 16, 32, 64};
  std::vector<int> layers{5};
};

struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig gen;
  MiningConfig mining;
  TrainConfig train;
  EvalConfig eval;
  BenchConfig bench;
  SweepConfig sweep;
  int threads = 1;

  void set_seed(std::uint64_t s) {
    seed = s;
    gen.seed = s;
    mining.seed = s;
    train.seed = s;
    train.model.seed = s;
  }
  void set_threads(int t) {
    if (t < 1) throw InvalidArgument("threads must be >= 1");
    threads = t;
    mining.threads = t;
    train.threads = t;
  }
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw InvalidArgument("config: key '" + key + "' has invalid value '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InvalidArgument("config: key '" + key + "' expects a boolean, got '" + v + "'");
}
}  // namespace detail

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_number;
  const std::map<std::string, std::function<void()>> setters = {
      {"seed", [&] { c.set_seed(parse_number<std::uint64_t>(key, v)); }},
      {"threads", [&] { c.set_threads(parse_number<int>(key, v)); }},
      // generation
      {"count", [&] { c.gen.count = parse_number<int>(key, v); }},
      {"rooms_min", [&] { c.gen.rooms_min = parse_number<int>(key, v); }},
      {"rooms_max", [&] { c.gen.rooms_max = parse_number<int>(key, v); }},
      {"extra_door_prob", [&] { c.gen.extra_door_prob = parse_number<double>(key, v); }},
      {"wall_edge_prob", [&] { c.gen.wall_edge_prob = parse_number<double>(key, v); }},
      {"category_weights",
       [&] {
         auto items = detail::split_list(v);
         if (items.size() != kNumCategories)
           throw InvalidArgument("config: category_weights needs " + std::to_string(kNumCategories) + " values");
         for (int i = 0; i < kNumCategories; ++i) c.gen.category_weights[i] = parse_number<double>(key, items[i]);
       }},
      {"id_prefix", [&] { c.gen.id_prefix = v; }},
      // mining
      {"per_anchor", [&] { c.mining.per_anchor = parse_number<int>(key, v); }},
      {"mining_candidates", [&] { c.mining.candidates = parse_number<int>(key, v); }},
      {"positive_lo", [&] { c.mining.positive_lo = parse_number<double>(key, v); }},
      {"positive_hi", [&] { c.mining.positive_hi = parse_number<double>(key, v); }},
      {"ratio_lo", [&] { c.mining.ratio_lo = parse_number<double>(key, v); }},
      {"ratio_hi", [&] { c.mining.ratio_hi = parse_number<double>(key, v); }},
      {"mining_resolution", [&] { c.mining.resolution = parse_number<int>(key, v); }},
      {"node_sub_cost", [&] { c.mining.costs.node_sub = parse_number<double>(key, v); }},
      {"node_indel_cost",
       [&] { c.mining.costs.node_ins = c.mining.costs.node_del = parse_number<double>(key, v); }},
      {"edge_sub_cost", [&] { c.mining.costs.edge_sub = parse_number<double>(key, v); }},
      {"edge_indel_cost",
       [&] { c.mining.costs.edge_ins = c.mining.costs.edge_del = parse_number<double>(key, v); }},
      // model
      {"mode", [&] { c.train.model.mode = parse_mode(v); }},
      {"d", [&] { c.train.model.d = parse_number<int>(key, v); }},
      {"layers", [&] { c.train.model.layers = parse_number<int>(key, v); }},
      {"d_g", [&] { c.train.model.d_g = parse_number<int>(key, v); }},
      {"layer_norm", [&] { c.train.model.layer_norm = parse_bool(key, v); }},
      {"batch_norm", [&] { c.train.model.batch_norm = parse_bool(key, v); }},
      {"delta",
       [&] {
         c.train.model.delta = parse_number<int>(key, v);
         c.train.kernel.delta = c.train.model.delta;
       }},
      {"mu",
       [&] {
         if (v == "auto") c.train.kernel.mu.reset();
         else c.train.kernel.mu = parse_number<double>(key, v);
       }},
      // training
      {"lr", [&] { c.train.lr = parse_number<double>(key, v); }},
      {"batch_size", [&] { c.train.batch_size = parse_number<int>(key, v); }},
      {"max_epochs", [&] { c.train.max_epochs = parse_number<int>(key, v); }},
      {"patience", [&] { c.train.patience = parse_number<int>(key, v); }},
      {"margin", [&] { c.train.margin = parse_number<double>(key, v); }},
      {"beta1", [&] { c.train.beta1 = parse_number<double>(key, v); }},
      {"beta2", [&] { c.train.beta2 = parse_number<double>(key, v); }},
      {"adam_eps", [&] { c.train.eps = parse_number<double>(key, v); }},
      {"weight_decay", [&] { c.train.weight_decay = parse_number<double>(key, v); }},
      {"val_fraction", [&] { c.train.val_fraction = parse_number<double>(key, v); }},
      // evaluation
      {"folds", [&] { c.eval.folds = parse_number<int>(key, v); }},
      {"test_fraction", [&] { c.eval.test_fraction = parse_number<double>(key, v); }},
      {"eval_top", [&] { c.eval.top = parse_number<int>(key, v); }},
      {"eval_gt",
       [&] {
         if (v != "sged" && v != "miou") throw InvalidArgument("config: eval_gt must be sged or miou");
         c.eval.gt = v;
       }},
      {"eval_resolution", [&] { c.eval.resolution = parse_number<int>(key, v); }},
      {"eval_max_queries", [&] { c.eval.max_queries = parse_number<int>(key, v); }},
      // benchmark
      {"bench_pairs", [&] { c.bench.pairs = parse_number<int>(key, v); }},
      {"bench_runs", [&] { c.bench.runs = parse_number<int>(key, v); }},
      {"bench_warmup", [&] { c.bench.warmup = parse_number<int>(key, v); }},
      {"bench_nodes", [&] { c.bench.nodes = parse_number<int>(key, v); }},
      // sweep
      {"sweep_modes",
       [&] {
         c.sweep.modes.clear();
         for (const auto& s : detail::split_list(v)) c.sweep.modes.push_back(parse_mode(s));
       }},
      {"sweep_d",
       [&] {
         c.sweep.d.clear();
         for (const auto& s : detail::split_list(v)) c.sweep.d.push_back(parse_number<int>(key, s));
       }},
      {"sweep_layers",
       [&] {
         c.sweep.layers.clear();
         for (const auto& s : detail::split_list(v)) c.sweep.layers.push_back(parse_number<int>(key, s));
       }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw InvalidArgument("config: unknown key '" + key + "'");
  it->second();
}

inline void apply_config(RunConfig& c, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedInput(lineno, "expected key=value, got '" + line + "'");
    try {
      apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const InvalidArgument& e) {
      throw MalformedInput(lineno, e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  RunConfig c;
  apply_config(c, in);
  return c;
}

}  // namespace lgkn
