#pragma once

// Triplet mining on sGED, triplet losses, AdamW, and the early-stopped training loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "exact_metrics.hpp"
#include "graph.hpp"
#include "kernel.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "synth.hpp"

namespace lgkn {

// Graphs addressable by id, with shortest-path histograms computed once.
class Dataset {
 public:
  explicit Dataset(std::vector<FloorPlanGraph> graphs, int delta = kDefaultDelta)
      : graphs_(std::move(graphs)), delta_(delta) {
    for (std::size_t i = 0; i < graphs_.size(); ++i) {
      if (!index_.emplace(graphs_[i].id, i).second)
        throw InvalidArgument("Dataset: duplicate graph id '" + graphs_[i].id + "'");
      hist_.push_back(histogram_matrix(shortest_path_histograms(graphs_[i], delta_)));
    }
  }

  std::size_t size() const { return graphs_.size(); }
  int delta() const { return delta_; }
  std::span<const FloorPlanGraph> graphs() const { return graphs_; }
  const FloorPlanGraph& operator[](std::size_t i) const { return graphs_[i]; }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InvalidArgument("Dataset: unknown graph id '" + id + "'");
    return it->second;
  }
  const FloorPlanGraph& at(const std::string& id) const { return graphs_[index_of(id)]; }
  const HistogramMatrix& histograms(std::size_t i) const { return hist_[i]; }

  // Subset in the given order.
  Dataset subset(const std::vector<std::string>& ids) const {
    std::vector<FloorPlanGraph> out;
    for (const auto& id : ids) out.push_back(at(id));
    return Dataset(std::move(out), delta_);
  }

 private:
  std::vector<FloorPlanGraph> graphs_;
  int delta_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<HistogramMatrix> hist_;
};

struct Triplet {
  std::string anchor, positive, negative;
  double sged_ap = 0, sged_an = 0;
  bool operator==(const Triplet&) const = default;
};

struct MiningConfig {
  int per_anchor = 4;
  int candidates = 50;  // MIoU shortlist size re-ranked on sGED
  double positive_lo = 0.6, positive_hi = 0.9;
  double ratio_lo = 0.7, ratio_hi = 0.9;
  int resolution = 64;
  std::uint64_t seed = 0;
  EditCostModel costs;
  int threads = 1;
};

inline bool satisfies_mining_rules(const Triplet& t, const MiningConfig& c) {
  const double ratio = t.sged_an / t.sged_ap;
  return c.positive_lo < t.sged_ap && t.sged_ap < c.positive_hi && c.ratio_lo < ratio && ratio < c.ratio_hi;
}

// For each anchor: shortlist the `candidates` best others on MIoU, score them on sGED and
// emit up to per_anchor (positive, negative) combinations that pass both threshold rules.
inline std::vector<Triplet> mine_triplets(const Dataset& data, const MiningConfig& cfg) {
  const std::size_t n = data.size();
  if (cfg.candidates < 1 || cfg.per_anchor < 0) throw InvalidArgument("MiningConfig: bad candidates/per_anchor");
  if (n < static_cast<std::size_t>(cfg.candidates) + 1)
    throw InvalidArgument("mine_triplets: need at least " + std::to_string(cfg.candidates + 1) + " graphs, got " +
                          std::to_string(n));
  std::vector<CategoryRaster> rasters(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) { rasters[i] = rasterize(data[i], {cfg.resolution}); });

  std::vector<std::vector<Triplet>> per(n);
  parallel_for(n, cfg.threads, [&](std::size_t a) {
    std::vector<std::pair<double, std::size_t>> shortlist;
    shortlist.reserve(n - 1);
    for (std::size_t b = 0; b < n; ++b)
      if (b != a) shortlist.emplace_back(miou(rasters[a], rasters[b]), b);
    std::partial_sort(shortlist.begin(), shortlist.begin() + cfg.candidates, shortlist.end(),
                      [](const auto& x, const auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
    shortlist.resize(static_cast<std::size_t>(cfg.candidates));
    std::vector<std::pair<std::size_t, double>> scored;
    for (const auto& [iou, b] : shortlist) scored.emplace_back(b, sged(data[a], data[b], cfg.costs));

    std::vector<std::pair<std::size_t, std::size_t>> combos;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      const double sp = scored[i].second;
      if (!(cfg.positive_lo < sp && sp < cfg.positive_hi)) continue;
      for (std::size_t j = 0; j < scored.size(); ++j) {
        if (j == i) continue;
        const double ratio = scored[j].second / sp;
        if (cfg.ratio_lo < ratio && ratio < cfg.ratio_hi) combos.emplace_back(i, j);
      }
    }
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(a)));
    std::shuffle(combos.begin(), combos.end(), rng);
    if (combos.size() > static_cast<std::size_t>(cfg.per_anchor)) combos.resize(static_cast<std::size_t>(cfg.per_anchor));
    for (auto [i, j] : combos)
      per[a].push_back({data[a].id, data[scored[i].first].id, data[scored[j].first].id, scored[i].second,
                        scored[j].second});
  });
  std::vector<Triplet> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// [m + log(k_an / k_ap) + 0.5 log(k_pp / k_nn)]_+ ; k(a, a) cancels and is never formed.
inline ad::Tensor gkn_loss(const ad::Tensor& ha, const ad::Tensor& hp, const ad::Tensor& hn, const HistogramMatrix& ma,
                           const HistogramMatrix& mp, const HistogramMatrix& mn, double mu, double margin) {
  ad::Tensor k_ap = graph_kernel(ha, hp, histogram_gram(ma, mp), mu);
  ad::Tensor k_an = graph_kernel(ha, hn, histogram_gram(ma, mn), mu);
  ad::Tensor k_pp = graph_kernel(hp, hp, histogram_gram(mp, mp), mu);
  ad::Tensor k_nn = graph_kernel(hn, hn, histogram_gram(mn, mn), mu);
  ad::Tensor rel = ad::sub(ad::log(k_an), ad::log(k_ap));
  ad::Tensor norm = ad::scale(ad::sub(ad::log(k_pp), ad::log(k_nn)), 0.5);
  return ad::relu(ad::shift(ad::add(rel, norm), margin));
}

namespace detail {
inline constexpr double kDistanceEps = 1e-12;
inline ad::Tensor euclidean(const ad::Tensor& a, const ad::Tensor& b) {
  return ad::sqrt(ad::shift(ad::sum(ad::square(ad::sub(a, b))), kDistanceEps));
}
}  // namespace detail

// [||a - p|| - ||a - n|| + m]_+ on pooled graph vectors. GMN passes the anchor twice since
// its anchor vector depends on the graph it is compared with.
inline ad::Tensor margin_loss(const ad::Tensor& va_p, const ad::Tensor& vp, const ad::Tensor& va_n,
                              const ad::Tensor& vn, double margin) {
  return ad::relu(ad::shift(ad::sub(detail::euclidean(va_p, vp), detail::euclidean(va_n, vn)), margin));
}

inline ad::Tensor margin_loss(const ad::Tensor& va, const ad::Tensor& vp, const ad::Tensor& vn, double margin) {
  return margin_loss(va, vp, va, vn, margin);
}

class AdamW {
 public:
  struct Options {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
  };

  AdamW(std::vector<NamedTensor> params, Options o) : params_(std::move(params)), o_(o) {
    for (const auto& p : params_) {
      m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(o_.beta1, t_), c2 = 1.0 - std::pow(o_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ad::Tensor p = params_[i].tensor;
      Matrix& w = p.mutable_value();
      const Matrix& g = p.grad();
      w *= 1.0 - o_.lr * o_.weight_decay;
      m_[i] = o_.beta1 * m_[i] + (1 - o_.beta1) * g;
      v_[i] = o_.beta2 * v_[i] + (1 - o_.beta2) * g.cwiseProduct(g);
      w.array() -= o_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + o_.eps);
    }
  }

 private:
  std::vector<NamedTensor> params_;
  Options o_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

struct TrainConfig {
  ModelConfig model;
  KernelConfig kernel;
  double lr = 1e-4;
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 10;
  double margin = 0.1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
};

inline void check(const TrainConfig& c) {
  check(c.model);
  if (!(c.lr > 0)) throw InvalidArgument("TrainConfig: lr must be > 0");
  if (c.patience < 1) throw InvalidArgument("TrainConfig: patience must be >= 1");
  if (c.margin < 0) throw InvalidArgument("TrainConfig: margin must be >= 0");
  if (c.batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (c.max_epochs < 0) throw InvalidArgument("TrainConfig: max_epochs must be >= 0");
  if (c.val_fraction < 0 || c.val_fraction >= 1) throw InvalidArgument("TrainConfig: val_fraction must lie in [0, 1)");
  if (c.kernel.delta != c.model.delta) throw InvalidArgument("TrainConfig: kernel delta differs from model delta");
}

struct TripletScores {
  std::vector<std::pair<double, double>> preds;  // (s_ap, s_an)
  std::vector<double> losses;
  double accuracy = 0;
  double mean_loss = 0;
};

// Evaluation-mode similarities and losses; graphs are embedded once each except in GMN mode.
inline TripletScores score_triplets(const Model& m, const Dataset& data, std::span<const Triplet> triplets,
                                    double margin, const KernelConfig& kcfg, int threads = 1) {
  TripletScores out;
  if (triplets.empty()) return out;
  out.preds.resize(triplets.size());
  out.losses.resize(triplets.size());
  const Mode mode = m.config().mode;
  if (mode == Mode::GMN) {
    parallel_for(triplets.size(), threads, [&](std::size_t i) {
      const auto& t = triplets[i];
      auto [ap1, ap2] = gmn_pair_vectors(m, data.at(t.anchor), data.at(t.positive));
      auto [an1, an2] = gmn_pair_vectors(m, data.at(t.anchor), data.at(t.negative));
      const double dap = std::sqrt((ap1 - ap2).squaredNorm() + detail::kDistanceEps);
      const double dan = std::sqrt((an1 - an2).squaredNorm() + detail::kDistanceEps);
      out.preds[i] = {-(ap1 - ap2).norm(), -(an1 - an2).norm()};
      out.losses[i] = std::max(0.0, dap - dan + margin);
    });
  } else {
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& t : triplets)
      for (const auto* id : {&t.anchor, &t.positive, &t.negative})
        if (slot.emplace(*id, ids.size()).second) ids.push_back(*id);
    std::vector<EmbeddedGraph> emb(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t i) { emb[i] = embed(m, data.at(ids[i]), kcfg); });
    const double mu = kcfg.mu_for(m.config().embedding_dim());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      const auto& t = triplets[i];
      const EmbeddedGraph& a = emb[slot[t.anchor]];
      const EmbeddedGraph& p = emb[slot[t.positive]];
      const EmbeddedGraph& n = emb[slot[t.negative]];
      out.preds[i] = {embedded_similarity(mode, a, p, kcfg), embedded_similarity(mode, a, n, kcfg)};
      if (mode == Mode::GEN) {
        const double dap = std::sqrt((a.pooled - p.pooled).squaredNorm() + detail::kDistanceEps);
        const double dan = std::sqrt((a.pooled - n.pooled).squaredNorm() + detail::kDistanceEps);
        out.losses[i] = std::max(0.0, dap - dan + margin);
      } else {
        const double k_ap = graph_kernel(a.H, a.hist, p.H, p.hist, mu);
        const double k_an = graph_kernel(a.H, a.hist, n.H, n.hist, mu);
        out.losses[i] = std::max(0.0, margin + std::log(k_an / k_ap) + std::log(p.self_norm / n.self_norm));
      }
    }
  }
  out.accuracy = triplet_accuracy(out.preds);
  out.mean_loss = std::accumulate(out.losses.begin(), out.losses.end(), 0.0) / static_cast<double>(out.losses.size());
  return out;
}

// Mean training-mode loss of one batch, recorded on the active tape.
inline ad::Tensor batch_loss(Model& m, const Dataset& data, std::span<const Triplet> batch, const TrainConfig& cfg) {
  const Mode mode = m.config().mode;
  std::vector<const FloorPlanGraph*> graphs;
  std::vector<std::size_t> data_index;
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::array<int, 4>> slots;  // per triplet: graph slots (a, p, a', n)
  if (mode == Mode::GMN) {
    for (const auto& t : batch) {
      const int base = static_cast<int>(graphs.size());
      for (const auto* id : {&t.anchor, &t.positive, &t.anchor, &t.negative}) {
        data_index.push_back(data.index_of(*id));
        graphs.push_back(&data[data_index.back()]);
      }
      pairs.emplace_back(base, base + 1);
      pairs.emplace_back(base + 2, base + 3);
      slots.push_back({base, base + 1, base + 2, base + 3});
    }
  } else {
    std::unordered_map<std::string, int> slot;
    for (const auto& t : batch) {
      std::array<int, 4> s{};
      int k = 0;
      for (const auto* id : {&t.anchor, &t.positive, &t.anchor, &t.negative}) {
        auto [it, fresh] = slot.emplace(*id, static_cast<int>(graphs.size()));
        if (fresh) {
          data_index.push_back(data.index_of(*id));
          graphs.push_back(&data[data_index.back()]);
        }
        s[k++] = it->second;
      }
      slots.push_back(s);
    }
  }
  GraphBatch b = make_batch(graphs);
  ad::Tensor h = node_embeddings(m, b, &m.bn_states, mode == Mode::GMN ? &pairs : nullptr);
  std::vector<ad::Tensor> losses;
  if (uses_pooling(mode)) {
    ad::Tensor v = pool(m, h, b);
    for (const auto& s : slots)
      losses.push_back(margin_loss(ad::slice_rows(v, s[0], 1), ad::slice_rows(v, s[1], 1), ad::slice_rows(v, s[2], 1),
                                   ad::slice_rows(v, s[3], 1), cfg.margin));
  } else {
    const double mu = cfg.kernel.mu_for(m.config().embedding_dim());
    auto rows = [&](int slot) { return ad::slice_rows(h, b.offset[slot], b.graph_size(slot)); };
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      ad::Tensor l = gkn_loss(rows(s[0]), rows(s[1]), rows(s[3]), data.histograms(data_index[s[0]]),
                              data.histograms(data_index[s[1]]), data.histograms(data_index[s[3]]), mu, cfg.margin);
      if (!std::isfinite(l.item()))
        throw TrainingError("non-finite kernel loss on triplet (" + batch[i].anchor + ", " + batch[i].positive + ", " +
                            batch[i].negative + ")");
      losses.push_back(l);
    }
  }
  return ad::scale(ad::sum(ad::concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, val_loss = 0, val_accuracy = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0: initial parameters
  double best_val_accuracy = 0;
  double final_train_accuracy = 0;
  bool diverged = false;
  bool early_stopped = false;
  std::size_t train_triplets = 0, val_triplets = 0;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

struct TripletSplit {
  std::vector<Triplet> train, val;
};

// Holds out the triplets of a seeded `fraction` of anchors; with a single anchor (or fraction 0)
// validation reuses the training triplets.
inline TripletSplit split_by_anchor(std::span<const Triplet> triplets, double fraction, std::uint64_t seed) {
  std::vector<std::string> anchors;
  std::unordered_set<std::string> seen;
  for (const auto& t : triplets)
    if (seen.insert(t.anchor).second) anchors.push_back(t.anchor);
  std::sort(anchors.begin(), anchors.end());
  std::mt19937_64 rng(splitmix64(seed ^ 0x5eedULL));
  std::shuffle(anchors.begin(), anchors.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(anchors.size())));
  TripletSplit s;
  if (fraction <= 0 || anchors.size() < 2) {
    s.train.assign(triplets.begin(), triplets.end());
    s.val = s.train;
    return s;
  }
  n_val = std::clamp<std::size_t>(n_val, 1, anchors.size() - 1);
  std::unordered_set<std::string> val_anchors(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (const auto& t : triplets) (val_anchors.count(t.anchor) ? s.val : s.train).push_back(t);
  return s;
}

inline TrainResult train(const Dataset& data, std::span<const Triplet> triplets, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  check(cfg);
  if (triplets.empty()) throw InvalidArgument("train: no triplets");
  TrainResult result{Model(cfg.model), {}};
  Model& m = result.model;
  TrainReport& rep = result.report;
  TripletSplit split = split_by_anchor(triplets, cfg.val_fraction, cfg.seed);
  rep.train_triplets = split.train.size();
  rep.val_triplets = split.val.size();
  if (m.config().mode == Mode::GK || cfg.max_epochs == 0) {
    rep.final_train_accuracy = score_triplets(m, data, split.train, cfg.margin, cfg.kernel, cfg.threads).accuracy;
    rep.best_val_accuracy = score_triplets(m, data, split.val, cfg.margin, cfg.kernel, cfg.threads).accuracy;
    return result;
  }

  AdamW opt(m.parameters(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0xba7c4ULL));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  Model::Snapshot best = m.snapshot();
  double best_acc = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<Triplet> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(split.train[order[i]]);
      m.zero_grad();
      ad::Tape tape;
      ad::TapeScope scope(tape);
      ad::Tensor loss;
      try {
        loss = batch_loss(m, data, batch, cfg);
      } catch (const TrainingError&) {
        finite = false;
        break;
      }
      if (!std::isfinite(loss.item())) {
        finite = false;
        break;
      }
      tape.backward(loss);
      opt.step();
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    if (!finite) {
      rep.diverged = true;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    TripletScores val = score_triplets(m, data, split.val, cfg.margin, cfg.kernel, cfg.threads);
    rec.val_loss = val.mean_loss;
    rec.val_accuracy = val.accuracy;
    rep.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      best = m.snapshot();
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  m.restore(best);
  rep.best_val_accuracy = rep.best_epoch > 0 ? best_acc
                                             : score_triplets(m, data, split.val, cfg.margin, cfg.kernel, cfg.threads).accuracy;
  rep.final_train_accuracy = score_triplets(m, data, split.train, cfg.margin, cfg.kernel, cfg.threads).accuracy;
  return result;
}

}  // namespace lgkn
