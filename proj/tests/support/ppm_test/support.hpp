// Shared fixtures and independent oracles for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ppm/durbin.hpp"
#include "ppm/evalkit.hpp"
#include "ppm/eventlog.hpp"
#include "ppm/models.hpp"
#include "ppm/nn/ops.hpp"
#include "ppm/nn/tensor.hpp"
#include "ppm/repr.hpp"
#include "ppm/rng.hpp"
#include "ppm/timestamp.hpp"

namespace ppm_test {

using ppm::Matrix;
using ppm::Vector;

inline ppm::EventLog log_from_csv(const std::string& csv, const ppm::SchemaSpec& schema = {}) {
  std::istringstream in(csv);
  return ppm::parse_event_log(in, schema, "inline");
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, ppm::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Values bounded away from zero so kinks (relu, abs) stay out of finite-difference reach.
inline Matrix random_away_from_zero(Eigen::Index r, Eigen::Index c, ppm::Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = rng.uniform(0.1, 1.0);
    m.data()[i] = rng.bernoulli(0.5) ? v : -v;
  }
  return m;
}

/// Largest norm-wise relative error between the analytic gradient and central
/// differences, over all `params`. `f` must rebuild the graph on every call.
inline double gradient_error(const std::function<ppm::nn::Tensor()>& f, std::vector<ppm::nn::Tensor> params,
                             double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& p : params) {
    const Matrix analytic = p.grad();
    Matrix numeric(analytic.rows(), analytic.cols());
    for (Eigen::Index i = 0; i < p.value().size(); ++i) {
      double& x = p.mutable_value().data()[i];
      const double saved = x;
      x = saved + h;
      const double up = f().item();
      x = saved - h;
      const double down = f().item();
      x = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    const double err = (analytic - numeric).norm() / scale;
    if (analytic.norm() < 1e-10 && numeric.norm() < 1e-10) continue;
    worst = std::max(worst, err);
  }
  return worst;
}

/// Dense evaluation of D^-1/2 (A_w + I) D^-1/2 with undirected weighted edges.
inline Matrix dense_normalized_adjacency(Eigen::Index n, const std::vector<std::pair<int, int>>& edges,
                                         const std::vector<double>& weights) {
  Matrix a = Matrix::Identity(n, n);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    a(edges[k].first, edges[k].second) += weights[k];
    a(edges[k].second, edges[k].first) += weights[k];
  }
  const Vector deg = a.rowwise().sum();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) d(i, i) = 1.0 / std::sqrt(deg(i));
  return d * a * d;
}

// ---------------------------------------------------------------------------
// Brute-force duration binning oracle: sort, pick nearest-rank order
// statistics, count membership directly.

struct BinOracle {
  std::map<std::int64_t, std::size_t> unique;  // value -> id
  std::vector<double> edges;
  std::size_t bins = 0;

  std::size_t assign(std::int64_t d) const {
    if (auto it = unique.find(d); it != unique.end()) return it->second;
    const std::size_t base = unique.size();
    if (edges.empty()) return base;
    if (edges.size() == 1) return base;
    const std::size_t nq = edges.size() - 1;
    for (std::size_t i = 0; i + 1 < nq; ++i) {
      if (static_cast<double>(d) < edges[i + 1]) return base + i;
    }
    return base + nq - 1;
  }
};

/// One binning pass at fixed (t_cut, n_quant).
inline BinOracle oracle_bins(std::vector<std::int64_t> durations, std::int64_t t_cut, int n_quant) {
  std::sort(durations.begin(), durations.end());
  BinOracle o;
  std::vector<std::int64_t> above;
  for (auto d : durations) {
    if (d < t_cut) {
      if (!o.unique.count(d)) o.unique.emplace(d, o.unique.size());
    } else {
      above.push_back(d);
    }
  }
  if (!above.empty()) {
    const std::size_t m = above.size();
    std::vector<double> e{static_cast<double>(above.front())};
    for (int k = 1; k < n_quant; ++k) {
      // nearest-rank statistic at rank ceil(k m / q), midpoint to the next one
      const std::size_t rank = (static_cast<std::size_t>(k) * m + static_cast<std::size_t>(n_quant) - 1) /
                               static_cast<std::size_t>(n_quant);
      if (rank >= m) continue;
      const double cut = 0.5 * (static_cast<double>(above[rank - 1]) + static_cast<double>(above[rank]));
      if (cut <= e.back()) continue;
      if (cut >= static_cast<double>(above.back())) continue;
      e.push_back(cut);
    }
    if (static_cast<double>(above.back()) > e.back()) e.push_back(static_cast<double>(above.back()));
    o.edges = e;
  }
  const std::size_t nq = o.edges.empty() ? 0 : (o.edges.size() == 1 ? 1 : o.edges.size() - 1);
  o.bins = o.unique.size() + nq;
  return o;
}

// ---------------------------------------------------------------------------
// Naive TF-IDF: count terms per case, then weight.

struct TfidfOracle {
  std::map<std::string, std::map<std::pair<std::string, std::size_t>, double>> entries;  // case -> term -> value
};

inline TfidfOracle oracle_tfidf(const ppm::EventLog& log, const ppm::DurationBinning& binning,
                                const std::set<std::string>& train) {
  using Term = std::pair<std::string, std::size_t>;
  std::map<std::string, std::map<Term, std::size_t>> counts;
  for (const auto& c : log.cases()) {
    for (const auto& e : c.events) ++counts[c.case_id][{e.activity, ppm::assign_bin(e.duration_min, binning)}];
  }
  std::map<Term, std::size_t> df;
  for (const auto& id : train) {
    for (const auto& [t, n] : counts[id]) ++df[t];
  }
  const double n_docs = static_cast<double>(train.size());
  TfidfOracle o;
  for (const auto& c : log.cases()) {
    const double len = static_cast<double>(c.events.size());
    for (const auto& [t, n] : counts[c.case_id]) {
      auto it = df.find(t);
      if (it == df.end()) continue;
      const double idf = std::log(n_docs / (1.0 + static_cast<double>(it->second))) + 1.0;
      o.entries[c.case_id][t] = (static_cast<double>(n) / len) * idf;
    }
  }
  return o;
}

// Reference loop: rebuild with the oracle until balanced or out of iterations.
inline BinOracle oracle_fit_bins(const std::vector<std::int64_t>& d, const ppm::BinningParams& p, int& iterations) {
  std::int64_t t_cut = p.t_cut;
  int n_quant = p.n_quant;
  for (int it = 1;; ++it) {
    auto o = oracle_bins(d, t_cut, n_quant);
    std::vector<double> counts;
    const std::size_t nq = o.bins - o.unique.size();
    counts.assign(nq, 0.0);
    for (auto x : d) {
      if (x >= t_cut) counts[o.assign(x) - o.unique.size()] += 1.0;
    }
    double cv = 0.0;
    if (counts.size() >= 2) {
      double mean = 0.0;
      for (double c : counts) mean += c;
      mean /= static_cast<double>(counts.size());
      double var = 0.0;
      for (double c : counts) var += (c - mean) * (c - mean);
      cv = std::sqrt(var / static_cast<double>(counts.size())) / mean;
    }
    if (cv <= p.balance_threshold || it >= p.max_iterations) {
      iterations = it;
      return o;
    }
    if (it % 2 == 1) {
      n_quant = std::max(1, n_quant / 2);
    } else {
      ++t_cut;
    }
  }
}

/// Single-attribute log: `cases` up to max_cases, activities A0..A{n_acts-1},
/// durations mixing sub-cut and long values.
inline ppm::EventLog random_duration_log(ppm::Rng& rng, int max_cases, int n_acts, int max_len) {
  std::ostringstream csv;
  csv << "case_id,activity,start_ts,end_ts,outcome\n";
  const auto cases = rng.uniform_int(1, max_cases);
  for (std::int64_t c = 0; c < cases; ++c) {
    const auto n = rng.uniform_int(1, max_len);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto dur = rng.bernoulli(0.4) ? rng.uniform_int(0, 3) : rng.uniform_int(4, 200);
      const std::int64_t start = 1600000000000LL + (c * 1000 + i * 10) * 60000;
      csv << "k" << c << ",A" << rng.uniform_int(0, n_acts - 1) << ',' << ppm::Timestamp(start).to_iso8601() << ','
          << ppm::Timestamp(start + dur * 60000).to_iso8601() << ",y\n";
    }
  }
  return log_from_csv(csv.str());
}

inline std::set<std::string> random_train_ids(const ppm::EventLog& log, ppm::Rng& rng) {
  std::set<std::string> train;
  for (const auto& c : log.cases()) {
    if (rng.bernoulli(0.7) || train.empty()) train.insert(c.case_id);
  }
  return train;
}

inline std::vector<std::int64_t> durations_of(const ppm::EventLog& log, const std::set<std::string>& ids) {
  std::vector<std::int64_t> out;
  for (const auto& id : ids) {
    for (const auto& e : log.find_case(id)->events) out.push_back(e.duration_min);
  }
  return out;
}

/// Empty when build_pseudo_embedding equals the naive recomputation entry for entry.
inline std::string tfidf_mismatches(const ppm::EventLog& log, const ppm::DurationBinning& binning,
                                    const std::set<std::string>& train) {
  const auto emb = ppm::build_pseudo_embedding(log, binning, train);
  const auto oracle = oracle_tfidf(log, binning, train);
  for (const auto& c : log.cases()) {
    const Matrix& m = emb.case_matrix(c.case_id);
    std::size_t nonzero = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) nonzero += m(r, k) != 0.0;
    }
    const auto it = oracle.entries.find(c.case_id);
    const std::size_t expected = it == oracle.entries.end() ? 0 : it->second.size();
    if (nonzero != expected) return c.case_id + ": " + std::to_string(nonzero) + " non-zero entries, expected " +
                                   std::to_string(expected);
    if (it == oracle.entries.end()) continue;
    for (const auto& [term, value] : it->second) {
      const double got = m(emb.activity_row(term.first), static_cast<Eigen::Index>(term.second));
      if (got != value) return c.case_id + " " + term.first + "/" + std::to_string(term.second);
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// Random representations for model-level tests.

inline ppm::CaseGraph random_graph(int n, Eigen::Index node_dim, Eigen::Index pseudo_dim, Eigen::Index case_dim,
                                   std::size_t classes, ppm::Rng& rng, const std::string& id = "g") {
  ppm::CaseGraph g;
  g.case_id = id;
  g.node_matrix = random_matrix(n, node_dim, rng);
  if (pseudo_dim > 0) g.pseudo_matrix = random_matrix(n, pseudo_dim, rng, 0.0, 1.0);
  g.edge_index.resize(2, n - 1);
  g.edge_weight.resize(n - 1);
  for (int k = 0; k + 1 < n; ++k) {
    g.edge_index(0, k) = k;
    g.edge_index(1, k) = k + 1;
    g.edge_weight(k) = rng.uniform();
  }
  for (int k = 0; k < n; ++k) g.activities.push_back("A" + std::to_string(k % 3));
  g.case_vector = random_matrix(case_dim, 1, rng).col(0);
  g.outcome_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(classes) - 1));
  return g;
}

inline ppm::CaseSequence random_sequence(int len, int max_len, Eigen::Index node_dim, Eigen::Index pseudo_dim,
                                         Eigen::Index case_dim, std::size_t classes, ppm::Rng& rng,
                                         const std::string& id = "s") {
  ppm::CaseSequence s;
  s.case_id = id;
  s.seq_matrix = Matrix::Zero(max_len, node_dim + 1);
  s.seq_matrix.topRows(len) = random_matrix(len, node_dim + 1, rng);
  if (pseudo_dim > 0) {
    s.pseudo_seq = Matrix::Zero(max_len, pseudo_dim);
    s.pseudo_seq->topRows(len) = random_matrix(len, pseudo_dim, rng, 0.0, 1.0);
  }
  s.mask.assign(static_cast<std::size_t>(max_len), 0);
  for (int t = 0; t < len; ++t) {
    s.mask[static_cast<std::size_t>(t)] = 1;
    s.activities.push_back("A" + std::to_string(t % 3));
  }
  s.case_vector = random_matrix(case_dim, 1, rng).col(0);
  s.outcome_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(classes) - 1));
  return s;
}

/// Minimal valid layer config.
inline ppm::nn::LayerConfig layer(ppm::nn::LayerKind kind, int units,
                                  ppm::nn::Activation act = ppm::nn::Activation::kTanh) {
  ppm::nn::LayerConfig c;
  c.kind = kind;
  c.units = units;
  c.activation = act;
  return c;
}

/// Small model of the given variant with tanh activations throughout.
inline ppm::ModelConfig small_config(ppm::Family family, bool duration_aware, int units = 6) {
  using ppm::nn::LayerKind;
  const LayerKind enc = family == ppm::Family::kGcn ? LayerKind::kGcnConv : LayerKind::kLstm;
  ppm::ModelConfig c;
  c.family = family;
  c.node_layers = {layer(enc, units), layer(enc, units)};
  if (duration_aware) {
    c.pseudo_layers = {layer(enc, units)};
    c.post_fusion_layers = {layer(enc, units)};
  }
  c.case_layers = {layer(LayerKind::kDense, 4)};
  c.head_layers = {layer(LayerKind::kDense, 5)};
  c.pooling = ppm::nn::PoolMethod::kMean;
  c.batch_size = 16;
  return c;
}

/// Largest logit change when padding rows of a sequence batch are overwritten
/// with noise and the batch is re-padded to a longer max_len; for graphs, when
/// edge columns are stored in shuffled order and when each case is scored alone
/// instead of inside a mixed-size batch. Eval mode.
inline double masking_invariance_error(ppm::Family family, bool duration_aware, std::uint64_t seed) {
  ppm::Rng rng(seed);
  ppm::ModelConfig cfg = small_config(family, duration_aware, 5);
  for (auto* layers : {&cfg.node_layers, &cfg.pseudo_layers, &cfg.post_fusion_layers}) {
    for (auto& l : *layers) {
      l.batch_norm = true;
      l.dropout = 0.3;
    }
  }
  const ppm::InputDims dims{4, duration_aware ? 3 : 0, 2, 3};
  ppm::Model model(cfg, dims, seed);
  double worst = 0.0;
  if (family == ppm::Family::kLstm) {
    std::vector<ppm::CaseSequence> batch;
    for (int i = 0; i < 6; ++i) {
      batch.push_back(random_sequence(static_cast<int>(rng.uniform_int(1, 6)), 6, 4, dims.pseudo_dim, 2, 3, rng));
    }
    const Matrix base = model.forward(std::span<const ppm::CaseSequence>(batch), false).value();
    std::vector<ppm::CaseSequence> noisy = batch;
    std::vector<ppm::CaseSequence> longer = batch;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto len = static_cast<Eigen::Index>(batch[b].length());
      const Eigen::Index pad = 6 - len;
      if (pad > 0) {
        noisy[b].seq_matrix.bottomRows(pad) = random_matrix(pad, 5, rng, -50.0, 50.0);
        if (duration_aware) noisy[b].pseudo_seq->bottomRows(pad) = random_matrix(pad, 3, rng, -50.0, 50.0);
      }
      longer[b].seq_matrix.conservativeResize(10, Eigen::NoChange);
      longer[b].seq_matrix.bottomRows(4) = random_matrix(4, 5, rng);
      if (duration_aware) {
        longer[b].pseudo_seq->conservativeResize(10, Eigen::NoChange);
        longer[b].pseudo_seq->bottomRows(4) = random_matrix(4, 3, rng);
      }
      longer[b].mask.resize(10, 0);
    }
    const Matrix a = model.forward(std::span<const ppm::CaseSequence>(noisy), false).value();
    const Matrix c = model.forward(std::span<const ppm::CaseSequence>(longer), false).value();
    worst = std::max((a - base).cwiseAbs().maxCoeff(), (c - base).cwiseAbs().maxCoeff());
  } else {
    std::vector<ppm::CaseGraph> batch;
    for (int i = 0; i < 6; ++i) {
      batch.push_back(random_graph(static_cast<int>(rng.uniform_int(1, 8)), 4, dims.pseudo_dim, 2, 3, rng));
    }
    const Matrix base = model.forward(std::span<const ppm::CaseGraph>(batch), false).value();
    std::vector<ppm::CaseGraph> shuffled = batch;
    for (auto& g : shuffled) {
      std::vector<Eigen::Index> order(g.num_edges());
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      rng.shuffle(std::span<Eigen::Index>(order));
      const auto idx = g.edge_index;
      const Vector w = g.edge_weight;
      for (std::size_t k = 0; k < order.size(); ++k) {
        g.edge_index.col(static_cast<Eigen::Index>(k)) = idx.col(order[k]);
        g.edge_weight(static_cast<Eigen::Index>(k)) = w(order[k]);
      }
    }
    const Matrix permuted = model.forward(std::span<const ppm::CaseGraph>(shuffled), false).value();
    worst = (permuted - base).cwiseAbs().maxCoeff();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Matrix alone = model.forward(std::span<const ppm::CaseGraph>(&batch[b], 1), false).value();
      worst = std::max(worst, (alone.row(0) - base.row(static_cast<Eigen::Index>(b))).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Metrics recomputed straight from the label pairs, one class at a time.

struct MetricsOracle {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double accuracy = 0.0, macro_f1 = 0.0, weighted_f1 = 0.0;
};

inline MetricsOracle oracle_metrics(const std::vector<std::size_t>& y_true, const std::vector<std::size_t>& y_pred,
                                    std::size_t k) {
  MetricsOracle o;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  const double n = static_cast<double>(y_true.size());
  o.accuracy = static_cast<double>(hits) / n;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_pred[i] == c && y_true[i] == c) ++tp;
      if (y_pred[i] == c && y_true[i] != c) ++fp;
      if (y_pred[i] != c && y_true[i] == c) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    o.precision.push_back(p);
    o.recall.push_back(r);
    o.f1.push_back(p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r));
    o.support.push_back(tp + fn);
  }
  for (std::size_t c = 0; c < k; ++c) {
    o.macro_f1 += o.f1[c];
    o.weighted_f1 += static_cast<double>(o.support[c]) / n * o.f1[c];
  }
  o.macro_f1 /= static_cast<double>(k);
  return o;
}

/// Empty string when the report equals the oracle bit for bit, else the first mismatch.
inline std::string compare_with_oracle(const ppm::ClassificationReport& r, const MetricsOracle& o) {
  auto diff = [](const std::string& what, double a, double b) {
    return a == b ? std::string() : what + ": " + std::to_string(a) + " vs " + std::to_string(b);
  };
  std::string msg;
  for (std::size_t c = 0; c < o.f1.size() && msg.empty(); ++c) {
    if (r.classes[c].support != o.support[c]) return "support of class " + std::to_string(c);
    msg = diff("precision", r.classes[c].precision, o.precision[c]);
    if (msg.empty()) msg = diff("recall", r.classes[c].recall, o.recall[c]);
    if (msg.empty()) msg = diff("f1", r.classes[c].f1, o.f1[c]);
  }
  if (msg.empty()) msg = diff("accuracy", r.accuracy, o.accuracy);
  if (msg.empty()) msg = diff("macro_f1", r.macro_f1, o.macro_f1);
  if (msg.empty()) msg = diff("weighted_f1", r.weighted_f1, o.weighted_f1);
  return msg;
}

}  // namespace ppm_test
