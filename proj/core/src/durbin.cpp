#include "ppm/durbin.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ppm/error.hpp"

namespace ppm {

// ---------------------------------------------------------------------------
// Parameters

void BinningParams::validate() const {
  if (n_quant < 1) throw ConfigError("binning: n_quant must be >= 1");
  if (max_iterations < 1) throw ConfigError("binning: max_iterations must be >= 1");
  if (!(balance_threshold > 0.0)) throw ConfigError("binning: balance_threshold must be > 0");
  if (t_cut < 0) throw ConfigError("binning: t_cut must be >= 0");
}

nlohmann::json BinningParams::to_json() const {
  return {{"t_cut", t_cut}, {"n_quant", n_quant}, {"balance_threshold", balance_threshold},
          {"max_iterations", max_iterations}};
}

BinningParams BinningParams::from_json(const nlohmann::json& j) {
  BinningParams p;
  if (j.contains("preset")) p = preset(j.at("preset").get<std::string>());
  p.t_cut = j.value("t_cut", p.t_cut);
  p.n_quant = j.value("n_quant", p.n_quant);
  p.balance_threshold = j.value("balance_threshold", p.balance_threshold);
  p.max_iterations = j.value("max_iterations", p.max_iterations);
  p.validate();
  return p;
}

BinningParams BinningParams::preset(const std::string& name) {
  if (name == "patients") return {5, 24, 0.5, 10};
  if (name == "bpi12") return {1, 1, 0.5, 1};
  throw ConfigError("unknown binning preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Binning

std::size_t DurationBinning::quantile_bin_count() const {
  if (quantile_edges.empty()) return 0;
  return quantile_edges.size() == 1 ? 1 : quantile_edges.size() - 1;
}

double coefficient_of_variation(std::span<const std::size_t> counts) {
  if (counts.size() < 2) return 0.0;
  double mean = 0.0;
  for (auto c : counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(counts.size());
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (auto c : counts) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  var /= static_cast<double>(counts.size());
  return std::sqrt(var) / mean;
}

std::vector<double> quantile_edges(std::span<const std::int64_t> sorted, int n_quant) {
  if (sorted.empty()) return {};
  const auto m = sorted.size();
  const auto q = static_cast<std::size_t>(n_quant);
  const double lo = static_cast<double>(sorted.front());
  const double hi = static_cast<double>(sorted.back());
  std::vector<double> edges{lo};
  for (std::size_t k = 1; k < q; ++k) {
    const std::size_t rank = (k * m + q - 1) / q;  // ceil(k*m/q), 1-based
    if (rank >= m) continue;
    const double cut = 0.5 * (static_cast<double>(sorted[rank - 1]) + static_cast<double>(sorted[rank]));
    if (cut > edges.back() && cut < hi) edges.push_back(cut);
  }
  if (hi > lo) edges.push_back(hi);
  return edges;
}

namespace {

std::size_t quantile_slot(double x, const std::vector<double>& edges) {
  if (edges.size() <= 2) return 0;
  // Interior cuts are edges[1 .. size-2]; count how many are <= x.
  const auto first = edges.begin() + 1;
  const auto last = edges.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(first, last, x) - first);
}

DurationBinning build_bins(std::span<const std::int64_t> sorted, std::int64_t t_cut, int n_quant) {
  DurationBinning b;
  b.t_cut = t_cut;
  b.n_quant = n_quant;
  const auto split = std::lower_bound(sorted.begin(), sorted.end(), t_cut);
  for (auto it = sorted.begin(); it != split; ++it) {
    b.unique_bins.emplace(*it, b.unique_bins.size());
  }
  b.quantile_edges = quantile_edges(std::span<const std::int64_t>(split, sorted.end()), n_quant);
  b.bin_count = b.unique_bins.size() + b.quantile_bin_count();
  b.frequencies.assign(b.bin_count, 0);
  for (auto d : sorted) ++b.frequencies[assign_bin(d, b)];
  const std::span<const std::size_t> qfreq(b.frequencies.data() + b.unique_bins.size(), b.quantile_bin_count());
  b.balance_cv = coefficient_of_variation(qfreq);
  return b;
}

}  // namespace

std::size_t assign_bin(std::int64_t duration_min, const DurationBinning& b) {
  if (duration_min < 0) throw ValidityError("negative duration " + std::to_string(duration_min));
  const std::size_t n_unique = b.unique_bins.size();
  if (duration_min < b.t_cut || b.quantile_edges.empty()) {
    if (b.unique_bins.empty()) return 0;  // only quantile bins exist; clamp into the first
    auto it = b.unique_bins.upper_bound(duration_min);
    if (it == b.unique_bins.begin()) return it->second;  // below every observed value
    return std::prev(it)->second;                       // exact match or nearest lower value
  }
  return n_unique + quantile_slot(static_cast<double>(duration_min), b.quantile_edges);
}

DurationBinning fit_duration_bins(std::span<const std::int64_t> durations, const BinningParams& params) {
  params.validate();
  if (durations.empty()) throw ValidityError("fit_duration_bins: no durations");
  std::vector<std::int64_t> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0) throw ValidityError("fit_duration_bins: negative duration");

  std::int64_t t_cut = params.t_cut;
  int n_quant = params.n_quant;
  for (int it = 1;; ++it) {
    DurationBinning b = build_bins(sorted, t_cut, n_quant);
    b.iterations = it;
    b.balanced = b.balance_cv <= params.balance_threshold;
    if (b.balanced || it >= params.max_iterations) {
      if (!b.balanced) {
        spdlog::warn("duration binning stopped after {} iterations with cv {:.3f}", it, b.balance_cv);
      }
      return b;
    }
    if (it % 2 == 1) {
      n_quant = std::max(1, n_quant / 2);
    } else {
      ++t_cut;
    }
  }
}

nlohmann::json DurationBinning::to_json() const {
  nlohmann::json unique = nlohmann::json::array();
  for (const auto& [d, id] : unique_bins) unique.push_back({d, id});
  return {{"t_cut", t_cut},         {"n_quant", n_quant},         {"unique_bins", unique},
          {"quantile_edges", quantile_edges}, {"bin_count", bin_count}, {"frequencies", frequencies},
          {"iterations", iterations}, {"balanced", balanced},      {"balance_cv", balance_cv}};
}

DurationBinning DurationBinning::from_json(const nlohmann::json& j) {
  DurationBinning b;
  b.t_cut = j.at("t_cut").get<std::int64_t>();
  b.n_quant = j.at("n_quant").get<int>();
  for (const auto& pair : j.at("unique_bins")) {
    b.unique_bins.emplace(pair.at(0).get<std::int64_t>(), pair.at(1).get<std::size_t>());
  }
  b.quantile_edges = j.at("quantile_edges").get<std::vector<double>>();
  b.bin_count = j.at("bin_count").get<std::size_t>();
  b.frequencies = j.at("frequencies").get<std::vector<std::size_t>>();
  b.iterations = j.at("iterations").get<int>();
  b.balanced = j.at("balanced").get<bool>();
  b.balance_cv = j.at("balance_cv").get<double>();
  if (b.bin_count != b.unique_bins.size() + b.quantile_bin_count()) {
    throw ConfigError("duration binning: bin_count disagrees with its bins");
  }
  return b;
}

// ---------------------------------------------------------------------------
// Pseudo-embedding

PseudoEmbedding::PseudoEmbedding(std::vector<Term> vocabulary, std::vector<std::size_t> doc_freq,
                                 std::size_t n_documents, std::size_t bin_count)
    : vocabulary_(std::move(vocabulary)),
      doc_freq_(std::move(doc_freq)),
      n_documents_(n_documents),
      bin_count_(bin_count) {
  if (vocabulary_.size() != doc_freq_.size()) throw ValidityError("pseudo embedding: vocabulary/df size mismatch");
  if (!std::is_sorted(vocabulary_.begin(), vocabulary_.end())) {
    throw ValidityError("pseudo embedding: vocabulary must be sorted");
  }
  for (const auto& t : vocabulary_) {
    if (t.bin >= bin_count_) throw ValidityError("pseudo embedding: term bin out of range");
    if (activities_.empty() || activities_.back() != t.activity) activities_.push_back(t.activity);
  }
}

std::ptrdiff_t PseudoEmbedding::term_index(const Term& t) const {
  auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), t);
  if (it == vocabulary_.end() || *it != t) return -1;
  return it - vocabulary_.begin();
}

std::ptrdiff_t PseudoEmbedding::activity_row(const std::string& activity) const {
  auto it = std::lower_bound(activities_.begin(), activities_.end(), activity);
  if (it == activities_.end() || *it != activity) return -1;
  return it - activities_.begin();
}

double PseudoEmbedding::idf(std::size_t term) const {
  return std::log(static_cast<double>(n_documents_) / (1.0 + static_cast<double>(doc_freq_.at(term)))) + 1.0;
}

Matrix PseudoEmbedding::score_case(const Case& c, const DurationBinning& binning) const {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(activities_.size()), static_cast<Eigen::Index>(bin_count_));
  if (c.events.empty()) return m;
  std::map<Term, std::size_t> counts;
  for (const auto& e : c.events) ++counts[Term{e.activity, assign_bin(e.duration_min, binning)}];
  const double len = static_cast<double>(c.events.size());
  for (const auto& [term, count] : counts) {
    const auto idx = term_index(term);
    if (idx < 0) continue;
    const double tf = static_cast<double>(count) / len;
    m(activity_row(term.activity), static_cast<Eigen::Index>(term.bin)) = tf * idf(static_cast<std::size_t>(idx));
  }
  return m;
}

void PseudoEmbedding::store(const std::string& case_id, Matrix m) {
  if (m.rows() != static_cast<Eigen::Index>(activities_.size()) ||
      m.cols() != static_cast<Eigen::Index>(bin_count_)) {
    throw AlignmentError("pseudo embedding: matrix shape mismatch for case '" + case_id + "'");
  }
  matrices_[case_id] = std::move(m);
}

const Matrix& PseudoEmbedding::case_matrix(const std::string& case_id) const {
  auto it = matrices_.find(case_id);
  if (it == matrices_.end()) throw ValidityError("pseudo embedding: no matrix for case '" + case_id + "'");
  return it->second;
}

nlohmann::json PseudoEmbedding::to_json() const {
  nlohmann::json vocab = nlohmann::json::array();
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    vocab.push_back({{"activity", vocabulary_[i].activity}, {"bin", vocabulary_[i].bin}, {"df", doc_freq_[i]}});
  }
  nlohmann::json mats = nlohmann::json::object();
  for (const auto& [id, m] : matrices_) {
    mats[id] = std::vector<double>(m.data(), m.data() + m.size());
  }
  return {{"n_documents", n_documents_}, {"bin_count", bin_count_}, {"vocabulary", vocab}, {"matrices", mats}};
}

PseudoEmbedding PseudoEmbedding::from_json(const nlohmann::json& j) {
  std::vector<Term> vocab;
  std::vector<std::size_t> df;
  for (const auto& t : j.at("vocabulary")) {
    vocab.push_back({t.at("activity").get<std::string>(), t.at("bin").get<std::size_t>()});
    df.push_back(t.at("df").get<std::size_t>());
  }
  PseudoEmbedding e(std::move(vocab), std::move(df), j.at("n_documents").get<std::size_t>(),
                    j.at("bin_count").get<std::size_t>());
  const auto rows = static_cast<Eigen::Index>(e.activities_.size());
  const auto cols = static_cast<Eigen::Index>(e.bin_count_);
  for (const auto& [id, values] : j.at("matrices").items()) {
    const auto data = values.get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(rows * cols)) {
      throw AlignmentError("pseudo embedding: matrix size mismatch for case '" + id + "'");
    }
    e.store(id, Eigen::Map<const Matrix>(data.data(), rows, cols));
  }
  return e;
}

void PseudoEmbedding::write_csv(std::ostream& out) const {
  out << "case_id,activity,bin,tfidf\n";
  for (const auto& [id, m] : matrices_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (m(r, c) != 0.0) {
          out << id << ',' << activities_[static_cast<std::size_t>(r)] << ',' << c << ','
              << format_number(m(r, c)) << '\n';
        }
      }
    }
  }
}

PseudoEmbedding build_pseudo_embedding(const EventLog& log, const DurationBinning& binning,
                                       const std::set<std::string>& train_ids) {
  if (train_ids.empty()) throw ValidityError("build_pseudo_embedding: empty training set");
  std::map<Term, std::size_t> df;
  for (const auto& id : train_ids) {
    const Case* c = log.find_case(id);
    if (!c) throw ValidityError("build_pseudo_embedding: unknown training case '" + id + "'");
    std::set<Term> present;
    for (const auto& e : c->events) present.insert(Term{e.activity, assign_bin(e.duration_min, binning)});
    for (const auto& t : present) ++df[t];
  }
  std::vector<Term> vocab;
  std::vector<std::size_t> freq;
  for (const auto& [t, f] : df) {
    vocab.push_back(t);
    freq.push_back(f);
  }
  PseudoEmbedding emb(std::move(vocab), std::move(freq), train_ids.size(), binning.bin_count);
  for (const auto& c : log.cases()) emb.store(c.case_id, emb.score_case(c, binning));
  return emb;
}

Vector event_pseudo_vector(const Event& event, const std::string& case_id, const PseudoEmbedding& embedding) {
  const auto row = embedding.activity_row(event.activity);
  if (row < 0) return Vector::Zero(static_cast<Eigen::Index>(embedding.bin_count()));
  return embedding.case_matrix(case_id).row(row).transpose();
}

}  // namespace ppm
