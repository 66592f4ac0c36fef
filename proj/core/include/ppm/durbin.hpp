#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ppm/eventlog.hpp"
#include "ppm/matrix.hpp"

namespace ppm {

struct BinningParams {
  std::int64_t t_cut = 5;  // minutes; shorter durations get one bin per value
  int n_quant = 24;        // quantile bins for durations >= t_cut
  double balance_threshold = 0.5;
  int max_iterations = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static BinningParams from_json(const nlohmann::json& j);
  /// "patients": unique bins below 5 minutes, 24 quantile bins above.
  /// "bpi12": two bins, zero and non-zero duration.
  static BinningParams preset(const std::string& name);
};

/// Hybrid duration discretization: one bin per observed value below t_cut,
/// quantile bins above it.
///
/// Quantile edges are `[lo, cut_1, ..., hi]` where lo/hi are the extreme training
/// durations >= t_cut and cut_k sits halfway between the nearest-rank order
/// statistics at rank ceil(k*m/q) and the next rank. Cuts that coincide with a
/// neighbour or with lo/hi are dropped. Intervals are half-open `[e_i, e_{i+1})`
/// except the last, which is closed; values outside [lo, hi] clamp to the
/// first/last quantile bin.
struct DurationBinning {
  std::int64_t t_cut = 0;
  int n_quant = 0;
  std::map<std::int64_t, std::size_t> unique_bins;  // duration -> bin id, ascending ids
  std::vector<double> quantile_edges;               // empty when nothing reaches t_cut
  std::size_t bin_count = 0;
  std::vector<std::size_t> frequencies;  // training count per bin id
  int iterations = 0;
  bool balanced = false;
  double balance_cv = 0.0;

  std::size_t unique_bin_count() const { return unique_bins.size(); }
  std::size_t quantile_bin_count() const;

  nlohmann::json to_json() const;
  static DurationBinning from_json(const nlohmann::json& j);
};

/// Throws ValidityError for a negative duration.
std::size_t assign_bin(std::int64_t duration_min, const DurationBinning& binning);

/// Runs the bin/measure/adjust loop until the quantile-bin frequencies have a
/// coefficient of variation <= balance_threshold or max_iterations is reached.
/// On imbalance, odd-numbered failures halve n_quant and even-numbered ones
/// raise t_cut by one minute.
DurationBinning fit_duration_bins(std::span<const std::int64_t> durations, const BinningParams& params);

/// Population coefficient of variation; 0 for fewer than two values.
double coefficient_of_variation(std::span<const std::size_t> counts);

/// Quantile edges over a sorted sample (see DurationBinning).
std::vector<double> quantile_edges(std::span<const std::int64_t> sorted, int n_quant);

/// An (activity, duration bin) pair.
struct Term {
  std::string activity;
  std::size_t bin = 0;
  auto operator<=>(const Term&) const = default;
};

/// Per-case TF-IDF weights over (activity, bin) terms.
///
/// tf(t, case) = count of t in the case / events in the case;
/// idf(t) = ln(N / (1 + df(t))) + 1 with N training cases and df counted over
/// training cases. Non-training cases are scored as queries against the
/// training statistics; terms outside the vocabulary score 0.
class PseudoEmbedding {
 public:
  PseudoEmbedding() = default;
  PseudoEmbedding(std::vector<Term> vocabulary, std::vector<std::size_t> doc_freq, std::size_t n_documents,
                  std::size_t bin_count);

  const std::vector<Term>& vocabulary() const { return vocabulary_; }
  const std::vector<std::size_t>& doc_freq() const { return doc_freq_; }
  const std::vector<std::string>& activities() const { return activities_; }
  std::size_t n_documents() const { return n_documents_; }
  std::size_t bin_count() const { return bin_count_; }

  /// Vocabulary position of a term, or -1.
  std::ptrdiff_t term_index(const Term& t) const;
  std::ptrdiff_t activity_row(const std::string& activity) const;
  double idf(std::size_t term) const;

  /// Activities x bins matrix for any case, using the fitted statistics.
  Matrix score_case(const Case& c, const DurationBinning& binning) const;

  void store(const std::string& case_id, Matrix m);
  bool has_case(const std::string& case_id) const { return matrices_.count(case_id) > 0; }
  /// Throws ValidityError for a case id that was never scored.
  const Matrix& case_matrix(const std::string& case_id) const;
  const std::map<std::string, Matrix>& matrices() const { return matrices_; }

  nlohmann::json to_json() const;
  static PseudoEmbedding from_json(const nlohmann::json& j);
  /// Long-format CSV: case_id,activity,bin,tfidf (non-zero entries only).
  void write_csv(std::ostream& out) const;

 private:
  std::vector<Term> vocabulary_;
  std::vector<std::size_t> doc_freq_;
  std::vector<std::string> activities_;
  std::size_t n_documents_ = 0;
  std::size_t bin_count_ = 0;
  std::map<std::string, Matrix> matrices_;
};

/// Vocabulary and document frequencies from the training cases; matrices for every case in the log.
PseudoEmbedding build_pseudo_embedding(const EventLog& log, const DurationBinning& binning,
                                       const std::set<std::string>& train_ids);

/// Row of the case's matrix for the event's activity; zeros for an unseen activity.
Vector event_pseudo_vector(const Event& event, const std::string& case_id, const PseudoEmbedding& embedding);

}  // namespace ppm
