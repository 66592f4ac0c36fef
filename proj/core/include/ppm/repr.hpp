#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppm/durbin.hpp"
#include "ppm/encode.hpp"
#include "ppm/eventlog.hpp"
#include "ppm/matrix.hpp"

namespace ppm {

/// Min-max range of consecutive start-time gaps (minutes) over the training cases.
struct GapNorm {
  double min = 0.0;
  double max = 0.0;

  /// Scaled into [0, 1]; everything maps to 0 when the range is degenerate.
  double scale(double gap) const;
  nlohmann::json to_json() const { return {{"min", min}, {"max", max}}; }
  static GapNorm from_json(const nlohmann::json& j) { return {j.at("min").get<double>(), j.at("max").get<double>()}; }
};

GapNorm fit_gap_norm(std::span<const EncodedCase> train_cases);

/// Chain graph over start-ordered events: edge k joins event k and k+1.
struct CaseGraph {
  std::string case_id;
  std::vector<std::string> activities;
  Matrix node_matrix;                  // n x d_N
  std::optional<Matrix> pseudo_matrix; // n x bin_count
  Eigen::Matrix<int, 2, Eigen::Dynamic> edge_index;  // 2 x (n-1)
  Vector edge_weight;                  // n-1, in [0, 1]
  Vector case_vector;                  // d_G
  std::size_t outcome_index = 0;

  std::size_t num_nodes() const { return static_cast<std::size_t>(node_matrix.rows()); }
  std::size_t num_edges() const { return static_cast<std::size_t>(edge_index.cols()); }
};

/// Padded event sequence; the last column of seq_matrix carries the scaled start gap.
struct CaseSequence {
  std::string case_id;
  std::vector<std::string> activities;  // true-length rows only
  Matrix seq_matrix;                    // max_len x (d_N + 1)
  std::optional<Matrix> pseudo_seq;     // max_len x bin_count
  std::vector<std::uint8_t> mask;       // max_len; 1 for real events
  Vector case_vector;
  std::size_t outcome_index = 0;

  std::size_t length() const;
  std::size_t max_len() const { return mask.size(); }
};

CaseGraph build_graph(const EncodedCase& encoded, const GapNorm& gap_norm);
/// Throws LengthError when the case is longer than max_len.
CaseSequence build_sequence(const EncodedCase& encoded, std::size_t max_len, const GapNorm& gap_norm);

/// Adds the per-event pseudo-embedding rows. Throws AlignmentError on a row-count mismatch.
void attach_pseudo(CaseGraph& graph, const PseudoEmbedding& embedding);
void attach_pseudo(CaseSequence& seq, const PseudoEmbedding& embedding);

struct SplitResult {
  std::vector<std::string> train_ids;  // log order
  std::vector<std::string> val_ids;
  std::vector<std::string> warnings;

  std::set<std::string> train_set() const { return {train_ids.begin(), train_ids.end()}; }
  std::set<std::string> val_set() const { return {val_ids.begin(), val_ids.end()}; }
};

/// Seeded train/validation split. With `stratify`, each class keeps its share
/// of the training ratio within one case, puts at least one case in validation
/// when it has two or more, and sends a singleton class to training.
SplitResult split_train_val(const EventLog& log, double ratio, bool stratify, std::uint64_t seed);

nlohmann::json to_json(const CaseGraph& g);
nlohmann::json to_json(const CaseSequence& s);
CaseGraph graph_from_json(const nlohmann::json& j);
CaseSequence sequence_from_json(const nlohmann::json& j);

}  // namespace ppm
