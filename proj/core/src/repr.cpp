#include "ppm/repr.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ppm/error.hpp"
#include "ppm/rng.hpp"

namespace ppm {
namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix json: size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix pseudo_rows(const std::string& case_id, const std::vector<std::string>& activities, std::size_t rows,
                   const PseudoEmbedding& embedding) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(embedding.bin_count()));
  const Matrix* cm = embedding.has_case(case_id) ? &embedding.case_matrix(case_id) : nullptr;
  if (!cm) throw ValidityError("attach_pseudo: embedding has no matrix for case '" + case_id + "'");
  for (std::size_t i = 0; i < activities.size(); ++i) {
    const auto row = embedding.activity_row(activities[i]);
    if (row >= 0) m.row(static_cast<Eigen::Index>(i)) = cm->row(row);
  }
  return m;
}

}  // namespace

double GapNorm::scale(double gap) const {
  if (!(max > min)) return 0.0;
  return std::clamp((gap - min) / (max - min), 0.0, 1.0);
}

GapNorm fit_gap_norm(std::span<const EncodedCase> train_cases) {
  GapNorm g;
  bool any = false;
  for (const auto& c : train_cases) {
    for (std::size_t k = 1; k < c.start_minutes.size(); ++k) {
      const double gap = c.start_minutes[k] - c.start_minutes[k - 1];
      if (!any) {
        g.min = g.max = gap;
        any = true;
      } else {
        g.min = std::min(g.min, gap);
        g.max = std::max(g.max, gap);
      }
    }
  }
  if (!(g.max > g.min)) spdlog::warn("repr: training start gaps have no spread; edge weights are all 0");
  return g;
}

std::size_t CaseSequence::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

CaseGraph build_graph(const EncodedCase& encoded, const GapNorm& gap_norm) {
  CaseGraph g;
  g.case_id = encoded.case_id;
  g.activities = encoded.activities;
  g.node_matrix = encoded.node_matrix;
  g.case_vector = encoded.case_vector;
  g.outcome_index = encoded.outcome_index;
  const auto n = static_cast<Eigen::Index>(encoded.node_matrix.rows());
  const Eigen::Index m = std::max<Eigen::Index>(n - 1, 0);
  g.edge_index.resize(2, m);
  g.edge_weight.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    g.edge_index(0, k) = static_cast<int>(k);
    g.edge_index(1, k) = static_cast<int>(k + 1);
    const auto ku = static_cast<std::size_t>(k);
    g.edge_weight(k) = gap_norm.scale(encoded.start_minutes[ku + 1] - encoded.start_minutes[ku]);
  }
  return g;
}

CaseSequence build_sequence(const EncodedCase& encoded, std::size_t max_len, const GapNorm& gap_norm) {
  const auto n = static_cast<std::size_t>(encoded.node_matrix.rows());
  if (n > max_len) {
    throw LengthError("case '" + encoded.case_id + "' has " + std::to_string(n) + " events, max_len is " +
                      std::to_string(max_len));
  }
  CaseSequence s;
  s.case_id = encoded.case_id;
  s.activities = encoded.activities;
  s.case_vector = encoded.case_vector;
  s.outcome_index = encoded.outcome_index;
  const auto d = encoded.node_matrix.cols();
  s.seq_matrix = Matrix::Zero(static_cast<Eigen::Index>(max_len), d + 1);
  s.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    s.seq_matrix.row(r).head(d) = encoded.node_matrix.row(r);
    s.seq_matrix(r, d) = i == 0 ? 0.0 : gap_norm.scale(encoded.start_minutes[i] - encoded.start_minutes[i - 1]);
    s.mask[i] = 1;
  }
  return s;
}

void attach_pseudo(CaseGraph& graph, const PseudoEmbedding& embedding) {
  if (graph.activities.size() != graph.num_nodes()) {
    throw AlignmentError("attach_pseudo: graph '" + graph.case_id + "' has " + std::to_string(graph.num_nodes()) +
                         " nodes but " + std::to_string(graph.activities.size()) + " activity labels");
  }
  graph.pseudo_matrix = pseudo_rows(graph.case_id, graph.activities, graph.num_nodes(), embedding);
}

void attach_pseudo(CaseSequence& seq, const PseudoEmbedding& embedding) {
  if (seq.activities.size() != seq.length()) {
    throw AlignmentError("attach_pseudo: sequence '" + seq.case_id + "' has " + std::to_string(seq.length()) +
                         " events but " + std::to_string(seq.activities.size()) + " activity labels");
  }
  seq.pseudo_seq = pseudo_rows(seq.case_id, seq.activities, seq.max_len(), embedding);
}

SplitResult split_train_val(const EventLog& log, double ratio, bool stratify, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  SplitResult out;
  Rng rng(seed);
  const auto& cases = log.cases();
  std::vector<bool> is_train(cases.size(), false);

  auto take = [&](std::vector<std::size_t> idx, std::size_t n_train) {
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i = 0; i < n_train && i < idx.size(); ++i) is_train[idx[i]] = true;
  };

  if (!stratify) {
    std::vector<std::size_t> idx(cases.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(cases.size())));
    if (cases.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, cases.size() - 1);
    take(std::move(idx), n_train);
  } else {
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < cases.size(); ++i) by_class[log.label_index(cases[i].outcome)].push_back(i);
    for (auto& [label, idx] : by_class) {
      const std::size_t n = idx.size();
      std::size_t n_train = n;
      if (n == 1) {
        out.warnings.push_back("class '" + log.label_set()[label] + "' has a single case; assigned to training");
      } else {
        n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
      }
      take(std::move(idx), n_train);
    }
  }
  for (std::size_t i = 0; i < cases.size(); ++i) {
    (is_train[i] ? out.train_ids : out.val_ids).push_back(cases[i].case_id);
  }
  for (const auto& w : out.warnings) spdlog::warn("split: {}", w);
  return out;
}

nlohmann::json to_json(const CaseGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (Eigen::Index k = 0; k < g.edge_index.cols(); ++k) edges.push_back({g.edge_index(0, k), g.edge_index(1, k)});
  nlohmann::json j{{"case_id", g.case_id},
                   {"activities", g.activities},
                   {"node_matrix", matrix_to_json(g.node_matrix)},
                   {"edge_index", edges},
                   {"edge_weight", to_std(g.edge_weight)},
                   {"case_vector", to_std(g.case_vector)},
                   {"outcome_index", g.outcome_index}};
  if (g.pseudo_matrix) j["pseudo_matrix"] = matrix_to_json(*g.pseudo_matrix);
  return j;
}

nlohmann::json to_json(const CaseSequence& s) {
  nlohmann::json j{{"case_id", s.case_id},
                   {"activities", s.activities},
                   {"seq_matrix", matrix_to_json(s.seq_matrix)},
                   {"mask", s.mask},
                   {"case_vector", to_std(s.case_vector)},
                   {"outcome_index", s.outcome_index}};
  if (s.pseudo_seq) j["pseudo_seq"] = matrix_to_json(*s.pseudo_seq);
  return j;
}

CaseGraph graph_from_json(const nlohmann::json& j) {
  CaseGraph g;
  g.case_id = j.at("case_id").get<std::string>();
  g.activities = j.at("activities").get<std::vector<std::string>>();
  g.node_matrix = matrix_from_json(j.at("node_matrix"));
  const auto& edges = j.at("edge_index");
  g.edge_index.resize(2, static_cast<Eigen::Index>(edges.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    g.edge_index(0, static_cast<Eigen::Index>(k)) = edges[k].at(0).get<int>();
    g.edge_index(1, static_cast<Eigen::Index>(k)) = edges[k].at(1).get<int>();
  }
  g.edge_weight = vector_from_json(j.at("edge_weight"));
  g.case_vector = vector_from_json(j.at("case_vector"));
  g.outcome_index = j.at("outcome_index").get<std::size_t>();
  if (j.contains("pseudo_matrix")) g.pseudo_matrix = matrix_from_json(j.at("pseudo_matrix"));
  return g;
}

CaseSequence sequence_from_json(const nlohmann::json& j) {
  CaseSequence s;
  s.case_id = j.at("case_id").get<std::string>();
  s.activities = j.at("activities").get<std::vector<std::string>>();
  s.seq_matrix = matrix_from_json(j.at("seq_matrix"));
  s.mask = j.at("mask").get<std::vector<std::uint8_t>>();
  s.case_vector = vector_from_json(j.at("case_vector"));
  s.outcome_index = j.at("outcome_index").get<std::size_t>();
  if (j.contains("pseudo_seq")) s.pseudo_seq = matrix_from_json(j.at("pseudo_seq"));
  return s;
}

}  // namespace ppm
