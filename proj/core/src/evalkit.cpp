#include "ppm/evalkit.hpp"

#include <iomanip>
#include <sstream>

#include "ppm/csv.hpp"
#include "ppm/error.hpp"

namespace ppm {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (auto v : row) n += v;
  }
  return n;
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t n = 0;
  for (auto v : counts.at(c)) n += v;
  return n;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream out;
  std::vector<std::string> header{"true\\pred"};
  header.insert(header.end(), labels.begin(), labels.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::string> row{labels[i]};
    for (auto v : counts[i]) row.push_back(std::to_string(v));
    csv::write_row(out, row);
  }
  return out.str();
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                 const std::vector<std::string>& labels) {
  if (y_true.size() != y_pred.size()) throw ContractError("classification: y_true and y_pred lengths differ");
  if (y_true.empty()) throw ValidityError("classification: empty input");
  const std::size_t k = labels.size();
  ConfusionMatrix cm{labels, std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= k || y_pred[i] >= k) throw ContractError("classification: class index outside the label set");
    ++cm.counts[y_true[i]][y_pred[i]];
  }
  return cm;
}

ClassificationReport report_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t k = cm.labels.size();
  ClassificationReport r;
  r.total = cm.total();
  if (r.total == 0) throw ValidityError("classification: empty input");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < k; ++t) predicted += cm.counts[t][c];
    const std::size_t tp = cm.counts[c][c];
    correct += tp;
    ClassMetrics m;
    m.label = cm.labels[c];
    m.support = cm.support(c);
    if (predicted == 0) {
      m.precision_undefined = true;
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    }
    if (m.support == 0) {
      m.recall_undefined = true;
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(m.support);
    }
    if (m.precision + m.recall == 0.0) {
      m.f1_undefined = true;
    } else {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    r.classes.push_back(m);
  }
  const double total = static_cast<double>(r.total);
  r.accuracy = static_cast<double>(correct) / total;
  for (const auto& m : r.classes) {
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    const double w = static_cast<double>(m.support) / total;
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
  }
  r.macro_precision /= static_cast<double>(k);
  r.macro_recall /= static_cast<double>(k);
  r.macro_f1 /= static_cast<double>(k);
  return r;
}

ClassificationReport classification_report(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                            const std::vector<std::string>& labels) {
  return report_from_confusion(confusion_matrix(y_true, y_pred, labels));
}

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
  if (y_true.size() != y_pred.size()) throw ContractError("accuracy: lengths differ");
  if (y_true.empty()) throw ValidityError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

nlohmann::json ClassificationReport::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& m : classes) {
    cls.push_back({{"label", m.label},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"support", m.support},
                   {"precision_undefined", m.precision_undefined},
                   {"recall_undefined", m.recall_undefined},
                   {"f1_undefined", m.f1_undefined}});
  }
  return {{"classes", cls},
          {"accuracy", accuracy},
          {"macro", {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}}},
          {"weighted", {{"precision", weighted_precision}, {"recall", weighted_recall}, {"f1", weighted_f1}}},
          {"total", total}};
}

ClassificationReport ClassificationReport::from_json(const nlohmann::json& j) {
  ClassificationReport r;
  for (const auto& c : j.at("classes")) {
    ClassMetrics m;
    m.label = c.at("label").get<std::string>();
    m.precision = c.at("precision").get<double>();
    m.recall = c.at("recall").get<double>();
    m.f1 = c.at("f1").get<double>();
    m.support = c.at("support").get<std::size_t>();
    m.precision_undefined = c.value("precision_undefined", false);
    m.recall_undefined = c.value("recall_undefined", false);
    m.f1_undefined = c.value("f1_undefined", false);
    r.classes.push_back(m);
  }
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_precision = j.at("macro").at("precision").get<double>();
  r.macro_recall = j.at("macro").at("recall").get<double>();
  r.macro_f1 = j.at("macro").at("f1").get<double>();
  r.weighted_precision = j.at("weighted").at("precision").get<double>();
  r.weighted_recall = j.at("weighted").at("recall").get<double>();
  r.weighted_f1 = j.at("weighted").at("f1").get<double>();
  r.total = j.at("total").get<std::size_t>();
  return r;
}

std::string ClassificationReport::render_text(const std::string& title) const {
  std::size_t label_w = 5;
  for (const auto& m : classes) label_w = std::max(label_w, m.label.size());
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  if (!title.empty()) out << title << '\n';
  out << std::left << std::setw(static_cast<int>(label_w)) << "Class" << std::right << std::setw(11) << "Precision"
      << std::setw(11) << "Recall" << std::setw(11) << "F1" << std::setw(9) << "S" << '\n';
  auto flag = [](bool undefined) { return undefined ? "*" : " "; };
  for (const auto& m : classes) {
    out << std::left << std::setw(static_cast<int>(label_w)) << m.label << std::right << std::setw(10) << m.precision
        << flag(m.precision_undefined) << std::setw(10) << m.recall << flag(m.recall_undefined) << std::setw(10) << m.f1
        << flag(m.f1_undefined) << std::setw(9) << m.support << '\n';
  }
  out << std::left << std::setw(static_cast<int>(label_w)) << "Acc" << std::right << std::setw(11) << "" << std::setw(11)
      << "" << std::setw(10) << accuracy << ' ' << std::setw(9) << total << '\n';
  out << std::left << std::setw(static_cast<int>(label_w)) << "MF1" << std::right << std::setw(10) << macro_precision << ' '
      << std::setw(10) << macro_recall << ' ' << std::setw(10) << macro_f1 << ' ' << std::setw(9) << total << '\n';
  out << std::left << std::setw(static_cast<int>(label_w)) << "WF1" << std::right << std::setw(10) << weighted_precision
      << ' ' << std::setw(10) << weighted_recall << ' ' << std::setw(10) << weighted_f1 << ' ' << std::setw(9) << total
      << '\n';
  bool any_flag = false;
  for (const auto& m : classes) any_flag = any_flag || m.precision_undefined || m.recall_undefined || m.f1_undefined;
  if (any_flag) out << "* zero denominator, reported as 0\n";
  return out.str();
}

}  // namespace ppm
