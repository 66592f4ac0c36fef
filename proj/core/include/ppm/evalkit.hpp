#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace ppm {

/// K x K counts; rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t support(std::size_t c) const;
  std::string to_csv() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                 const std::vector<std::string>& labels);

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool precision_undefined = false;  // no predictions of this class
  bool recall_undefined = false;     // no true cases of this class
  bool f1_undefined = false;
};

struct ClassificationReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::size_t total = 0;

  nlohmann::json to_json() const;
  static ClassificationReport from_json(const nlohmann::json& j);
  /// Rows per class (precision, recall, F1, support), then Acc, MF1 and WF1 rows.
  std::string render_text(const std::string& title = "") const;
};

/// Zero denominators give a metric of 0 and set the matching flag.
/// Throws ValidityError on empty input and ContractError on length or label mismatch.
ClassificationReport classification_report(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                            const std::vector<std::string>& labels);
ClassificationReport report_from_confusion(const ConfusionMatrix& cm);

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);

}  // namespace ppm
