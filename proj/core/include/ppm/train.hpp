#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppm/models.hpp"

namespace ppm {

enum class Objective { kAccuracy, kWeightedF1 };
std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

/// Validation objective of predictions against true class indices.
double objective_value(Objective o, std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                       std::size_t num_classes);

struct TrainOptions {
  int epochs = 300;
  std::optional<int> patience;  // stop after this many epochs without improvement
  Objective objective = Objective::kAccuracy;
  std::uint64_t seed = 0;  // batch order
  std::optional<double> stop_at;  // stop once the objective reaches this value
  bool restore_best = true;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_objective = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 1-based
  double best_objective = 0.0;
  int epochs_run = 0;
  bool stopped_early = false;
  nn::TensorMap best_state;

  nlohmann::json history_json() const;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Mini-batch training with the model's optimizer and scheduler. Train and
/// validation case ids must be disjoint. A non-finite loss raises
/// NumericError naming the learning rate, epoch and batch.
TrainResult train(Model& model, std::span<const CaseGraph> train_set, std::span<const CaseGraph> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch = {});
TrainResult train(Model& model, std::span<const CaseSequence> train_set, std::span<const CaseSequence> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Eval-mode logits, computed in chunks.
Matrix predict_logits(Model& model, std::span<const CaseGraph> cases);
Matrix predict_logits(Model& model, std::span<const CaseSequence> cases);
std::vector<std::size_t> argmax_rows(const Matrix& logits);

}  // namespace ppm
