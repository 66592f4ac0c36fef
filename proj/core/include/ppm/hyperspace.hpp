#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ppm/models.hpp"
#include "ppm/rng.hpp"

namespace ppm {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct FloatRange {
  double lo = 0.0;
  double hi = 0.0;
  bool log = false;  // sample uniformly in log space
};

/// Search space over model architecture and training settings. Defaults follow
/// the family; every field can be narrowed through overrides.
struct HyperSpace {
  Family family = Family::kLstm;
  bool duration_aware = false;
  int epoch_budget = 300;  // sizes one-cycle and polynomial schedules

  IntRange encoder_layers;
  IntRange encoder_units{16, 512};
  IntRange post_fusion_layers{1, 2};
  IntRange case_layers{1, 3};
  IntRange head_layers{1, 3};
  IntRange dense_units;
  FloatRange dropout_rate{0.2, 0.7};
  FloatRange bn_momentum{0.1, 0.999};
  FloatRange bn_eps{1e-5, 1e-2, true};
  FloatRange l2{1e-5, 1e-2, true};  // lstm layers and lstm-model dense layers
  std::vector<nn::Activation> encoder_activations;  // gcn only
  std::vector<nn::Activation> dense_activations;
  std::vector<nn::PoolMethod> pooling{nn::PoolMethod::kMean, nn::PoolMethod::kAdd, nn::PoolMethod::kMax};
  FloatRange learning_rate{1e-5, 1e-2, true};
  FloatRange weight_decay{0.0, 1e-3};
  FloatRange l1{0.0, 1e-3};
  std::vector<nn::OptimizerKind> optimizers{nn::OptimizerKind::kAdam, nn::OptimizerKind::kRmsprop,
                                            nn::OptimizerKind::kSgd};
  std::vector<nn::SchedulerKind> schedulers;
  std::vector<nn::LossKind> losses;
  std::vector<int> batch_sizes{16, 32, 64, 128, 512};

  static HyperSpace defaults(Family family, bool duration_aware);
  /// Replaces the named fields; unknown keys are a ConfigError.
  void apply_overrides(const nlohmann::json& overrides);
  void validate() const;
  nlohmann::json to_json() const;
};

/// One sampled point. `params` is the flat name -> value map of every sampled
/// hyperparameter (conditional ones only when their parent was chosen).
struct TrialConfig {
  nlohmann::json params;
  ModelConfig model;
};

TrialConfig sample_config(const HyperSpace& space, Rng& rng);

}  // namespace ppm
