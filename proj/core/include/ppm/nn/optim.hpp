#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ppm/nn/layers.hpp"

namespace ppm::nn {

enum class SchedulerKind {
  kConstant,
  kStep,
  kExponential,
  kReduceOnPlateau,
  kPolynomial,
  kCosineAnnealing,
  kCyclic,
  kOneCycle,
  kInverseTime,
  kPiecewiseConstant,
};
std::string to_string(SchedulerKind k);
SchedulerKind scheduler_from_string(const std::string& s);

/// Learning-rate policy, evaluated once per epoch. Only the fields of the
/// chosen kind are meaningful.
struct SchedulerSpec {
  SchedulerKind kind = SchedulerKind::kConstant;
  // step
  int step_size = 10;
  double gamma = 0.9;  // step, exponential
  // reduce on plateau (maximizing the validation objective)
  double factor = 0.5;
  int patience = 5;
  double threshold = 1e-4;
  double min_lr = 0.0;
  // polynomial
  int total_iters = 100;
  double power = 1.0;
  // cosine annealing
  double eta_min = 0.0;
  int t_max = 50;
  // cyclic (triangular)
  double base_lr = 1e-4;
  double max_lr = 1e-2;  // also one-cycle peak
  int step_size_up = 10;
  // one cycle
  double pct_start = 0.3;
  int total_steps = 100;
  // inverse time
  double decay_rate = 0.5;
  int decay_steps = 10;
  // piecewise constant
  std::vector<int> boundaries;
  std::vector<double> values;

  void validate() const;
  nlohmann::json to_json() const;
  static SchedulerSpec from_json(const nlohmann::json& j);
};

enum class OptimizerKind { kAdam, kRmsprop, kSgd };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimSpec {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double l1 = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double rms_alpha = 0.99;
  double rms_momentum = 0.0;
  double rms_eps = 1e-8;
  double sgd_momentum = 0.0;
  SchedulerSpec scheduler;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimSpec from_json(const nlohmann::json& j);
};

/// Closed-form lr for the stateless policies. ReduceOnPlateau needs history
/// and is only available through LrScheduler.
double scheduler_lr(const SchedulerSpec& spec, double base_lr, int epoch);

class LrScheduler {
 public:
  LrScheduler(SchedulerSpec spec, double base_lr);
  /// lr to use during `epoch` (0-based).
  double lr(int epoch) const;
  /// Called after each epoch. ReduceOnPlateau requires the metric and throws
  /// ContractError without it; other policies ignore it.
  void step(std::optional<double> metric);

 private:
  SchedulerSpec spec_;
  double base_lr_;
  double plateau_lr_;
  std::optional<double> best_;
  int bad_epochs_ = 0;
};

class Optimizer {
 public:
  Optimizer(OptimSpec spec, std::vector<ParamRef> params);
  /// One update at learning rate `lr` using the accumulated gradients plus
  /// the penalty gradients; gradients are cleared afterwards.
  void step(double lr);
  void zero_grad();
  const std::vector<ParamRef>& params() const { return params_; }
  std::int64_t steps_taken() const { return t_; }

 private:
  OptimSpec spec_;
  std::vector<ParamRef> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

/// grad of the penalties for one parameter: 2 l2 w + wd w + l1 sign(w), weights only.
Matrix penalty_gradient(const ParamRef& p, const OptimSpec& spec);

}  // namespace ppm::nn
