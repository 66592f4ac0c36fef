#include "ppm/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ppm/error.hpp"

namespace ppm::nn {
namespace {

const std::vector<std::pair<SchedulerKind, std::string>>& scheduler_names() {
  static const std::vector<std::pair<SchedulerKind, std::string>> names{
      {SchedulerKind::kConstant, "constant"},
      {SchedulerKind::kStep, "step"},
      {SchedulerKind::kExponential, "exponential"},
      {SchedulerKind::kReduceOnPlateau, "reduce_on_plateau"},
      {SchedulerKind::kPolynomial, "polynomial"},
      {SchedulerKind::kCosineAnnealing, "cosine_annealing"},
      {SchedulerKind::kCyclic, "cyclic"},
      {SchedulerKind::kOneCycle, "one_cycle"},
      {SchedulerKind::kInverseTime, "inverse_time"},
      {SchedulerKind::kPiecewiseConstant, "piecewise_constant"},
  };
  return names;
}

double cosine_between(double from, double to, double frac) {
  return to + (from - to) * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

}  // namespace

std::string to_string(SchedulerKind k) {
  for (const auto& [kind, name] : scheduler_names()) {
    if (kind == k) return name;
  }
  return "?";
}

SchedulerKind scheduler_from_string(const std::string& s) {
  for (const auto& [kind, name] : scheduler_names()) {
    if (name == s) return kind;
  }
  throw ConfigError("unknown scheduler '" + s + "'");
}

void SchedulerSpec::validate() const {
  switch (kind) {
    case SchedulerKind::kConstant:
      break;
    case SchedulerKind::kStep:
      if (step_size < 1 || !(gamma > 0.0)) throw ConfigError("step scheduler needs step_size >= 1 and gamma > 0");
      break;
    case SchedulerKind::kExponential:
      if (!(gamma > 0.0)) throw ConfigError("exponential scheduler needs gamma > 0");
      break;
    case SchedulerKind::kReduceOnPlateau:
      if (!(factor > 0.0 && factor < 1.0) || patience < 0) {
        throw ConfigError("reduce_on_plateau needs factor in (0,1) and patience >= 0");
      }
      break;
    case SchedulerKind::kPolynomial:
      if (total_iters < 1 || power < 0.0) throw ConfigError("polynomial scheduler needs total_iters >= 1, power >= 0");
      break;
    case SchedulerKind::kCosineAnnealing:
      if (t_max < 1 || eta_min < 0.0) throw ConfigError("cosine scheduler needs t_max >= 1, eta_min >= 0");
      break;
    case SchedulerKind::kCyclic:
      if (step_size_up < 1 || !(base_lr > 0.0) || max_lr < base_lr) {
        throw ConfigError("cyclic scheduler needs step_size_up >= 1 and 0 < base_lr <= max_lr");
      }
      break;
    case SchedulerKind::kOneCycle:
      if (total_steps < 1 || !(max_lr > 0.0) || !(pct_start > 0.0 && pct_start < 1.0)) {
        throw ConfigError("one_cycle needs total_steps >= 1, max_lr > 0, pct_start in (0,1)");
      }
      break;
    case SchedulerKind::kInverseTime:
      if (decay_steps < 1 || decay_rate < 0.0) throw ConfigError("inverse_time needs decay_steps >= 1, decay_rate >= 0");
      break;
    case SchedulerKind::kPiecewiseConstant:
      if (values.size() != boundaries.size() + 1) {
        throw ConfigError("piecewise_constant needs one more value than boundaries");
      }
      if (!std::is_sorted(boundaries.begin(), boundaries.end())) throw ConfigError("piecewise boundaries must ascend");
      for (double v : values) {
        if (!(v > 0.0)) throw ConfigError("piecewise values must be > 0");
      }
      break;
  }
}

nlohmann::json SchedulerSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  switch (kind) {
    case SchedulerKind::kConstant:
      break;
    case SchedulerKind::kStep:
      j["step_size"] = step_size;
      j["gamma"] = gamma;
      break;
    case SchedulerKind::kExponential:
      j["gamma"] = gamma;
      break;
    case SchedulerKind::kReduceOnPlateau:
      j["factor"] = factor;
      j["patience"] = patience;
      j["threshold"] = threshold;
      j["min_lr"] = min_lr;
      break;
    case SchedulerKind::kPolynomial:
      j["total_iters"] = total_iters;
      j["power"] = power;
      break;
    case SchedulerKind::kCosineAnnealing:
      j["eta_min"] = eta_min;
      j["t_max"] = t_max;
      break;
    case SchedulerKind::kCyclic:
      j["base_lr"] = base_lr;
      j["max_lr"] = max_lr;
      j["step_size_up"] = step_size_up;
      break;
    case SchedulerKind::kOneCycle:
      j["max_lr"] = max_lr;
      j["pct_start"] = pct_start;
      j["total_steps"] = total_steps;
      break;
    case SchedulerKind::kInverseTime:
      j["decay_rate"] = decay_rate;
      j["decay_steps"] = decay_steps;
      break;
    case SchedulerKind::kPiecewiseConstant:
      j["boundaries"] = boundaries;
      j["values"] = values;
      break;
  }
  return j;
}

SchedulerSpec SchedulerSpec::from_json(const nlohmann::json& j) {
  SchedulerSpec s;
  s.kind = scheduler_from_string(j.value("kind", std::string("constant")));
  s.step_size = j.value("step_size", s.step_size);
  s.gamma = j.value("gamma", s.gamma);
  s.factor = j.value("factor", s.factor);
  s.patience = j.value("patience", s.patience);
  s.threshold = j.value("threshold", s.threshold);
  s.min_lr = j.value("min_lr", s.min_lr);
  s.total_iters = j.value("total_iters", s.total_iters);
  s.power = j.value("power", s.power);
  s.eta_min = j.value("eta_min", s.eta_min);
  s.t_max = j.value("t_max", s.t_max);
  s.base_lr = j.value("base_lr", s.base_lr);
  s.max_lr = j.value("max_lr", s.max_lr);
  s.step_size_up = j.value("step_size_up", s.step_size_up);
  s.pct_start = j.value("pct_start", s.pct_start);
  s.total_steps = j.value("total_steps", s.total_steps);
  s.decay_rate = j.value("decay_rate", s.decay_rate);
  s.decay_steps = j.value("decay_steps", s.decay_steps);
  if (j.contains("boundaries")) s.boundaries = j.at("boundaries").get<std::vector<int>>();
  if (j.contains("values")) s.values = j.at("values").get<std::vector<double>>();
  s.validate();
  return s;
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kAdam:
      return "adam";
    case OptimizerKind::kRmsprop:
      return "rmsprop";
    case OptimizerKind::kSgd:
      return "sgd";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "rmsprop") return OptimizerKind::kRmsprop;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

void OptimSpec::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
  if (weight_decay < 0.0 || l1 < 0.0) throw ConfigError("weight_decay and l1 must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must lie in [0, 1)");
  if (rms_alpha < 0.0 || rms_alpha >= 1.0) throw ConfigError("rmsprop alpha must lie in [0, 1)");
  if (rms_momentum < 0.0 || sgd_momentum < 0.0) throw ConfigError("momentum must be >= 0");
  scheduler.validate();
}

nlohmann::json OptimSpec::to_json() const {
  nlohmann::json j{{"optimizer", to_string(kind)},
                   {"learning_rate", learning_rate},
                   {"weight_decay", weight_decay},
                   {"l1", l1},
                   {"scheduler", scheduler.to_json()}};
  switch (kind) {
    case OptimizerKind::kAdam:
      j["beta1"] = beta1;
      j["beta2"] = beta2;
      j["eps"] = adam_eps;
      break;
    case OptimizerKind::kRmsprop:
      j["alpha"] = rms_alpha;
      j["momentum"] = rms_momentum;
      j["eps"] = rms_eps;
      break;
    case OptimizerKind::kSgd:
      j["momentum"] = sgd_momentum;
      break;
  }
  return j;
}

OptimSpec OptimSpec::from_json(const nlohmann::json& j) {
  OptimSpec o;
  o.kind = optimizer_from_string(j.value("optimizer", std::string("adam")));
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.weight_decay = j.value("weight_decay", 0.0);
  o.l1 = j.value("l1", 0.0);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  if (o.kind == OptimizerKind::kAdam) o.adam_eps = j.value("eps", o.adam_eps);
  o.rms_alpha = j.value("alpha", o.rms_alpha);
  if (o.kind == OptimizerKind::kRmsprop) {
    o.rms_momentum = j.value("momentum", 0.0);
    o.rms_eps = j.value("eps", o.rms_eps);
  }
  if (o.kind == OptimizerKind::kSgd) o.sgd_momentum = j.value("momentum", 0.0);
  if (j.contains("scheduler")) o.scheduler = SchedulerSpec::from_json(j.at("scheduler"));
  o.validate();
  return o;
}

double scheduler_lr(const SchedulerSpec& s, double base, int epoch) {
  const double e = static_cast<double>(epoch);
  switch (s.kind) {
    case SchedulerKind::kConstant:
      return base;
    case SchedulerKind::kStep:
      return base * std::pow(s.gamma, epoch / s.step_size);
    case SchedulerKind::kExponential:
      return base * std::pow(s.gamma, e);
    case SchedulerKind::kReduceOnPlateau:
      throw ContractError("reduce_on_plateau has no closed form; use LrScheduler with a metric");
    case SchedulerKind::kPolynomial: {
      const double frac = std::min(e, static_cast<double>(s.total_iters)) / s.total_iters;
      return base * std::pow(1.0 - frac, s.power);
    }
    case SchedulerKind::kCosineAnnealing:
      return cosine_between(base, s.eta_min, e / s.t_max);
    case SchedulerKind::kCyclic: {
      const double half = s.step_size_up;
      const double cycle = std::floor(1.0 + e / (2.0 * half));
      const double x = std::abs(e / half - 2.0 * cycle + 1.0);
      return s.base_lr + (s.max_lr - s.base_lr) * std::max(0.0, 1.0 - x);
    }
    case SchedulerKind::kOneCycle: {
      const double initial = s.max_lr / 25.0;
      const double final_lr = initial / 1e4;
      const double warm = s.pct_start * s.total_steps;
      const double t = std::min(e, static_cast<double>(s.total_steps));
      if (t <= warm) return cosine_between(initial, s.max_lr, t / warm);
      return cosine_between(s.max_lr, final_lr, (t - warm) / (s.total_steps - warm));
    }
    case SchedulerKind::kInverseTime:
      return base / (1.0 + s.decay_rate * e / s.decay_steps);
    case SchedulerKind::kPiecewiseConstant: {
      std::size_t i = 0;
      while (i < s.boundaries.size() && epoch >= s.boundaries[i]) ++i;
      return s.values[i];
    }
  }
  return base;
}

LrScheduler::LrScheduler(SchedulerSpec spec, double base_lr)
    : spec_(std::move(spec)), base_lr_(base_lr), plateau_lr_(base_lr) {
  spec_.validate();
}

double LrScheduler::lr(int epoch) const {
  if (spec_.kind == SchedulerKind::kReduceOnPlateau) return plateau_lr_;
  return scheduler_lr(spec_, base_lr_, epoch);
}

void LrScheduler::step(std::optional<double> metric) {
  if (spec_.kind != SchedulerKind::kReduceOnPlateau) return;
  if (!metric) throw ContractError("reduce_on_plateau requires the validation metric at every step");
  // Relative threshold, as in the common "rel" mode.
  if (!best_ || *metric > *best_ * (1.0 + spec_.threshold)) {
    best_ = metric;
    bad_epochs_ = 0;
    return;
  }
  if (++bad_epochs_ > spec_.patience) {
    plateau_lr_ = std::max(spec_.min_lr, plateau_lr_ * spec_.factor);
    bad_epochs_ = 0;
  }
}

Matrix penalty_gradient(const ParamRef& p, const OptimSpec& spec) {
  const Matrix& w = p.tensor.value();
  if (!p.is_weight) return Matrix::Zero(w.rows(), w.cols());
  Matrix g = (2.0 * p.l2 + spec.weight_decay) * w;
  if (spec.l1 > 0.0) g += spec.l1 * w.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
  return g;
}

Optimizer::Optimizer(OptimSpec spec, std::vector<ParamRef> params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    Matrix g = p.tensor.grad();
    if (p.is_weight) g += penalty_gradient(p, spec_);
    Matrix& w = p.tensor.mutable_value();
    switch (spec_.kind) {
      case OptimizerKind::kAdam: {
        m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * g;
        v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
        w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + spec_.adam_eps);
        break;
      }
      case OptimizerKind::kRmsprop: {
        v_[i] = spec_.rms_alpha * v_[i] + (1.0 - spec_.rms_alpha) * g.cwiseProduct(g);
        Matrix upd = (g.array() / (v_[i].array().sqrt() + spec_.rms_eps)).matrix();
        if (spec_.rms_momentum > 0.0) {
          m_[i] = spec_.rms_momentum * m_[i] + upd;
          w -= lr * m_[i];
        } else {
          w -= lr * upd;
        }
        break;
      }
      case OptimizerKind::kSgd: {
        if (spec_.sgd_momentum > 0.0) {
          m_[i] = spec_.sgd_momentum * m_[i] + g;
          w -= lr * m_[i];
        } else {
          w -= lr * g;
        }
        break;
      }
    }
    p.tensor.zero_grad();
  }
}

}  // namespace ppm::nn
