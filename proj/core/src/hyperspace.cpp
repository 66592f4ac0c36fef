#include "ppm/hyperspace.hpp"

#include <algorithm>
#include <cmath>

#include "ppm/error.hpp"

namespace ppm {

using nn::Activation;
using nn::LayerConfig;
using nn::LayerKind;
using nn::SchedulerKind;

HyperSpace HyperSpace::defaults(Family family, bool duration_aware) {
  HyperSpace s;
  s.family = family;
  s.duration_aware = duration_aware;
  const std::vector<Activation> all{Activation::kRelu, Activation::kLeakyRelu, Activation::kElu,
                                    Activation::kTanh, Activation::kSoftplus, Activation::kGelu};
  if (family == Family::kGcn) {
    s.encoder_layers = {1, 5};
    s.dense_units = {16, 512};
    s.encoder_activations = all;
    s.dense_activations = all;
    s.schedulers = {SchedulerKind::kStep,       SchedulerKind::kExponential,     SchedulerKind::kReduceOnPlateau,
                    SchedulerKind::kPolynomial, SchedulerKind::kCosineAnnealing, SchedulerKind::kCyclic,
                    SchedulerKind::kOneCycle};
    s.losses = {nn::LossKind::kCrossEntropy, nn::LossKind::kMultiMargin};
  } else {
    s.encoder_layers = {1, 3};
    s.dense_units = {16, 256};
    s.dense_activations = {Activation::kRelu, Activation::kLeakyRelu, Activation::kElu, Activation::kTanh,
                           Activation::kSoftplus};
    s.schedulers = {SchedulerKind::kExponential, SchedulerKind::kInverseTime, SchedulerKind::kPiecewiseConstant,
                    SchedulerKind::kPolynomial};
    s.losses = {nn::LossKind::kCrossEntropy};
  }
  return s;
}

namespace {

IntRange int_range(const nlohmann::json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 2) throw ConfigError("integer range override needs [lo, hi]");
  return {v[0], v[1]};
}

FloatRange float_range(const nlohmann::json& j, bool log) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError("real range override needs [lo, hi]");
  return {v[0], v[1], log};
}

template <typename T, typename F>
std::vector<T> choices(const nlohmann::json& j, F parse) {
  std::vector<T> out;
  for (const auto& e : j) out.push_back(parse(e.get<std::string>()));
  return out;
}

nlohmann::json range_json(const IntRange& r) { return {r.lo, r.hi}; }
nlohmann::json range_json(const FloatRange& r) { return {r.lo, r.hi}; }

template <typename T>
nlohmann::json names(const std::vector<T>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : v) a.push_back(nn::to_string(e));
  return a;
}

void check(const IntRange& r, const char* name, int floor) {
  if (r.lo < floor || r.hi < r.lo) throw ConfigError(std::string("hyperspace: bad range for ") + name);
}

void check(const FloatRange& r, const char* name) {
  if (r.hi < r.lo || (r.log && !(r.lo > 0.0))) throw ConfigError(std::string("hyperspace: bad range for ") + name);
}

}  // namespace

void HyperSpace::apply_overrides(const nlohmann::json& o) {
  if (o.is_null()) return;
  if (!o.is_object()) throw ConfigError("hyperspace overrides must be an object");
  try {
    for (const auto& [key, v] : o.items()) {
      if (key == "epoch_budget") epoch_budget = v.get<int>();
      else if (key == "encoder_layers") encoder_layers = int_range(v);
      else if (key == "encoder_units") encoder_units = int_range(v);
      else if (key == "post_fusion_layers") post_fusion_layers = int_range(v);
      else if (key == "case_layers") case_layers = int_range(v);
      else if (key == "head_layers") head_layers = int_range(v);
      else if (key == "dense_units") dense_units = int_range(v);
      else if (key == "dropout_rate") dropout_rate = float_range(v, false);
      else if (key == "bn_momentum") bn_momentum = float_range(v, false);
      else if (key == "bn_eps") bn_eps = float_range(v, true);
      else if (key == "l2") l2 = float_range(v, true);
      else if (key == "learning_rate") learning_rate = float_range(v, true);
      else if (key == "weight_decay") weight_decay = float_range(v, false);
      else if (key == "l1") l1 = float_range(v, false);
      else if (key == "encoder_activations") encoder_activations = choices<Activation>(v, nn::activation_from_string);
      else if (key == "dense_activations") dense_activations = choices<Activation>(v, nn::activation_from_string);
      else if (key == "pooling") pooling = choices<nn::PoolMethod>(v, nn::pool_from_string);
      else if (key == "optimizers") optimizers = choices<nn::OptimizerKind>(v, nn::optimizer_from_string);
      else if (key == "schedulers") schedulers = choices<SchedulerKind>(v, nn::scheduler_from_string);
      else if (key == "losses") losses = choices<nn::LossKind>(v, nn::loss_from_string);
      else if (key == "batch_sizes") batch_sizes = v.get<std::vector<int>>();
      else throw ConfigError("hyperspace: unknown override '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperspace overrides: ") + e.what());
  }
  validate();
}

void HyperSpace::validate() const {
  const int max_enc = family == Family::kGcn ? 5 : 3;
  check(encoder_layers, "encoder_layers", 1);
  if (encoder_layers.hi > max_enc) throw ConfigError("hyperspace: too many encoder layers for the family");
  check(encoder_units, "encoder_units", 1);
  check(post_fusion_layers, "post_fusion_layers", 0);
  if (post_fusion_layers.hi > max_enc) throw ConfigError("hyperspace: too many post-fusion layers");
  check(case_layers, "case_layers", 0);
  check(head_layers, "head_layers", 1);
  if (case_layers.hi > 3 || head_layers.hi > 3) throw ConfigError("hyperspace: at most 3 dense layers per block");
  check(dense_units, "dense_units", 1);
  check(dropout_rate, "dropout_rate");
  if (dropout_rate.lo < 0.0 || dropout_rate.hi >= 1.0) throw ConfigError("hyperspace: dropout rate outside [0, 1)");
  check(bn_momentum, "bn_momentum");
  check(bn_eps, "bn_eps");
  check(l2, "l2");
  check(learning_rate, "learning_rate");
  check(weight_decay, "weight_decay");
  check(l1, "l1");
  if (epoch_budget < 1) throw ConfigError("hyperspace: epoch_budget must be >= 1");
  if ((family == Family::kGcn && encoder_activations.empty()) || dense_activations.empty() || optimizers.empty() ||
      schedulers.empty() || losses.empty() || batch_sizes.empty() || (family == Family::kGcn && pooling.empty())) {
    throw ConfigError("hyperspace: every choice list needs at least one entry");
  }
  for (int b : batch_sizes) {
    if (b != 16 && b != 32 && b != 64 && b != 128 && b != 512) throw ConfigError("hyperspace: unsupported batch size");
  }
}

nlohmann::json HyperSpace::to_json() const {
  nlohmann::json j{{"family", to_string(family)},
                   {"duration_aware", duration_aware},
                   {"epoch_budget", epoch_budget},
                   {"encoder_layers", range_json(encoder_layers)},
                   {"encoder_units", range_json(encoder_units)},
                   {"case_layers", range_json(case_layers)},
                   {"head_layers", range_json(head_layers)},
                   {"dense_units", range_json(dense_units)},
                   {"dropout_rate", range_json(dropout_rate)},
                   {"bn_momentum", range_json(bn_momentum)},
                   {"bn_eps", range_json(bn_eps)},
                   {"learning_rate", range_json(learning_rate)},
                   {"weight_decay", range_json(weight_decay)},
                   {"l1", range_json(l1)},
                   {"dense_activations", names(dense_activations)},
                   {"optimizers", names(optimizers)},
                   {"schedulers", names(schedulers)},
                   {"losses", names(losses)},
                   {"batch_sizes", batch_sizes}};
  if (duration_aware) j["post_fusion_layers"] = range_json(post_fusion_layers);
  if (family == Family::kGcn) {
    j["encoder_activations"] = names(encoder_activations);
    j["pooling"] = names(pooling);
  } else {
    j["l2"] = range_json(l2);
  }
  return j;
}

namespace {

class Sampler {
 public:
  Sampler(Rng& rng, nlohmann::json& params) : rng_(rng), params_(params) {}

  int integer(const std::string& name, const IntRange& r) {
    const int v = static_cast<int>(rng_.uniform_int(r.lo, r.hi));
    params_[name] = v;
    return v;
  }
  double real(const std::string& name, const FloatRange& r) {
    double v = 0.0;
    if (r.log) {
      v = std::exp(rng_.uniform(std::log(r.lo), std::log(r.hi)));
    } else {
      v = rng_.uniform(r.lo, r.hi);
    }
    v = std::clamp(v, r.lo, r.hi);
    params_[name] = v;
    return v;
  }
  bool flag(const std::string& name) {
    const bool v = rng_.bernoulli(0.5);
    params_[name] = v;
    return v;
  }
  template <typename T>
  T pick(const std::string& name, const std::vector<T>& options) {
    const T v = options[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
    if constexpr (std::is_same_v<T, int>) {
      params_[name] = v;
    } else {
      params_[name] = nn::to_string(v);
    }
    return v;
  }

 private:
  Rng& rng_;
  nlohmann::json& params_;
};

LayerConfig sample_layer(Sampler& s, const HyperSpace& sp, const std::string& prefix, LayerKind kind) {
  LayerConfig l;
  l.kind = kind;
  const bool dense = kind == LayerKind::kDense;
  l.units = s.integer(prefix + ".units", dense ? sp.dense_units : sp.encoder_units);
  if (kind == LayerKind::kGcnConv) {
    l.activation = s.pick(prefix + ".activation", sp.encoder_activations);
    l.skip_connection = s.flag(prefix + ".skip_connection");
  } else if (dense) {
    l.activation = s.pick(prefix + ".activation", sp.dense_activations);
  }
  if (s.flag(prefix + ".dropout")) l.dropout = s.real(prefix + ".dropout_rate", sp.dropout_rate);
  if (s.flag(prefix + ".batch_norm")) {
    l.batch_norm = true;
    l.bn_momentum = s.real(prefix + ".bn_momentum", sp.bn_momentum);
    l.bn_eps = s.real(prefix + ".bn_eps", sp.bn_eps);
  }
  if (sp.family == Family::kLstm) l.l2 = s.real(prefix + ".l2", sp.l2);
  return l;
}

nn::SchedulerSpec sample_scheduler(Sampler& s, const HyperSpace& sp, double lr) {
  nn::SchedulerSpec sch;
  sch.kind = s.pick("scheduler", sp.schedulers);
  const IntRange budget{1, std::max(1, sp.epoch_budget)};
  switch (sch.kind) {
    case SchedulerKind::kConstant:
      break;
    case SchedulerKind::kStep:
      sch.step_size = s.integer("scheduler.step_size", {1, std::max(1, sp.epoch_budget / 2)});
      sch.gamma = s.real("scheduler.gamma", {0.1, 0.99});
      break;
    case SchedulerKind::kExponential:
      sch.gamma = s.real("scheduler.gamma", {0.9, 0.999});
      break;
    case SchedulerKind::kReduceOnPlateau:
      sch.factor = s.real("scheduler.factor", {0.1, 0.9});
      sch.patience = s.integer("scheduler.patience", {2, 30});
      sch.threshold = s.real("scheduler.threshold", {1e-4, 1e-2, true});
      sch.min_lr = s.real("scheduler.min_lr", {1e-8, 1e-5, true});
      break;
    case SchedulerKind::kPolynomial:
      sch.total_iters = s.integer("scheduler.total_iters", budget);
      sch.power = s.real("scheduler.power", {0.5, 3.0});
      break;
    case SchedulerKind::kCosineAnnealing:
      sch.eta_min = s.real("scheduler.eta_min", {1e-7, 1e-4, true});
      sch.t_max = s.integer("scheduler.t_max", budget);
      break;
    case SchedulerKind::kCyclic:
      sch.base_lr = lr;
      sch.max_lr = lr * s.real("scheduler.max_over_base", {1.0, 10.0});
      sch.step_size_up = s.integer("scheduler.step_size_up", {1, std::max(1, sp.epoch_budget / 4)});
      break;
    case SchedulerKind::kOneCycle:
      sch.max_lr = lr;
      sch.pct_start = s.real("scheduler.pct_start", {0.1, 0.5});
      sch.total_steps = sp.epoch_budget;
      break;
    case SchedulerKind::kInverseTime:
      sch.decay_rate = s.real("scheduler.decay_rate", {0.05, 1.0});
      sch.decay_steps = s.integer("scheduler.decay_steps", {1, std::max(1, sp.epoch_budget / 4)});
      break;
    case SchedulerKind::kPiecewiseConstant: {
      int b1 = s.integer("scheduler.boundary_1", {1, std::max(1, sp.epoch_budget / 2)});
      int b2 = b1 + s.integer("scheduler.boundary_gap", {1, std::max(1, sp.epoch_budget / 2)});
      const double f1 = s.real("scheduler.factor_1", {0.1, 0.9});
      const double f2 = s.real("scheduler.factor_2", {0.1, 0.9});
      sch.boundaries = {b1, b2};
      sch.values = {lr, lr * f1, lr * f1 * f2};
      break;
    }
  }
  return sch;
}

}  // namespace

TrialConfig sample_config(const HyperSpace& space, Rng& rng) {
  space.validate();
  TrialConfig t;
  t.params = nlohmann::json::object();
  Sampler s(rng, t.params);
  ModelConfig& m = t.model;
  m.family = space.family;
  const LayerKind enc = space.family == Family::kGcn ? LayerKind::kGcnConv : LayerKind::kLstm;

  const int n_enc = s.integer("encoder.layers", space.encoder_layers);
  for (int i = 0; i < n_enc; ++i) m.node_layers.push_back(sample_layer(s, space, "encoder." + std::to_string(i), enc));
  if (space.duration_aware) {
    // The pseudo branch mirrors the node branch's hyperparameters.
    m.pseudo_layers = m.node_layers;
    const int n_fuse = s.integer("fusion.layers", space.post_fusion_layers);
    for (int i = 0; i < n_fuse; ++i) {
      m.post_fusion_layers.push_back(sample_layer(s, space, "fusion." + std::to_string(i), enc));
    }
  }
  if (space.family == Family::kGcn) m.pooling = s.pick("pooling", space.pooling);
  const int n_case = s.integer("case.layers", space.case_layers);
  for (int i = 0; i < n_case; ++i) {
    m.case_layers.push_back(sample_layer(s, space, "case." + std::to_string(i), LayerKind::kDense));
  }
  const int n_head = s.integer("head.layers", space.head_layers);
  for (int i = 0; i < n_head; ++i) {
    m.head_layers.push_back(sample_layer(s, space, "head." + std::to_string(i), LayerKind::kDense));
  }

  auto& o = m.optim;
  o.learning_rate = s.real("learning_rate", space.learning_rate);
  o.weight_decay = s.real("weight_decay", space.weight_decay);
  o.l1 = s.real("l1", space.l1);
  o.kind = s.pick("optimizer", space.optimizers);
  switch (o.kind) {
    case nn::OptimizerKind::kAdam:
      o.beta1 = s.real("optimizer.beta1", {0.8, 0.99});
      o.beta2 = s.real("optimizer.beta2", {0.9, 0.9999});
      break;
    case nn::OptimizerKind::kRmsprop:
      o.rms_alpha = s.real("optimizer.alpha", {0.8, 0.999});
      o.rms_momentum = s.real("optimizer.momentum", {0.0, 0.9});
      o.rms_eps = s.real("optimizer.eps", {1e-8, 1e-4, true});
      break;
    case nn::OptimizerKind::kSgd:
      o.sgd_momentum = s.real("optimizer.momentum", {0.0, 0.99});
      break;
  }
  o.scheduler = sample_scheduler(s, space, o.learning_rate);
  m.loss = s.pick("loss", space.losses);
  m.batch_size = s.pick("batch_size", space.batch_sizes);
  m.validate();
  return t;
}

}  // namespace ppm
