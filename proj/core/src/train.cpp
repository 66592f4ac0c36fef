#include "ppm/train.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "ppm/error.hpp"
#include "ppm/evalkit.hpp"

namespace ppm {

std::string to_string(Objective o) { return o == Objective::kAccuracy ? "accuracy" : "weighted_f1"; }

Objective objective_from_string(const std::string& s) {
  if (s == "accuracy") return Objective::kAccuracy;
  if (s == "weighted_f1") return Objective::kWeightedF1;
  throw ConfigError("unknown objective '" + s + "'");
}

double objective_value(Objective o, std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                       std::size_t num_classes) {
  if (o == Objective::kAccuracy) return accuracy(y_true, y_pred);
  std::vector<std::string> labels(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) labels[i] = std::to_string(i);
  return classification_report(y_true, y_pred, labels).weighted_f1;
}

nlohmann::json TrainResult::history_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& e : history) {
    h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_objective", e.val_objective}, {"lr", e.lr}});
  }
  return {{"history", h},
          {"best_epoch", best_epoch},
          {"best_objective", best_objective},
          {"epochs_run", epochs_run},
          {"stopped_early", stopped_early}};
}

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  std::vector<std::size_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename Rep>
Matrix predict_impl(Model& model, std::span<const Rep> cases) {
  Matrix out(static_cast<Eigen::Index>(cases.size()), static_cast<Eigen::Index>(model.dims().num_classes));
  for (std::size_t at = 0; at < cases.size(); at += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, cases.size() - at);
    std::vector<const Rep*> ptrs;
    for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&cases[at + i]);
    out.middleRows(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(n)) =
        model.forward(std::span<const Rep* const>(ptrs), false).value();
  }
  return out;
}

template <typename Rep>
TrainResult train_impl(Model& model, std::span<const Rep> train_set, std::span<const Rep> val_set,
                       const TrainOptions& opt, const EpochCallback& on_epoch) {
  if (train_set.empty() || val_set.empty()) throw ValidityError("train: empty training or validation set");
  if (opt.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  std::set<std::string> train_ids;
  for (const auto& r : train_set) train_ids.insert(r.case_id);
  for (const auto& r : val_set) {
    if (train_ids.count(r.case_id)) throw ContractError("train: case " + r.case_id + " is in both train and validation sets");
  }

  const auto& cfg = model.config();
  nn::Optimizer optimizer(cfg.optim, model.parameters());
  nn::LrScheduler scheduler(cfg.optim.scheduler, cfg.optim.learning_rate);
  Rng order_rng(derive_seed(opt.seed, 3, 0));
  const std::size_t k = model.dims().num_classes;

  std::vector<std::size_t> val_true;
  for (const auto& r : val_set) val_true.push_back(r.outcome_index);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  TrainResult result;
  result.best_objective = -1.0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = scheduler.lr(epoch);
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_size, ++batch_id) {
      const std::size_t n = std::min(batch_size, order.size() - at);
      std::vector<const Rep*> ptrs;
      std::vector<std::size_t> targets;
      for (std::size_t i = 0; i < n; ++i) {
        ptrs.push_back(&train_set[order[at + i]]);
        targets.push_back(train_set[order[at + i]].outcome_index);
      }
      auto diag = [&] {
        std::ostringstream s;
        s << " (lr=" << lr << ", epoch=" << epoch + 1 << ", batch=" << batch_id << ")";
        return s.str();
      };
      nn::Tensor l;
      try {
        l = nn::loss(model.forward(std::span<const Rep* const>(ptrs), true), targets, cfg.loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + diag());
      }
      if (!std::isfinite(l.item())) throw NumericError("train: non-finite loss" + diag());
      loss_sum += l.item() * static_cast<double>(n);
      l.backward();
      optimizer.step(lr);
    }

    const auto pred = argmax_rows(predict_impl(model, val_set));
    const double obj = objective_value(opt.objective, val_true, pred, k);
    scheduler.step(obj);
    EpochRecord rec{epoch + 1, loss_sum / static_cast<double>(order.size()), obj, lr};
    result.history.push_back(rec);
    result.epochs_run = epoch + 1;
    if (obj > result.best_objective) {
      result.best_objective = obj;
      result.best_epoch = epoch + 1;
      result.best_state = model.state();
    }
    if (on_epoch && !on_epoch(rec)) {
      result.stopped_early = true;
      break;
    }
    if (opt.stop_at && obj >= *opt.stop_at) {
      result.stopped_early = epoch + 1 < opt.epochs;
      break;
    }
    if (opt.patience && epoch + 1 - result.best_epoch >= *opt.patience) {
      result.stopped_early = epoch + 1 < opt.epochs;
      break;
    }
  }
  if (opt.restore_best) model.load_state(result.best_state);
  return result;
}

}  // namespace

TrainResult train(Model& model, std::span<const CaseGraph> train_set, std::span<const CaseGraph> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch) {
  return train_impl(model, train_set, val_set, options, on_epoch);
}

TrainResult train(Model& model, std::span<const CaseSequence> train_set, std::span<const CaseSequence> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch) {
  return train_impl(model, train_set, val_set, options, on_epoch);
}

Matrix predict_logits(Model& model, std::span<const CaseGraph> cases) { return predict_impl(model, cases); }
Matrix predict_logits(Model& model, std::span<const CaseSequence> cases) { return predict_impl(model, cases); }

}  // namespace ppm
