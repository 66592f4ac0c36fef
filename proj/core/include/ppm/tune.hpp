#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppm/hyperspace.hpp"
#include "ppm/train.hpp"

namespace ppm {

/// Balanced (max/min class ratio <= threshold) -> accuracy, else weighted F1.
/// Throws ValidityError with fewer than two non-empty classes.
Objective select_objective(std::span<const std::size_t> class_sizes, double threshold = 1.5);

struct TrialBudget {
  int max_epochs = 0;
  std::optional<int> patience;
  std::uint64_t seed = 0;
};

struct TrialOutcome {
  double objective = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Trains one configuration from scratch under the budget. Exceptions mark the trial failed.
using TrialTrainer = std::function<TrialOutcome(const TrialConfig&, const TrialBudget&)>;

enum class TrialStatus { kCompleted, kPruned, kFailed };
std::string to_string(TrialStatus s);
TrialStatus trial_status_from_string(const std::string& s);

struct TrialResult {
  int trial_id = 0;
  TrialConfig config;
  double objective = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  int budget = 0;  // largest epoch allotment the search could have given this trial
  TrialStatus status = TrialStatus::kCompleted;
  std::uint64_t seed = 0;
  int bracket = -1;  // hyperband only
  int rung = -1;
  std::string error;

  nlohmann::json to_json() const;
};

struct SearchResult {
  std::vector<TrialResult> trials;  // by trial id
  std::optional<TrialResult> best;

  nlohmann::json to_json() const;
};

/// Best completed trial: highest objective, ties to the lower trial id.
std::optional<TrialResult> best_completed(std::span<const TrialResult> trials);

struct Rung {
  int configs = 0;
  int epochs = 0;
};

struct Bracket {
  int s = 0;
  std::vector<Rung> rungs;
  long long total_epochs() const;
};

/// Brackets s = s_max..0 with s_max = floor(log_eta R). Bracket s starts
/// n = ceil((s_max+1) eta^s / (s+1)) configs at round(R eta^-s) epochs; rung i
/// keeps floor(n eta^-i) configs at round(R eta^(i-s)) epochs.
std::vector<Bracket> hyperband_schedule(int max_epochs, int eta);

struct SearchOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::optional<std::string> journal_path;  // JSON lines; existing entries are replayed, not retrained
};

struct HyperbandOptions : SearchOptions {
  int max_epochs = 300;
  int eta = 3;
  std::optional<int> brackets;  // run only the first N brackets (largest s first)
  std::optional<int> patience;
};

struct PrunedSearchOptions : SearchOptions {
  int n_trials = 200;
  int max_epochs = 300;
  int patience = 30;
};

/// Successive halving across brackets. Each rung retrains its configs from
/// scratch at the rung budget; configs dropped before the last rung are pruned.
SearchResult hyperband(const HyperSpace& space, const TrialTrainer& trainer, const HyperbandOptions& options);

/// Independent random trials with early stopping by patience.
SearchResult pruned_search(const HyperSpace& space, const TrialTrainer& trainer, const PrunedSearchOptions& options);

/// Seed given to trial `trial_id` under a root seed.
std::uint64_t trial_seed(std::uint64_t root, int trial_id);

}  // namespace ppm
