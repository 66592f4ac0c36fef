#include "ppm/tune.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <spdlog/spdlog.h>
#include <thread>

#include "ppm/error.hpp"

namespace ppm {

Objective select_objective(std::span<const std::size_t> class_sizes, double threshold) {
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  std::size_t hi = 0;
  std::size_t nonempty = 0;
  for (auto n : class_sizes) {
    if (n == 0) continue;
    ++nonempty;
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  if (nonempty < 2) throw ValidityError("select_objective: need at least two non-empty classes");
  return static_cast<double>(hi) / static_cast<double>(lo) <= threshold ? Objective::kAccuracy : Objective::kWeightedF1;
}

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::kCompleted:
      return "completed";
    case TrialStatus::kPruned:
      return "pruned";
    case TrialStatus::kFailed:
      return "failed";
  }
  return "?";
}

TrialStatus trial_status_from_string(const std::string& s) {
  if (s == "completed") return TrialStatus::kCompleted;
  if (s == "pruned") return TrialStatus::kPruned;
  if (s == "failed") return TrialStatus::kFailed;
  throw ParseError("unknown trial status '" + s + "'");
}

nlohmann::json TrialResult::to_json() const {
  nlohmann::json j{{"trial_id", trial_id},   {"objective", objective}, {"best_epoch", best_epoch},
                   {"epochs_run", epochs_run}, {"budget", budget},       {"status", to_string(status)},
                   {"seed", seed},           {"params", config.params}, {"model", config.model.to_json()}};
  if (bracket >= 0) {
    j["bracket"] = bracket;
    j["rung"] = rung;
  }
  if (!error.empty()) j["error"] = error;
  return j;
}

nlohmann::json SearchResult::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& r : trials) t.push_back(r.to_json());
  return {{"trials", t}, {"best", best ? best->to_json() : nlohmann::json(nullptr)}};
}

std::optional<TrialResult> best_completed(std::span<const TrialResult> trials) {
  std::optional<TrialResult> best;
  for (const auto& t : trials) {
    if (t.status != TrialStatus::kCompleted) continue;
    if (!best || t.objective > best->objective || (t.objective == best->objective && t.trial_id < best->trial_id)) {
      best = t;
    }
  }
  return best;
}

long long Bracket::total_epochs() const {
  long long n = 0;
  for (const auto& r : rungs) n += static_cast<long long>(r.configs) * r.epochs;
  return n;
}

namespace {

long long ipow(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

/// round(num / den) for positive integers.
long long round_div(long long num, long long den) { return (2 * num + den) / (2 * den); }

}  // namespace

std::vector<Bracket> hyperband_schedule(int max_epochs, int eta) {
  if (max_epochs < 1) throw ConfigError("hyperband: max_epochs must be >= 1");
  if (eta < 2) throw ConfigError("hyperband: eta must be >= 2");
  int s_max = 0;
  while (ipow(eta, s_max + 1) <= max_epochs) ++s_max;
  std::vector<Bracket> out;
  for (int s = s_max; s >= 0; --s) {
    Bracket b;
    b.s = s;
    const long long es = ipow(eta, s);
    const long long n = ((s_max + 1) * es + s) / (s + 1);  // ceil
    for (int i = 0; i <= s; ++i) {
      Rung r;
      r.configs = static_cast<int>(n / ipow(eta, i));
      r.epochs = static_cast<int>(std::max(1LL, round_div(max_epochs * ipow(eta, i), es)));
      b.rungs.push_back(r);
    }
    out.push_back(b);
  }
  return out;
}

std::uint64_t trial_seed(std::uint64_t root, int trial_id) {
  return derive_seed(root, 4, static_cast<std::uint64_t>(trial_id));
}

namespace {

/// Journal of finished evaluations keyed by (trial id, rung); shared by workers.
class Journal {
 public:
  explicit Journal(const std::optional<std::string>& path) : path_(path) {
    if (!path_) return;
    std::ifstream in(*path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        Entry e;
        e.outcome = {j.at("objective").get<double>(), j.at("best_epoch").get<int>(), j.at("epochs_run").get<int>()};
        e.failed = j.at("status").get<std::string>() == "failed";
        e.error = j.value("error", std::string());
        done_[{j.at("trial_id").get<int>(), j.value("rung", -1)}] = e;
      } catch (const nlohmann::json::exception&) {
        // A torn last line from an interrupted run is retrained.
        spdlog::warn("journal {}: skipping unreadable line", *path_);
      }
    }
    out_.open(*path_, std::ios::app);
    if (!out_) throw ConfigError("cannot open search journal " + *path_);
  }

  struct Entry {
    TrialOutcome outcome;
    bool failed = false;
    std::string error;
  };

  std::optional<Entry> find(int trial_id, int rung) const {
    std::lock_guard lock(mu_);
    const auto it = done_.find({trial_id, rung});
    if (it == done_.end()) return std::nullopt;
    return it->second;
  }

  void record(const TrialResult& r) {
    std::lock_guard lock(mu_);
    if (!out_.is_open()) return;
    out_ << r.to_json().dump() << '\n';
    out_.flush();
  }

 private:
  std::optional<std::string> path_;
  std::map<std::pair<int, int>, Entry> done_;
  std::ofstream out_;
  mutable std::mutex mu_;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename F>
void parallel_for(std::size_t n, int jobs, F fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

void evaluate(TrialResult& r, const TrialTrainer& trainer, const TrialBudget& budget, Journal& journal) {
  if (const auto e = journal.find(r.trial_id, r.rung)) {
    r.objective = e->outcome.objective;
    r.best_epoch = e->outcome.best_epoch;
    r.epochs_run = e->outcome.epochs_run;
    if (e->failed) {
      r.status = TrialStatus::kFailed;
      r.error = e->error;
    }
    return;
  }
  try {
    const auto o = trainer(r.config, budget);
    r.objective = o.objective;
    r.best_epoch = o.best_epoch;
    r.epochs_run = o.epochs_run;
  } catch (const std::exception& ex) {
    r.status = TrialStatus::kFailed;
    r.objective = 0.0;
    r.error = ex.what();
    spdlog::warn("trial {} failed: {}", r.trial_id, ex.what());
  }
  journal.record(r);
}

}  // namespace

SearchResult hyperband(const HyperSpace& space, const TrialTrainer& trainer, const HyperbandOptions& opt) {
  auto schedule = hyperband_schedule(opt.max_epochs, opt.eta);
  if (opt.brackets) {
    if (*opt.brackets < 1) throw ConfigError("hyperband: --brackets must be >= 1");
    schedule.resize(std::min<std::size_t>(schedule.size(), static_cast<std::size_t>(*opt.brackets)));
  }
  Rng sampler(derive_seed(opt.seed, 5, 0));
  Journal journal(opt.journal_path);
  SearchResult out;
  int next_id = 0;
  for (const auto& bracket : schedule) {
    // Sample the whole bracket up front so results do not depend on the job count.
    std::vector<TrialResult> pool;
    for (int i = 0; i < bracket.rungs.front().configs; ++i) {
      TrialResult r;
      r.trial_id = next_id++;
      r.config = sample_config(space, sampler);
      r.seed = trial_seed(opt.seed, r.trial_id);
      r.budget = opt.max_epochs;
      r.bracket = bracket.s;
      pool.push_back(std::move(r));
    }
    std::vector<std::size_t> alive(pool.size());
    for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
    for (std::size_t rung = 0; rung < bracket.rungs.size(); ++rung) {
      const auto& rg = bracket.rungs[rung];
      parallel_for(alive.size(), opt.jobs, [&](std::size_t k) {
        auto& r = pool[alive[k]];
        r.rung = static_cast<int>(rung);
        evaluate(r, trainer, {rg.epochs, opt.patience, r.seed}, journal);
      });
      if (rung + 1 == bracket.rungs.size()) break;
      std::vector<std::size_t> ranked;
      for (auto i : alive) {
        if (pool[i].status != TrialStatus::kFailed) ranked.push_back(i);
      }
      std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        if (pool[a].objective != pool[b].objective) return pool[a].objective > pool[b].objective;
        return pool[a].trial_id < pool[b].trial_id;
      });
      const auto keep = static_cast<std::size_t>(std::max(0, rg.configs / opt.eta));
      for (std::size_t k = keep; k < ranked.size(); ++k) pool[ranked[k]].status = TrialStatus::kPruned;
      ranked.resize(std::min(keep, ranked.size()));
      alive = ranked;
      if (alive.empty()) break;
    }
    for (auto& r : pool) out.trials.push_back(std::move(r));
  }
  out.best = best_completed(out.trials);
  return out;
}

SearchResult pruned_search(const HyperSpace& space, const TrialTrainer& trainer, const PrunedSearchOptions& opt) {
  if (opt.n_trials < 1) throw ConfigError("pruned_search: n_trials must be >= 1");
  if (opt.max_epochs < 1 || opt.patience < 1) throw ConfigError("pruned_search: max_epochs and patience must be >= 1");
  Rng sampler(derive_seed(opt.seed, 5, 0));
  Journal journal(opt.journal_path);
  SearchResult out;
  for (int i = 0; i < opt.n_trials; ++i) {
    TrialResult r;
    r.trial_id = i;
    r.config = sample_config(space, sampler);
    r.seed = trial_seed(opt.seed, i);
    r.budget = opt.max_epochs;
    out.trials.push_back(std::move(r));
  }
  parallel_for(out.trials.size(), opt.jobs, [&](std::size_t k) {
    auto& r = out.trials[k];
    evaluate(r, trainer, {opt.max_epochs, opt.patience, r.seed}, journal);
  });
  out.best = best_completed(out.trials);
  return out;
}

}  // namespace ppm
