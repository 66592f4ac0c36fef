#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ppm/durbin.hpp"
#include "ppm/encode.hpp"
#include "ppm/evalkit.hpp"
#include "ppm/eventlog.hpp"
#include "ppm/models.hpp"
#include "ppm/repr.hpp"
#include "ppm/synth.hpp"
#include "ppm/train.hpp"
#include "ppm/tune.hpp"

namespace ppm {

enum class TunerKind { kNone, kHyperband, kPruned };
std::string to_string(TunerKind t);
TunerKind tuner_from_string(const std::string& s);

/// Everything one experiment needs. Loaded from JSON; see the README for the schema.
struct RunConfig {
  // Exactly one data source.
  std::optional<std::string> data_path;
  std::optional<std::string> schema_path;  // required with data_path
  std::optional<SynthSpec> synth;
  bool synth_seed_explicit = false;  // otherwise the generator follows the root seed

  BinningParams binning = BinningParams::preset("patients");

  double split_ratio = 0.8;
  bool stratify = true;
  std::optional<std::uint64_t> split_seed;  // defaults to a stream of the root seed

  Family family = Family::kLstm;
  bool duration_aware = true;
  std::optional<ModelConfig> model;  // required unless tuning
  std::optional<std::size_t> max_len;

  int epochs = 300;
  std::optional<int> patience;
  std::optional<Objective> objective;  // chosen from the label histogram when absent
  std::optional<double> stop_at;

  TunerKind tuner = TunerKind::kNone;
  nlohmann::json overrides = nlohmann::json::object();  // HyperSpace overrides
  int n_trials = 200;
  int max_epochs = 300;
  int eta = 3;
  std::optional<int> brackets;
  std::optional<int> tune_patience;
  std::optional<int> final_epochs;  // retraining of the best config; defaults to max_epochs
  int jobs = 1;

  std::string output_dir = "out";
  std::optional<std::string> cache_dir;  // defaults to <output_dir>/cache
  std::uint64_t seed = 0;

  void validate() const;
  /// Canonical form. Without `locations` the output and cache directories are left out.
  nlohmann::json to_json(bool locations = true) const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::string& path);

  std::uint64_t effective_split_seed() const;
  SynthSpec effective_synth() const;
  /// sha256 of the location-free canonical form.
  std::string hash() const;
};

enum class Stage { kIngest, kSplit, kEncode, kBins, kEmbed, kBuild, kTrain, kEval };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// Train/validation representations of one family, with pseudo channels
/// attached when duration-aware.
struct Representations {
  Family family = Family::kLstm;
  bool duration_aware = false;
  std::vector<CaseGraph> train_graphs, val_graphs;
  std::vector<CaseSequence> train_sequences, val_sequences;
  InputDims dims;
  std::vector<std::string> labels;

  std::size_t train_size() const;
  std::size_t val_size() const;
  std::vector<std::size_t> val_targets() const;
  std::vector<std::string> val_ids() const;

  nlohmann::json to_json() const;
  static Representations from_json(const nlohmann::json& j);
};

/// Encodes the split log into representations. `embedding` may be null for B-variants.
Representations build_representations(const EventLog& log, const SplitResult& split, const EncoderSpec& encoders,
                                       const PseudoEmbedding* embedding, Family family, bool duration_aware,
                                       std::size_t max_len);

/// Duration (minutes) of every event in the named cases.
std::vector<std::int64_t> training_durations(const EventLog& log, const std::set<std::string>& ids);

TrainResult train_on(Model& model, const Representations& reps, const TrainOptions& options);
Matrix predict_val(Model& model, const Representations& reps);

/// Trial trainer over fixed representations: builds the trial's model from
/// scratch with the trial seed and returns its best validation objective.
TrialTrainer make_trial_trainer(const Representations& reps, Objective objective);

struct StageRecord {
  Stage stage = Stage::kIngest;
  std::string key;  // content address
  bool cache_hit = false;
  std::map<std::string, std::string> artifacts;  // file name -> sha256
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  nlohmann::json manifest;
  std::optional<ClassificationReport> report;
  Objective objective = Objective::kAccuracy;
  std::filesystem::path output_dir;

  const StageRecord* find(Stage s) const;
  /// Machine-readable summary (the `report` output).
  nlohmann::json summary() const;
};

/// Runs the stages up to and including `until`. Each stage's artifacts live
/// under <cache>/<stage>-<key>; a stage whose key already exists is loaded
/// instead of recomputed. Failures are rethrown with the stage name prefixed.
PipelineResult run_pipeline(const RunConfig& config, Stage until = Stage::kEval);

}  // namespace ppm
