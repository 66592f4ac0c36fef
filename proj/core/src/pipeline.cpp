#include "ppm/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "ppm/error.hpp"
#include "ppm/hashing.hpp"
#include "ppm/hyperspace.hpp"
#include "ppm/rng.hpp"

namespace fs = std::filesystem;

namespace ppm {

namespace {

constexpr const char* kCacheVersion = "ppm-cache-v2";  // bump when stage outputs change for equal inputs
constexpr std::uint64_t kSplitStream = 7;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + p.string());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

std::string content_key(const nlohmann::json& inputs) { return sha256_hex(inputs.dump()).substr(0, 20); }

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

std::string to_string(TunerKind t) {
  switch (t) {
    case TunerKind::kNone: return "none";
    case TunerKind::kHyperband: return "hyperband";
    case TunerKind::kPruned: return "pruned";
  }
  return "none";
}

TunerKind tuner_from_string(const std::string& s) {
  if (s == "none") return TunerKind::kNone;
  if (s == "hyperband") return TunerKind::kHyperband;
  if (s == "pruned" || s == "pruned_search") return TunerKind::kPruned;
  throw ConfigError("unknown tuner '" + s + "'");
}

void RunConfig::validate() const {
  if (data_path.has_value() == synth.has_value()) {
    throw ConfigError("run config needs exactly one of data.path and data.synth");
  }
  if (data_path && !schema_path) throw ConfigError("data.path requires data.schema");
  if (synth) synth->validate();
  binning.validate();
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split.ratio must lie in (0, 1)");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (patience && *patience < 1) throw ConfigError("train.patience must be >= 1");
  if (max_len && *max_len < 1) throw ConfigError("model.max_len must be >= 1");
  if (model) {
    model->validate();
    if (model->family != family) {
      throw ConfigError("model.config family '" + ppm::to_string(model->family) + "' does not match model.family '" +
                        ppm::to_string(family) + "'");
    }
    if (model->duration_aware() != duration_aware) {
      throw ConfigError("model.config pseudo branch does not match model.duration_aware");
    }
  }
  if (n_trials < 1) throw ConfigError("tune.n_trials must be >= 1");
  if (max_epochs < 1) throw ConfigError("tune.max_epochs must be >= 1");
  if (eta < 2) throw ConfigError("tune.eta must be >= 2");
  if (brackets && *brackets < 1) throw ConfigError("tune.brackets must be >= 1");
  if (tune_patience && *tune_patience < 1) throw ConfigError("tune.patience must be >= 1");
  if (final_epochs && *final_epochs < 1) throw ConfigError("tune.final_epochs must be >= 1");
  if (jobs < 1) throw ConfigError("tune.jobs must be >= 1");
  if (tuner != TunerKind::kNone) {
    HyperSpace space = HyperSpace::defaults(family, duration_aware);
    space.apply_overrides(overrides);
    space.validate();
  }
}

nlohmann::json RunConfig::to_json(bool locations) const {
  nlohmann::json data;
  if (data_path) {
    data = {{"path", *data_path}, {"schema", opt_json(schema_path)}};
  } else if (synth) {
    data = {{"synth", effective_synth().to_json()}};
  }
  nlohmann::json j = {
      {"seed", seed},
      {"data", data},
      {"binning", binning.to_json()},
      {"split", {{"ratio", split_ratio}, {"stratify", stratify}, {"seed", opt_json(split_seed)}}},
      {"model",
       {{"family", ppm::to_string(family)},
        {"duration_aware", duration_aware},
        {"config", model ? model->to_json() : nlohmann::json(nullptr)},
        {"max_len", opt_json(max_len)}}},
      {"train",
       {{"epochs", epochs},
        {"patience", opt_json(patience)},
        {"objective", objective ? nlohmann::json(ppm::to_string(*objective)) : nlohmann::json("auto")},
        {"stop_at", opt_json(stop_at)}}},
      {"tune",
       {{"tuner", ppm::to_string(tuner)},
        {"overrides", overrides},
        {"n_trials", n_trials},
        {"max_epochs", max_epochs},
        {"eta", eta},
        {"brackets", opt_json(brackets)},
        {"patience", opt_json(tune_patience)},
        {"final_epochs", opt_json(final_epochs)},
        {"jobs", jobs}}},
  };
  if (locations) {
    j["output_dir"] = output_dir;
    j["cache_dir"] = opt_json(cache_dir);
  }
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  static const std::set<std::string> kTop{"seed", "data", "binning", "split", "model",
                                          "train", "tune", "output_dir", "cache_dir"};
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kTop.count(k)) throw ConfigError("unknown run config key '" + k + "'");
  }
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      if (auto p = opt_get<std::string>(d, "path")) c.data_path = resolve(*p, base_dir);
      if (auto p = opt_get<std::string>(d, "schema")) c.schema_path = resolve(*p, base_dir);
      if (d.contains("synth") && !d.at("synth").is_null()) {
        const auto& s = d.at("synth");
        c.synth = s.is_string() ? SynthSpec::preset(s.get<std::string>()) : SynthSpec::from_json(s);
        c.synth_seed_explicit = s.is_object() && s.contains("seed");
      }
    }
    if (j.contains("binning")) {
      const auto& b = j.at("binning");
      c.binning = b.is_string() ? BinningParams::preset(b.get<std::string>()) : BinningParams::from_json(b);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split_ratio = s.value("ratio", c.split_ratio);
      c.stratify = s.value("stratify", c.stratify);
      c.split_seed = opt_get<std::uint64_t>(s, "seed");
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("family")) c.family = family_from_string(m.at("family").get<std::string>());
      c.duration_aware = m.value("duration_aware", c.duration_aware);
      if (m.contains("config") && !m.at("config").is_null()) {
        const auto& mc = m.at("config");
        c.model = mc.is_string() ? ModelConfig::load(resolve(mc.get<std::string>(), base_dir))
                                 : ModelConfig::from_json(mc);
        if (!m.contains("family")) c.family = c.model->family;
        if (!m.contains("duration_aware")) c.duration_aware = c.model->duration_aware();
      }
      c.max_len = opt_get<std::size_t>(m, "max_len");
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.epochs = t.value("epochs", c.epochs);
      c.patience = opt_get<int>(t, "patience");
      if (auto o = opt_get<std::string>(t, "objective"); o && *o != "auto") c.objective = objective_from_string(*o);
      c.stop_at = opt_get<double>(t, "stop_at");
    }
    if (j.contains("tune")) {
      const auto& t = j.at("tune");
      if (t.contains("tuner")) c.tuner = tuner_from_string(t.at("tuner").get<std::string>());
      if (t.contains("overrides")) c.overrides = t.at("overrides");
      c.n_trials = t.value("n_trials", c.n_trials);
      c.max_epochs = t.value("max_epochs", c.max_epochs);
      c.eta = t.value("eta", c.eta);
      c.brackets = opt_get<int>(t, "brackets");
      c.tune_patience = opt_get<int>(t, "patience");
      c.final_epochs = opt_get<int>(t, "final_epochs");
      c.jobs = t.value("jobs", c.jobs);
    }
    if (auto o = opt_get<std::string>(j, "output_dir")) c.output_dir = resolve(*o, base_dir);
    if (auto o = opt_get<std::string>(j, "cache_dir")) c.cache_dir = resolve(*o, base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  return from_json(read_json(path), fs::path(path).parent_path());
}

std::uint64_t RunConfig::effective_split_seed() const {
  return split_seed ? *split_seed : derive_seed(seed, kSplitStream, 0);
}

SynthSpec RunConfig::effective_synth() const {
  if (!synth) throw ContractError("run config has no synthesis spec");
  SynthSpec s = *synth;
  if (!synth_seed_explicit) s.seed = seed;
  return s;
}

std::string RunConfig::hash() const { return sha256_hex(to_json(false).dump()); }

// ---------------------------------------------------------------------------
// Stages

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kSplit: return "split";
    case Stage::kEncode: return "encode";
    case Stage::kBins: return "bins";
    case Stage::kEmbed: return "embed";
    case Stage::kBuild: return "build";
    case Stage::kTrain: return "train";
    case Stage::kEval: return "eval";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::kIngest, Stage::kSplit, Stage::kEncode, Stage::kBins, Stage::kEmbed, Stage::kBuild,
                   Stage::kTrain, Stage::kEval}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

// ---------------------------------------------------------------------------
// Representations

std::size_t Representations::train_size() const {
  return family == Family::kGcn ? train_graphs.size() : train_sequences.size();
}

std::size_t Representations::val_size() const {
  return family == Family::kGcn ? val_graphs.size() : val_sequences.size();
}

std::vector<std::size_t> Representations::val_targets() const {
  std::vector<std::size_t> y;
  if (family == Family::kGcn) {
    for (const auto& g : val_graphs) y.push_back(g.outcome_index);
  } else {
    for (const auto& s : val_sequences) y.push_back(s.outcome_index);
  }
  return y;
}

std::vector<std::string> Representations::val_ids() const {
  std::vector<std::string> ids;
  if (family == Family::kGcn) {
    for (const auto& g : val_graphs) ids.push_back(g.case_id);
  } else {
    for (const auto& s : val_sequences) ids.push_back(s.case_id);
  }
  return ids;
}

nlohmann::json Representations::to_json() const {
  auto list = [](const auto& items) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : items) a.push_back(ppm::to_json(x));
    return a;
  };
  nlohmann::json j = {{"family", ppm::to_string(family)},
                      {"duration_aware", duration_aware},
                      {"dims", dims.to_json()},
                      {"labels", labels}};
  if (family == Family::kGcn) {
    j["train"] = list(train_graphs);
    j["val"] = list(val_graphs);
  } else {
    j["train"] = list(train_sequences);
    j["val"] = list(val_sequences);
  }
  return j;
}

Representations Representations::from_json(const nlohmann::json& j) {
  Representations r;
  r.family = family_from_string(j.at("family").get<std::string>());
  r.duration_aware = j.at("duration_aware").get<bool>();
  r.dims = InputDims::from_json(j.at("dims"));
  r.labels = j.at("labels").get<std::vector<std::string>>();
  for (const auto& x : j.at("train")) {
    if (r.family == Family::kGcn) r.train_graphs.push_back(graph_from_json(x));
    else r.train_sequences.push_back(sequence_from_json(x));
  }
  for (const auto& x : j.at("val")) {
    if (r.family == Family::kGcn) r.val_graphs.push_back(graph_from_json(x));
    else r.val_sequences.push_back(sequence_from_json(x));
  }
  return r;
}

std::vector<std::int64_t> training_durations(const EventLog& log, const std::set<std::string>& ids) {
  std::vector<std::int64_t> d;
  for (const auto& c : log.cases()) {
    if (!ids.count(c.case_id)) continue;
    for (const auto& e : c.events) d.push_back(e.duration_min);
  }
  return d;
}

Representations build_representations(const EventLog& log, const SplitResult& split, const EncoderSpec& encoders,
                                       const PseudoEmbedding* embedding, Family family, bool duration_aware,
                                       std::size_t max_len) {
  if (duration_aware && !embedding) throw ContractError("duration-aware representations need a pseudo-embedding");
  const auto& labels = log.label_set();
  auto encode_ids = [&](const std::vector<std::string>& ids) {
    std::vector<EncodedCase> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const Case* c = log.find_case(id);
      if (!c) throw ValidityError("split names unknown case '" + id + "'");
      out.push_back(encode_case(*c, encoders, labels));
    }
    return out;
  };
  const auto train_enc = encode_ids(split.train_ids);
  const auto val_enc = encode_ids(split.val_ids);
  const GapNorm gap = fit_gap_norm(train_enc);

  Representations r;
  r.family = family;
  r.duration_aware = duration_aware;
  r.labels = labels;
  r.dims.node_dim = static_cast<Eigen::Index>(encoders.event_width);
  r.dims.case_dim = static_cast<Eigen::Index>(encoders.case_width);
  r.dims.pseudo_dim = duration_aware ? static_cast<Eigen::Index>(embedding->bin_count()) : 0;
  r.dims.num_classes = labels.size();

  auto fill = [&](const std::vector<EncodedCase>& enc, auto& graphs, auto& seqs) {
    for (const auto& e : enc) {
      if (family == Family::kGcn) {
        CaseGraph g = build_graph(e, gap);
        if (duration_aware) attach_pseudo(g, *embedding);
        graphs.push_back(std::move(g));
      } else {
        CaseSequence s = build_sequence(e, max_len, gap);
        if (duration_aware) attach_pseudo(s, *embedding);
        seqs.push_back(std::move(s));
      }
    }
  };
  fill(train_enc, r.train_graphs, r.train_sequences);
  fill(val_enc, r.val_graphs, r.val_sequences);
  return r;
}

TrainResult train_on(Model& model, const Representations& reps, const TrainOptions& options) {
  if (model.config().family != reps.family) throw ContractError("model family does not match the representations");
  if (reps.family == Family::kGcn) return train(model, reps.train_graphs, reps.val_graphs, options);
  return train(model, reps.train_sequences, reps.val_sequences, options);
}

Matrix predict_val(Model& model, const Representations& reps) {
  if (reps.family == Family::kGcn) return predict_logits(model, reps.val_graphs);
  return predict_logits(model, reps.val_sequences);
}

TrialTrainer make_trial_trainer(const Representations& reps, Objective objective) {
  return [&reps, objective](const TrialConfig& tc, const TrialBudget& budget) {
    Model model(tc.model, reps.dims, budget.seed);
    TrainOptions opt;
    opt.epochs = budget.max_epochs;
    opt.patience = budget.patience;
    opt.objective = objective;
    opt.seed = budget.seed;
    const TrainResult r = train_on(model, reps, opt);
    return TrialOutcome{r.best_objective, r.best_epoch, r.epochs_run};
  };
}

// ---------------------------------------------------------------------------
// Pipeline

const StageRecord* PipelineResult::find(Stage s) const {
  for (const auto& r : stages) {
    if (r.stage == s) return &r;
  }
  return nullptr;
}

nlohmann::json PipelineResult::summary() const {
  nlohmann::json stage_list = nlohmann::json::array();
  for (const auto& s : stages) {
    stage_list.push_back({{"stage", to_string(s.stage)}, {"key", s.key}, {"cache_hit", s.cache_hit}});
  }
  nlohmann::json j = {{"output_dir", output_dir.string()},
                      {"objective", to_string(objective)},
                      {"stages", stage_list},
                      {"manifest", manifest}};
  if (report) {
    j["metrics"] = {{"accuracy", report->accuracy},
                    {"macro_f1", report->macro_f1},
                    {"weighted_f1", report->weighted_f1},
                    {"support", report->total}};
  }
  return j;
}

namespace {

/// One content-addressed stage directory.
class StageDir {
 public:
  StageDir(const fs::path& cache, Stage stage, nlohmann::json inputs, std::uint64_t seed)
      : stage_(stage), inputs_(std::move(inputs)), seed_(seed) {
    inputs_["cache_version"] = kCacheVersion;
    inputs_["stage"] = to_string(stage);
    key_ = content_key(inputs_);
    final_ = cache / (to_string(stage) + "-" + key_);
    work_ = cache / (to_string(stage) + "-" + key_ + ".partial");
  }

  const std::string& key() const { return key_; }
  bool cached() const { return fs::exists(final_ / "stage.json"); }
  const fs::path& dir() const { return cached() ? final_ : work_; }

  fs::path begin() {
    fs::remove_all(work_);
    fs::create_directories(work_);
    return work_;
  }

  nlohmann::json stamp() const { return {{"stage", to_string(stage_)}, {"key", key_}, {"seed", seed_}}; }

  void write(const std::string& name, const std::string& text) {
    write_text(work_ / name, text);
    artifacts_[name] = sha256_hex(text);
  }
  void write_json(const std::string& name, nlohmann::json j) {
    j["stamp"] = stamp();
    write(name, dump(j));
  }

  void commit() {
    nlohmann::json meta = {{"stamp", stamp()}, {"inputs", inputs_}, {"artifacts", artifacts_}};
    write_text(work_ / "stage.json", dump(meta));
    fs::remove_all(final_);
    fs::rename(work_, final_);
  }

  StageRecord record() const {
    StageRecord r;
    r.stage = stage_;
    r.key = key_;
    r.cache_hit = hit_;
    if (hit_) {
      const auto meta = read_json(final_ / "stage.json");
      r.artifacts = meta.at("artifacts").get<std::map<std::string, std::string>>();
    } else {
      r.artifacts = artifacts_;
    }
    return r;
  }

  void mark_hit() { hit_ = true; }
  fs::path path(const std::string& name) const { return final_ / name; }

 private:
  Stage stage_;
  nlohmann::json inputs_;
  std::uint64_t seed_;
  std::string key_;
  fs::path final_, work_;
  std::map<std::string, std::string> artifacts_;
  bool hit_ = false;
};

nlohmann::json load_json_artifact(const StageDir& d, const std::string& name) { return read_json(d.path(name)); }

std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<std::size_t>& y_true,
                            const std::vector<std::size_t>& y_pred, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "case_id,true,predicted\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << labels[y_true[i]] << ',' << labels[y_pred[i]] << '\n';
  }
  return out.str();
}

class Runner {
 public:
  explicit Runner(const RunConfig& cfg) : cfg_(cfg) {
    out_ = cfg.output_dir;
    cache_ = cfg.cache_dir ? fs::path(*cfg.cache_dir) : out_ / "cache";
    fs::create_directories(cache_);
  }

  PipelineResult run(Stage until) {
    PipelineResult res;
    res.output_dir = out_;
    auto step = [&](Stage s, auto&& fn) {
      if (static_cast<int>(s) > static_cast<int>(until)) return false;
      spdlog::info("stage {}", to_string(s));
      try {
        res.stages.push_back(fn());
      } catch (const Error& e) {
        throw Error(e.category(), "stage " + to_string(s) + ": " + e.what());
      } catch (const fs::filesystem_error& e) {
        throw ConfigError("stage " + to_string(s) + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("stage " + to_string(s) + ": corrupt artifact: " + e.what());
      }
      const auto& r = res.stages.back();
      spdlog::info("stage {} {} ({})", to_string(s), r.cache_hit ? "cached" : "done", r.key);
      return true;
    };

    step(Stage::kIngest, [&] { return ingest(); });
    objective_ = cfg_.objective ? *cfg_.objective : select_objective(log_.label_histogram());
    res.objective = objective_;
    step(Stage::kSplit, [&] { return split(); });
    step(Stage::kEncode, [&] { return encode(); });
    step(Stage::kBins, [&] { return bins(); });
    step(Stage::kEmbed, [&] { return embed(); });
    step(Stage::kBuild, [&] { return build(); });
    step(Stage::kTrain, [&] { return cfg_.tuner == TunerKind::kNone ? train_fixed() : tune(); });
    step(Stage::kEval, [&] { return evaluate(); });
    res.report = report_;

    res.manifest = manifest(res);
    fs::create_directories(out_);
    write_text(out_ / "manifest.json", dump(res.manifest));
    publish(res);
    write_run_log(res);
    return res;
  }

 private:
  const RunConfig& cfg_;
  fs::path out_, cache_;
  std::map<Stage, std::string> keys_;
  std::map<Stage, fs::path> dirs_;

  EventLog log_;
  Objective objective_ = Objective::kAccuracy;
  SplitResult split_;
  EncoderSpec encoders_;
  DurationBinning binning_;
  PseudoEmbedding embedding_;
  Representations reps_;
  std::unique_ptr<Model> model_;
  std::optional<ClassificationReport> report_;
  std::string variant_;

  StageDir open(Stage s, nlohmann::json inputs) {
    StageDir d(cache_, s, std::move(inputs), cfg_.seed);
    keys_[s] = d.key();
    return d;
  }

  StageRecord finish(StageDir& d, Stage s) {
    if (!d.cached()) d.commit();
    dirs_[s] = d.path("");
    return d.record();
  }

  StageRecord ingest() {
    nlohmann::json inputs;
    if (cfg_.data_path) {
      inputs = {{"data_sha256", sha256_file(*cfg_.data_path)}, {"schema_sha256", sha256_file(*cfg_.schema_path)}};
    } else {
      inputs = {{"synth", cfg_.effective_synth().to_json()}};
    }
    StageDir d = open(Stage::kIngest, inputs);
    if (d.cached()) {
      d.mark_hit();
    } else {
      const fs::path w = d.begin();
      EventLog log;
      SchemaSpec schema;
      if (cfg_.data_path) {
        schema = SchemaSpec::load(*cfg_.schema_path);
        log = parse_event_log(*cfg_.data_path, schema);
      } else {
        const SynthSpec spec = cfg_.effective_synth();
        schema = synth_schema(spec);
        log = generate_synthetic(spec);
      }
      std::ostringstream csv;
      write_event_log(log, csv);
      d.write("log.csv", csv.str());
      d.write("schema.json", dump(schema.to_json()));
      nlohmann::json summary = {{"cases", log.cases().size()},
                                {"labels", log.label_set()},
                                {"label_histogram", log.label_histogram()},
                                {"max_case_length", log.max_case_length()}};
      d.write_json("summary.json", summary);
      d.commit();
    }
    // Always read back the stored CSV so cold and warm runs see the same log.
    const SchemaSpec schema = SchemaSpec::from_json(load_json_artifact(d, "schema.json"));
    log_ = parse_event_log(d.path("log.csv").string(), schema);
    return finish(d, Stage::kIngest);
  }

  StageRecord split() {
    StageDir d = open(Stage::kSplit, {{"ingest", keys_.at(Stage::kIngest)},
                                      {"ratio", cfg_.split_ratio},
                                      {"stratify", cfg_.stratify},
                                      {"seed", cfg_.effective_split_seed()}});
    if (d.cached()) {
      d.mark_hit();
      const auto j = load_json_artifact(d, "split.json");
      split_.train_ids = j.at("train_ids").get<std::vector<std::string>>();
      split_.val_ids = j.at("val_ids").get<std::vector<std::string>>();
      split_.warnings = j.at("warnings").get<std::vector<std::string>>();
    } else {
      d.begin();
      split_ = split_train_val(log_, cfg_.split_ratio, cfg_.stratify, cfg_.effective_split_seed());
      d.write_json("split.json",
                   {{"train_ids", split_.train_ids}, {"val_ids", split_.val_ids}, {"warnings", split_.warnings}});
    }
    for (const auto& w : split_.warnings) spdlog::warn("split: {}", w);
    return finish(d, Stage::kSplit);
  }

  StageRecord encode() {
    StageDir d = open(Stage::kEncode, {{"split", keys_.at(Stage::kSplit)}});
    if (d.cached()) {
      d.mark_hit();
      encoders_ = EncoderSpec::from_json(load_json_artifact(d, "encoders.json"));
    } else {
      d.begin();
      encoders_ = fit_encoders(log_, split_.train_set());
      d.write_json("encoders.json", encoders_.to_json());
    }
    for (const auto& w : encoders_.warnings) spdlog::warn("encode: {}", w);
    return finish(d, Stage::kEncode);
  }

  StageRecord bins() {
    StageDir d = open(Stage::kBins, {{"split", keys_.at(Stage::kSplit)}, {"params", cfg_.binning.to_json()}});
    if (d.cached()) {
      d.mark_hit();
      binning_ = DurationBinning::from_json(load_json_artifact(d, "binning.json"));
    } else {
      d.begin();
      const auto durations = training_durations(log_, split_.train_set());
      binning_ = fit_duration_bins(durations, cfg_.binning);
      d.write_json("binning.json", binning_.to_json());
    }
    if (!binning_.balanced) spdlog::warn("bins: quantile bins not balanced (cv {:.3f})", binning_.balance_cv);
    return finish(d, Stage::kBins);
  }

  StageRecord embed() {
    StageDir d = open(Stage::kEmbed, {{"bins", keys_.at(Stage::kBins)}});
    if (d.cached()) {
      d.mark_hit();
      embedding_ = PseudoEmbedding::from_json(load_json_artifact(d, "embedding.json"));
    } else {
      d.begin();
      embedding_ = build_pseudo_embedding(log_, binning_, split_.train_set());
      d.write_json("embedding.json", embedding_.to_json());
      std::ostringstream csv;
      embedding_.write_csv(csv);
      d.write("embedding.csv", csv.str());
    }
    return finish(d, Stage::kEmbed);
  }

  std::size_t max_len() const { return cfg_.max_len ? *cfg_.max_len : log_.max_case_length(); }

  StageRecord build() {
    nlohmann::json inputs = {{"encode", keys_.at(Stage::kEncode)},
                             {"family", to_string(cfg_.family)},
                             {"duration_aware", cfg_.duration_aware}};
    if (cfg_.duration_aware) inputs["embed"] = keys_.at(Stage::kEmbed);
    if (cfg_.family == Family::kLstm) inputs["max_len"] = max_len();
    StageDir d = open(Stage::kBuild, inputs);
    if (d.cached()) {
      d.mark_hit();
      reps_ = Representations::from_json(load_json_artifact(d, "representations.json"));
    } else {
      d.begin();
      reps_ = build_representations(log_, split_, encoders_, cfg_.duration_aware ? &embedding_ : nullptr,
                                    cfg_.family, cfg_.duration_aware, max_len());
      d.write_json("representations.json", reps_.to_json());
    }
    return finish(d, Stage::kBuild);
  }

  TrainOptions train_options(int epochs, std::optional<int> patience) const {
    TrainOptions o;
    o.epochs = epochs;
    o.patience = patience;
    o.objective = objective_;
    o.seed = cfg_.seed;
    o.stop_at = cfg_.stop_at;
    return o;
  }

  void load_model(const StageDir& d) {
    model_ = Model::load(load_json_artifact(d, "model.json"));
    variant_ = model_->config().variant_name();
  }

  StageRecord train_fixed() {
    StageDir d = open(Stage::kTrain, {{"build", keys_.at(Stage::kBuild)},
                                      {"model", cfg_.model->to_json()},
                                      {"epochs", cfg_.epochs},
                                      {"patience", opt_json(cfg_.patience)},
                                      {"objective", to_string(objective_)},
                                      {"stop_at", opt_json(cfg_.stop_at)},
                                      {"seed", cfg_.seed}});
    if (d.cached()) {
      d.mark_hit();
      load_model(d);
    } else {
      d.begin();
      model_ = std::make_unique<Model>(*cfg_.model, reps_.dims, cfg_.seed);
      const TrainResult r = train_on(*model_, reps_, train_options(cfg_.epochs, cfg_.patience));
      variant_ = model_->config().variant_name();
      d.write_json("history.json", r.history_json());
      d.write_json("model.json", model_->save());
    }
    return finish(d, Stage::kTrain);
  }

  StageRecord tune() {
    HyperSpace space = HyperSpace::defaults(cfg_.family, cfg_.duration_aware);
    space.apply_overrides(cfg_.overrides);
    space.validate();
    const int final_epochs = cfg_.final_epochs ? *cfg_.final_epochs : cfg_.max_epochs;
    nlohmann::json inputs = {{"build", keys_.at(Stage::kBuild)},
                             {"space", space.to_json()},
                             {"tuner", to_string(cfg_.tuner)},
                             {"max_epochs", cfg_.max_epochs},
                             {"patience", opt_json(cfg_.tune_patience)},
                             {"final_epochs", final_epochs},
                             {"objective", to_string(objective_)},
                             {"seed", cfg_.seed}};
    if (cfg_.tuner == TunerKind::kHyperband) {
      inputs["eta"] = cfg_.eta;
      inputs["brackets"] = opt_json(cfg_.brackets);
    } else {
      inputs["n_trials"] = cfg_.n_trials;
    }
    StageDir d = open(Stage::kTrain, inputs);
    if (d.cached()) {
      d.mark_hit();
      load_model(d);
      return finish(d, Stage::kTrain);
    }
    const fs::path w = d.begin();
    // The journal sits beside the cache entry so an interrupted search resumes.
    const fs::path journal = cache_ / ("tune-" + d.key() + ".jsonl");
    const TrialTrainer trainer = make_trial_trainer(reps_, objective_);
    SearchResult sr;
    if (cfg_.tuner == TunerKind::kHyperband) {
      HyperbandOptions o;
      o.seed = cfg_.seed;
      o.jobs = cfg_.jobs;
      o.journal_path = journal.string();
      o.max_epochs = cfg_.max_epochs;
      o.eta = cfg_.eta;
      o.brackets = cfg_.brackets;
      o.patience = cfg_.tune_patience;
      sr = hyperband(space, trainer, o);
    } else {
      PrunedSearchOptions o;
      o.seed = cfg_.seed;
      o.jobs = cfg_.jobs;
      o.journal_path = journal.string();
      o.n_trials = cfg_.n_trials;
      o.max_epochs = cfg_.max_epochs;
      o.patience = cfg_.tune_patience ? *cfg_.tune_patience : 30;
      sr = pruned_search(space, trainer, o);
    }
    d.write_json("search.json", sr.to_json());
    if (!sr.best) throw NumericError("every trial failed; see search.json");
    spdlog::info("tune: best trial {} ({} {:.4f})", sr.best->trial_id, to_string(objective_), sr.best->objective);

    model_ = std::make_unique<Model>(sr.best->config.model, reps_.dims, cfg_.seed);
    const TrainResult r = train_on(*model_, reps_, train_options(final_epochs, cfg_.tune_patience));
    variant_ = model_->config().variant_name();
    d.write_json("history.json", r.history_json());
    d.write_json("model.json", model_->save());
    return finish(d, Stage::kTrain);
  }

  StageRecord evaluate() {
    StageDir d = open(Stage::kEval, {{"train", keys_.at(Stage::kTrain)}});
    if (d.cached()) {
      d.mark_hit();
      report_ = ClassificationReport::from_json(load_json_artifact(d, "report.json"));
      return finish(d, Stage::kEval);
    }
    d.begin();
    const auto y_true = reps_.val_targets();
    const auto y_pred = argmax_rows(predict_val(*model_, reps_));
    report_ = classification_report(y_true, y_pred, reps_.labels);
    const auto cm = confusion_matrix(y_true, y_pred, reps_.labels);
    d.write_json("report.json", report_->to_json());
    d.write("report.txt", report_->render_text(variant_));
    d.write("confusion.csv", cm.to_csv());
    d.write("predictions.csv", predictions_csv(reps_.val_ids(), y_true, y_pred, reps_.labels));
    return finish(d, Stage::kEval);
  }

  nlohmann::json manifest(const PipelineResult& res) const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : res.stages) {
      stages.push_back({{"stage", to_string(s.stage)}, {"key", s.key}, {"artifacts", s.artifacts}});
    }
    nlohmann::json seeds = {{"root", cfg_.seed}, {"split", cfg_.effective_split_seed()}};
    if (cfg_.synth) seeds["synth"] = cfg_.effective_synth().seed;
    nlohmann::json m = {{"format", "ppm-manifest-v1"},
                        {"config", cfg_.to_json(false)},
                        {"config_hash", cfg_.hash()},
                        {"seeds", seeds},
                        {"objective", to_string(objective_)},
                        {"stages", stages}};
    if (!variant_.empty()) m["variant"] = variant_;
    return m;
  }

  // Copies the final artifacts of the last stages to the output directory.
  void publish(const PipelineResult& res) const {
    auto copy = [&](Stage s, const std::string& name) {
      if (!res.find(s)) return;
      fs::copy_file(dirs_.at(s) / name, out_ / name, fs::copy_options::overwrite_existing);
    };
    copy(Stage::kIngest, "log.csv");
    copy(Stage::kIngest, "schema.json");
    copy(Stage::kBins, "binning.json");
    copy(Stage::kEmbed, "embedding.csv");
    copy(Stage::kTrain, "model.json");
    copy(Stage::kTrain, "history.json");
    if (res.find(Stage::kTrain) && fs::exists(dirs_.at(Stage::kTrain) / "search.json")) {
      copy(Stage::kTrain, "search.json");
    }
    for (const char* f : {"report.json", "report.txt", "confusion.csv", "predictions.csv"}) copy(Stage::kEval, f);
  }

  void write_run_log(const PipelineResult& res) const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : res.stages) {
      stages.push_back({{"stage", to_string(s.stage)}, {"key", s.key}, {"cache_hit", s.cache_hit}});
    }
    nlohmann::json j = {{"finished_at_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                               std::chrono::system_clock::now().time_since_epoch())
                                               .count()},
                        {"cache_dir", cache_.string()},
                        {"stages", stages}};
    write_text(out_ / "run_log.json", dump(j));
  }
};

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, Stage until) {
  config.validate();
  if (until >= Stage::kTrain && config.tuner == TunerKind::kNone && !config.model) {
    throw ConfigError("training needs model.config or a tuner");
  }
  Runner runner(config);
  return runner.run(until);
}

}  // namespace ppm
