// ppmlab: command-line front end for the outcome-prediction pipeline.
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ppm/error.hpp"
#include "ppm/pipeline.hpp"
#include "ppm/synth.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> cache;
  std::optional<std::string> data;
  std::optional<std::string> schema;
  std::optional<std::string> synth_preset;
  std::optional<std::string> family;
  std::optional<bool> duration_aware;
  std::optional<std::string> model;
  std::optional<int> epochs;
  std::optional<int> patience;
  std::optional<std::string> objective;
  std::optional<std::string> tuner;
  std::optional<int> trials;
  std::optional<int> max_epochs;
  std::optional<int> jobs;
  std::optional<std::string> binning;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config, "run config (JSON)");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("-o,--out", f.out, "output directory");
  cmd->add_option("--cache", f.cache, "cache directory (default <out>/cache)");
  cmd->add_option("--data", f.data, "event log CSV");
  cmd->add_option("--schema", f.schema, "schema JSON for --data");
  cmd->add_option("--synth", f.synth_preset, "synthetic preset instead of a data file")
      ->check(CLI::IsMember({"patients", "bpi12"}));
  cmd->add_option("--binning", f.binning, "binning preset")->check(CLI::IsMember({"patients", "bpi12"}));
  cmd->add_option("--family", f.family, "model family")->check(CLI::IsMember({"gcn", "lstm"}));
  cmd->add_option("--duration-aware", f.duration_aware, "use the pseudo-embedding branch (true/false)");
  cmd->add_option("--model", f.model, "model config JSON");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--patience", f.patience, "early-stopping patience");
  cmd->add_option("--objective", f.objective, "accuracy, weighted_f1 or auto")
      ->check(CLI::IsMember({"accuracy", "weighted_f1", "auto"}));
  cmd->add_option("--tuner", f.tuner, "hyperband or pruned")->check(CLI::IsMember({"hyperband", "pruned", "none"}));
  cmd->add_option("--trials", f.trials, "pruned-search trials");
  cmd->add_option("--max-epochs", f.max_epochs, "per-trial epoch budget");
  cmd->add_option("-j,--jobs", f.jobs, "parallel trials");
}

ppm::RunConfig build_config(const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  std::filesystem::path base;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ppm::ConfigError("cannot read config " + f.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ppm::ConfigError("malformed config " + f.config + ": " + e.what());
    }
    base = std::filesystem::path(f.config).parent_path();
  }
  // Flags are merged into the JSON so that they go through the same validation.
  if (f.data || f.synth_preset) j["data"] = nlohmann::json::object();
  if (f.data) {
    j["data"]["path"] = std::filesystem::absolute(*f.data).string();
    if (f.schema) j["data"]["schema"] = std::filesystem::absolute(*f.schema).string();
  } else if (f.schema) {
    j["data"]["schema"] = std::filesystem::absolute(*f.schema).string();
  }
  if (f.synth_preset) j["data"]["synth"] = *f.synth_preset;
  if (f.binning) j["binning"] = *f.binning;
  if (f.family) j["model"]["family"] = *f.family;
  if (f.duration_aware) j["model"]["duration_aware"] = *f.duration_aware;
  if (f.model) j["model"]["config"] = std::filesystem::absolute(*f.model).string();
  if (f.epochs) j["train"]["epochs"] = *f.epochs;
  if (f.patience) j["train"]["patience"] = *f.patience;
  if (f.objective) j["train"]["objective"] = *f.objective;
  if (f.tuner) j["tune"]["tuner"] = *f.tuner;
  if (f.trials) j["tune"]["n_trials"] = *f.trials;
  if (f.max_epochs) j["tune"]["max_epochs"] = *f.max_epochs;
  if (f.jobs) j["tune"]["jobs"] = *f.jobs;
  if (f.seed) j["seed"] = *f.seed;
  if (f.out) j["output_dir"] = std::filesystem::absolute(*f.out).string();
  if (f.cache) j["cache_dir"] = std::filesystem::absolute(*f.cache).string();
  return ppm::RunConfig::from_json(j, base);
}

int run_synth(const std::string& preset, const std::string& spec_path, std::optional<std::uint64_t> seed,
              const std::string& out_csv, const std::string& schema_out) {
  ppm::SynthSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ppm::ConfigError("cannot read " + spec_path);
    spec = ppm::SynthSpec::from_json(nlohmann::json::parse(in));
  } else {
    spec = ppm::SynthSpec::preset(preset);
  }
  if (seed) spec.seed = *seed;
  const ppm::EventLog log = ppm::generate_synthetic(spec);
  ppm::write_event_log(log, out_csv);
  std::ofstream s(schema_out);
  if (!s) throw ppm::ConfigError("cannot write " + schema_out);
  s << ppm::synth_schema(spec).to_json().dump(2) << "\n";
  spdlog::info("wrote {} cases to {} (schema {})", log.cases().size(), out_csv, schema_out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("ppmlab");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"ppmlab: outcome prediction experiments on event logs"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  std::string preset = "patients";
  std::string spec_path;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out = "log.csv";
  std::string synth_schema_out = "schema.json";
  auto* synth = app.add_subcommand("synth", "generate a synthetic event log");
  synth->add_option("--preset", preset, "patients or bpi12")->check(CLI::IsMember({"patients", "bpi12"}));
  synth->add_option("--spec", spec_path, "SynthSpec JSON (overrides --preset)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("-o,--out", synth_out, "CSV path");
  synth->add_option("--schema-out", synth_schema_out, "schema JSON path");

  Flags flags;
  struct Verb {
    const char* name;
    const char* help;
    ppm::Stage until;
  };
  const Verb verbs[] = {
      {"ingest", "parse and validate the event log", ppm::Stage::kIngest},
      {"bins", "fit duration bins on the training split", ppm::Stage::kBins},
      {"embed", "build pseudo-embeddings", ppm::Stage::kEmbed},
      {"build", "build graph or sequence representations", ppm::Stage::kBuild},
      {"train", "train one fixed model config", ppm::Stage::kTrain},
      {"tune", "search the hyperparameter space and retrain the best config", ppm::Stage::kTrain},
      {"eval", "evaluate on the validation split", ppm::Stage::kEval},
      {"report", "run everything and print a JSON summary", ppm::Stage::kEval},
  };
  std::vector<std::pair<CLI::App*, const Verb*>> commands;
  for (const auto& v : verbs) {
    auto* cmd = app.add_subcommand(v.name, v.help);
    add_run_flags(cmd, flags);
    commands.emplace_back(cmd, &v);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (synth->parsed()) return run_synth(preset, spec_path, synth_seed, synth_out, synth_schema_out);
    for (const auto& [cmd, verb] : commands) {
      if (!cmd->parsed()) continue;
      ppm::RunConfig cfg = build_config(flags);
      const std::string name = verb->name;
      if (name == "train") cfg.tuner = ppm::TunerKind::kNone;
      if (name == "tune" && cfg.tuner == ppm::TunerKind::kNone) cfg.tuner = ppm::TunerKind::kHyperband;
      const ppm::PipelineResult res = ppm::run_pipeline(cfg, verb->until);
      if (name == "report") {
        std::cout << res.summary().dump(2) << std::endl;
      } else if (res.report) {
        std::cerr << res.report->render_text(res.manifest.value("variant", "")) << std::flush;
      }
      spdlog::info("artifacts in {}", res.output_dir.string());
      return 0;
    }
  } catch (const ppm::Error& e) {
    spdlog::error("{}", e.what());
    return ppm::exit_code_for(e.category());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 1;
  }
  return 0;
}
