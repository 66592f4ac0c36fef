#include <benchmark/benchmark.h>

#include <sstream>

#include "ppm/durbin.hpp"
#include "ppm/evalkit.hpp"
#include "ppm/rng.hpp"
#include "ppm/synth.hpp"

using namespace ppm;

static void BM_FitDurationBins(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::int64_t> d(static_cast<std::size_t>(state.range(0)));
  for (auto& x : d) x = rng.uniform_int(0, 2000);
  for (auto _ : state) benchmark::DoNotOptimize(fit_duration_bins(d, BinningParams::preset("patients")).bin_count);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitDurationBins)->Arg(1000)->Arg(100000);

static void BM_BuildPseudoEmbedding(benchmark::State& state) {
  SynthSpec spec = SynthSpec::preset("patients");
  spec.n_cases = static_cast<std::size_t>(state.range(0));
  const EventLog log = generate_synthetic(spec);
  std::set<std::string> train;
  std::vector<std::int64_t> durations;
  for (const auto& c : log.cases()) {
    train.insert(c.case_id);
    for (const auto& e : c.events) durations.push_back(e.duration_min);
  }
  const DurationBinning b = fit_duration_bins(durations, BinningParams::preset("patients"));
  for (auto _ : state) benchmark::DoNotOptimize(build_pseudo_embedding(log, b, train).bin_count());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildPseudoEmbedding)->Arg(500)->Arg(5000);

static void BM_ParseEventLog(benchmark::State& state) {
  SynthSpec spec = SynthSpec::preset("patients");
  spec.n_cases = static_cast<std::size_t>(state.range(0));
  std::ostringstream out;
  write_event_log(generate_synthetic(spec), out);
  const std::string csv = out.str();
  const SchemaSpec schema = synth_schema(spec);
  for (auto _ : state) {
    std::istringstream in(csv);
    benchmark::DoNotOptimize(parse_event_log(in, schema).cases().size());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(csv.size()));
}
BENCHMARK(BM_ParseEventLog)->Arg(500)->Arg(5000);

static void BM_ClassificationReport(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::size_t> t(n), p(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<std::size_t>(rng.uniform_int(0, 4));
    p[i] = static_cast<std::size_t>(rng.uniform_int(0, 4));
  }
  const std::vector<std::string> labels{"0", "1", "2", "3", "4"};
  for (auto _ : state) benchmark::DoNotOptimize(classification_report(t, p, labels).weighted_f1);
}
BENCHMARK(BM_ClassificationReport)->Arg(1000)->Arg(100000);
