#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ppm/eventlog.hpp"

namespace ppm {

enum class DurationRegime {
  kShort,        // whole minutes below the usual 5-minute cut
  kLong,         // spread over tens to hundreds of minutes
  kZeroNonZero,  // mostly instantaneous, occasionally long
};
std::string to_string(DurationRegime r);
DurationRegime duration_regime_from_string(const std::string& s);

/// Parameters of the synthetic event-log generator.
///
/// Each class owns a marker activity and a marker duration band. With
/// probability `signal_strength` a case carries its own class's marker;
/// otherwise the marker of a uniformly drawn class. With `paired_markers`,
/// classes 2k and 2k+1 share a marker activity and differ only in its duration
/// band, so part of the signal is visible through durations alone.
struct SynthSpec {
  std::size_t n_cases = 500;
  int min_len = 4;
  int max_len = 9;
  std::vector<double> label_weights;  // one per class, summing to 1
  int n_activities = 10;
  DurationRegime background_regime = DurationRegime::kLong;
  int event_numeric = 1;       // universal numeric attributes besides duration
  int event_categorical = 1;   // universal categorical attributes
  int specific_numeric = 1;    // event-specific numeric attributes
  int specific_categorical = 1;
  int case_numeric = 3;
  int case_categorical = 1;
  int categorical_cardinality = 3;
  double signal_strength = 0.95;
  double collision_rate = 0.0;  // probability that an event starts with its predecessor
  bool paired_markers = true;   // false gives every class its own marker activity
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  /// "patients" (5 skewed classes, lengths 4-9) or "bpi12" (3 balanced classes,
  /// zero/non-zero durations, simultaneous starts).
  static SynthSpec preset(const std::string& name);
};

SchemaSpec synth_schema(const SynthSpec& spec);
EventLog generate_synthetic(const SynthSpec& spec);

}  // namespace ppm
