#include "ppm/synth.hpp"

#include <cmath>
#include <numeric>

#include "ppm/error.hpp"
#include "ppm/rng.hpp"

namespace ppm {

std::string to_string(DurationRegime r) {
  switch (r) {
    case DurationRegime::kShort:
      return "short";
    case DurationRegime::kLong:
      return "long";
    case DurationRegime::kZeroNonZero:
      return "zero_nonzero";
  }
  return "?";
}

DurationRegime duration_regime_from_string(const std::string& s) {
  if (s == "short") return DurationRegime::kShort;
  if (s == "long") return DurationRegime::kLong;
  if (s == "zero_nonzero") return DurationRegime::kZeroNonZero;
  throw ConfigError("unknown duration regime '" + s + "'");
}

void SynthSpec::validate() const {
  if (n_cases < 1) throw ConfigError("synth: n_cases must be >= 1");
  if (min_len < 1) throw ValidityError("synth: case lengths must be >= 1");
  if (min_len > max_len) throw ValidityError("synth: min_len > max_len");
  if (label_weights.size() < 2) throw ConfigError("synth: need at least two classes");
  double sum = 0.0;
  for (double w : label_weights) {
    if (!(w >= 0.0)) throw ConfigError("synth: label weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("synth: label weights must sum to 1");
  const int markers = static_cast<int>(paired_markers ? (label_weights.size() + 1) / 2 : label_weights.size());
  if (n_activities < markers + 1) throw ConfigError("synth: alphabet too small for the class markers");
  if (signal_strength < 0.0 || signal_strength > 1.0) throw ConfigError("synth: signal_strength must lie in [0, 1]");
  if (collision_rate < 0.0 || collision_rate > 1.0) throw ConfigError("synth: collision_rate must lie in [0, 1]");
  if (event_numeric < 0 || event_categorical < 0 || specific_numeric < 0 || specific_categorical < 0 ||
      case_numeric < 0 || case_categorical < 0 || categorical_cardinality < 1) {
    throw ConfigError("synth: attribute counts must be >= 0 and cardinality >= 1");
  }
}

nlohmann::json SynthSpec::to_json() const {
  return {{"n_cases", n_cases},
          {"min_len", min_len},
          {"max_len", max_len},
          {"label_weights", label_weights},
          {"n_activities", n_activities},
          {"background_regime", to_string(background_regime)},
          {"event_numeric", event_numeric},
          {"event_categorical", event_categorical},
          {"specific_numeric", specific_numeric},
          {"specific_categorical", specific_categorical},
          {"case_numeric", case_numeric},
          {"case_categorical", case_categorical},
          {"categorical_cardinality", categorical_cardinality},
          {"signal_strength", signal_strength},
          {"collision_rate", collision_rate},
          {"paired_markers", paired_markers},
          {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : SynthSpec{};
  try {
    s.n_cases = j.value("n_cases", s.n_cases);
    s.min_len = j.value("min_len", s.min_len);
    s.max_len = j.value("max_len", s.max_len);
    if (j.contains("label_weights")) s.label_weights = j.at("label_weights").get<std::vector<double>>();
    if (j.contains("balanced_classes")) {
      const auto k = j.at("balanced_classes").get<std::size_t>();
      s.label_weights.assign(k, 1.0 / static_cast<double>(k));
    }
    s.n_activities = j.value("n_activities", s.n_activities);
    if (j.contains("background_regime")) {
      s.background_regime = duration_regime_from_string(j.at("background_regime").get<std::string>());
    }
    s.event_numeric = j.value("event_numeric", s.event_numeric);
    s.event_categorical = j.value("event_categorical", s.event_categorical);
    s.specific_numeric = j.value("specific_numeric", s.specific_numeric);
    s.specific_categorical = j.value("specific_categorical", s.specific_categorical);
    s.case_numeric = j.value("case_numeric", s.case_numeric);
    s.case_categorical = j.value("case_categorical", s.case_categorical);
    s.categorical_cardinality = j.value("categorical_cardinality", s.categorical_cardinality);
    s.signal_strength = j.value("signal_strength", s.signal_strength);
    s.collision_rate = j.value("collision_rate", s.collision_rate);
    s.paired_markers = j.value("paired_markers", s.paired_markers);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec SynthSpec::preset(const std::string& name) {
  SynthSpec s;
  if (name == "patients") {
    s.n_cases = 500;
    s.min_len = 4;
    s.max_len = 9;
    s.label_weights = {0.4074, 0.30, 0.17, 0.1114, 0.0112};
    s.n_activities = 10;
    s.background_regime = DurationRegime::kLong;
    s.event_numeric = 1;
    s.event_categorical = 1;
    s.specific_numeric = 1;
    s.specific_categorical = 2;
    s.case_numeric = 3;
    s.case_categorical = 1;
    s.categorical_cardinality = 3;
    s.signal_strength = 0.95;
    s.collision_rate = 0.05;
  } else if (name == "bpi12") {
    s.n_cases = 300;
    s.min_len = 12;
    s.max_len = 30;
    s.label_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    s.n_activities = 8;
    s.background_regime = DurationRegime::kZeroNonZero;
    s.event_numeric = 0;
    s.event_categorical = 2;
    s.specific_numeric = 0;
    s.specific_categorical = 0;
    s.case_numeric = 1;
    s.case_categorical = 0;
    s.categorical_cardinality = 4;
    s.signal_strength = 1.0;
    s.collision_rate = 0.3;
    s.paired_markers = false;
  } else {
    throw ConfigError("unknown synth preset '" + name + "' (expected patients or bpi12)");
  }
  return s;
}

namespace {

std::string attr_name(const char* prefix, int i) { return std::string(prefix) + std::to_string(i + 1); }

std::string activity_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "A%02d", i);
  return buf;
}

std::int64_t draw_duration(DurationRegime r, Rng& rng) {
  switch (r) {
    case DurationRegime::kShort:
      return rng.uniform_int(0, 4);
    case DurationRegime::kLong:
      return rng.bernoulli(0.3) ? rng.uniform_int(0, 4) : rng.uniform_int(5, 240);
    case DurationRegime::kZeroNonZero:
      return rng.bernoulli(0.7) ? 0 : rng.uniform_int(1, 600);
  }
  return 0;
}

/// Marker duration band for a class: even classes short, odd classes longer
/// than any background duration.
std::int64_t marker_duration(std::size_t cls, DurationRegime background, Rng& rng) {
  if (background == DurationRegime::kZeroNonZero) return cls % 2 == 0 ? 0 : rng.uniform_int(60, 600);
  return cls % 2 == 0 ? rng.uniform_int(0, 3) : rng.uniform_int(300, 600);
}

}  // namespace

SchemaSpec synth_schema(const SynthSpec& s) {
  SchemaSpec schema;
  for (int i = 0; i < s.event_numeric; ++i) {
    schema.attributes.push_back({attr_name("ev_num", i), AttrKind::kNumeric, AttrLevel::kEventUniversal});
  }
  for (int i = 0; i < s.event_categorical; ++i) {
    schema.attributes.push_back({attr_name("ev_cat", i), AttrKind::kCategorical, AttrLevel::kEventUniversal});
  }
  for (int i = 0; i < s.specific_numeric; ++i) {
    schema.attributes.push_back({attr_name("sp_num", i), AttrKind::kNumeric, AttrLevel::kEventSpecific});
  }
  for (int i = 0; i < s.specific_categorical; ++i) {
    schema.attributes.push_back({attr_name("sp_cat", i), AttrKind::kCategorical, AttrLevel::kEventSpecific});
  }
  for (int i = 0; i < s.case_numeric; ++i) {
    schema.attributes.push_back({attr_name("case_num", i), AttrKind::kNumeric, AttrLevel::kCase});
  }
  for (int i = 0; i < s.case_categorical; ++i) {
    schema.attributes.push_back({attr_name("case_cat", i), AttrKind::kCategorical, AttrLevel::kCase});
  }
  return schema;
}

EventLog generate_synthetic(const SynthSpec& s) {
  s.validate();
  Rng rng(derive_seed(s.seed, 6, 0));
  const std::size_t k = s.label_weights.size();
  const int markers = static_cast<int>(s.paired_markers ? (k + 1) / 2 : k);
  // 2012-01-01T00:00:00Z
  constexpr std::int64_t kBaseMs = 1325376000000LL;
  const auto cat_value = [&](int i) { return std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i / 26); };

  std::vector<Case> cases;
  cases.reserve(s.n_cases);
  const int width = static_cast<int>(std::to_string(s.n_cases).size());
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < s.n_cases; ++ci) {
    Case c;
    char id[32];
    std::snprintf(id, sizeof id, "C%0*zu", width, ci + 1);
    c.case_id = id;
    const std::size_t label = rng.categorical(s.label_weights);
    c.outcome = std::to_string(label);
    const std::size_t shown = rng.bernoulli(s.signal_strength) ? label : static_cast<std::size_t>(rng.uniform_int(0, k - 1));

    const int len = static_cast<int>(rng.uniform_int(s.min_len, s.max_len));
    const int marker_pos = static_cast<int>(rng.uniform_int(0, len - 1));
    std::int64_t start_ms = kBaseMs + rng.uniform_int(0, 365LL * 24 * 60) * 60000;
    for (int ei = 0; ei < len; ++ei) {
      Event e;
      std::int64_t dur = 0;
      if (ei == marker_pos) {
        e.activity = activity_name(static_cast<int>(s.paired_markers ? shown / 2 : shown));
        dur = marker_duration(shown, s.background_regime, rng);
      } else {
        e.activity = activity_name(static_cast<int>(rng.uniform_int(markers, s.n_activities - 1)));
        dur = draw_duration(s.background_regime, rng);
      }
      if (ei > 0 && !rng.bernoulli(s.collision_rate)) start_ms += rng.uniform_int(1, 120) * 60000;
      // Seconds jitter that still rounds to the intended whole minute.
      const std::int64_t jitter = dur == 0 ? rng.uniform_int(0, 29) : rng.uniform_int(-29, 29);
      e.start_ts = Timestamp(start_ms);
      e.end_ts = Timestamp(start_ms + dur * 60000 + jitter * 1000);
      e.duration_min = dur;
      for (int i = 0; i < s.event_numeric; ++i) {
        e.universal_attrs[attr_name("ev_num", i)] = std::round(rng.uniform(0.0, 1000.0) * 100.0) / 100.0;
      }
      for (int i = 0; i < s.event_categorical; ++i) {
        e.universal_attrs[attr_name("ev_cat", i)] =
            cat_value(static_cast<int>(rng.uniform_int(0, s.categorical_cardinality - 1)));
      }
      // Specific attributes exist only on odd-numbered activities.
      const bool has_specific = (e.activity.back() - '0') % 2 == 1;
      for (int i = 0; i < s.specific_numeric; ++i) {
        e.specific_attrs[attr_name("sp_num", i)] =
            has_specific ? OptAttrValue(std::round(rng.uniform(0.0, 50.0) * 10.0) / 10.0) : std::nullopt;
      }
      for (int i = 0; i < s.specific_categorical; ++i) {
        e.specific_attrs[attr_name("sp_cat", i)] =
            has_specific ? OptAttrValue(cat_value(static_cast<int>(rng.uniform_int(0, s.categorical_cardinality - 1))))
                         : std::nullopt;
      }
      e.file_order = row++;
      c.events.push_back(std::move(e));
    }
    for (int i = 0; i < s.case_numeric; ++i) {
      c.case_attrs[attr_name("case_num", i)] = OptAttrValue(static_cast<double>(rng.uniform_int(18, 90)));
    }
    for (int i = 0; i < s.case_categorical; ++i) {
      c.case_attrs[attr_name("case_cat", i)] =
          OptAttrValue(cat_value(static_cast<int>(rng.uniform_int(0, s.categorical_cardinality - 1))));
    }
    cases.push_back(std::move(c));
  }
  return EventLog(synth_schema(s), std::move(cases));
}

}  // namespace ppm
