#include "ppm/encode.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "ppm/error.hpp"

namespace ppm {
namespace {

AttributeEncoding fit_attribute(const std::string& name, AttrKind kind,
                                const std::vector<OptAttrValue>& observed,
                                std::vector<std::string>& warnings) {
  AttributeEncoding enc;
  enc.name = name;
  enc.kind = kind;
  if (kind == AttrKind::kCategorical) {
    std::set<std::string> cats;
    for (const auto& v : observed) {
      if (v) cats.insert(std::get<std::string>(*v));
    }
    enc.categories.assign(cats.begin(), cats.end());
    if (enc.categories.empty()) {
      warnings.push_back("categorical attribute '" + name + "' has no observed values in training");
    }
    return enc;
  }
  std::vector<double> values;
  for (const auto& v : observed) {
    if (v) values.push_back(std::get<double>(*v));
  }
  if (values.empty()) {
    warnings.push_back("numeric attribute '" + name + "' has no observed values; scaled to 0");
    return enc;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  enc.stats.min = *lo;
  enc.stats.max = *hi;
  enc.stats.median = median_of(values);
  if (enc.stats.constant()) {
    warnings.push_back("numeric attribute '" + name + "' is constant in training; scaled to 0");
  }
  return enc;
}

void write_block(const AttributeEncoding& enc, const OptAttrValue& value, double* out, UnseenTally* tally) {
  if (enc.kind == AttrKind::kNumeric) {
    const double v = value ? std::get<double>(*value) : enc.stats.median;
    out[0] = enc.stats.scale(v);
    return;
  }
  const std::size_t w = enc.categories.size();
  if (value) {
    const auto& s = std::get<std::string>(*value);
    auto it = std::lower_bound(enc.categories.begin(), enc.categories.end(), s);
    if (it != enc.categories.end() && *it == s) {
      std::fill(out, out + w, 0.0);
      out[it - enc.categories.begin()] = 1.0;
      return;
    }
    if (tally) ++(*tally)[enc.name];
  }
  std::fill(out, out + w, kPaddingToken);
}

std::vector<LayoutSlice> make_layout(const std::vector<const AttributeEncoding*>& blocks, std::size_t& width) {
  std::vector<LayoutSlice> layout;
  width = 0;
  for (const auto* b : blocks) {
    layout.push_back({b->name, width, b->width()});
    width += b->width();
  }
  return layout;
}

nlohmann::json encoding_to_json(const AttributeEncoding& e) {
  nlohmann::json j{{"name", e.name}, {"kind", e.kind == AttrKind::kNumeric ? "numeric" : "categorical"}};
  if (e.kind == AttrKind::kNumeric) {
    j["min"] = e.stats.min;
    j["max"] = e.stats.max;
    j["median"] = e.stats.median;
  } else {
    j["categories"] = e.categories;
  }
  return j;
}

AttributeEncoding encoding_from_json(const nlohmann::json& j) {
  AttributeEncoding e;
  e.name = j.at("name").get<std::string>();
  e.kind = j.at("kind").get<std::string>() == "numeric" ? AttrKind::kNumeric : AttrKind::kCategorical;
  if (e.kind == AttrKind::kNumeric) {
    e.stats.min = j.at("min").get<double>();
    e.stats.max = j.at("max").get<double>();
    e.stats.median = j.at("median").get<double>();
  } else {
    e.categories = j.at("categories").get<std::vector<std::string>>();
  }
  return e;
}

nlohmann::json encodings_to_json(const std::vector<AttributeEncoding>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& e : v) arr.push_back(encoding_to_json(e));
  return arr;
}

std::vector<AttributeEncoding> encodings_from_json(const nlohmann::json& j) {
  std::vector<AttributeEncoding> out;
  for (const auto& e : j) out.push_back(encoding_from_json(e));
  return out;
}

void rebuild_layouts(EncoderSpec& spec) {
  std::vector<const AttributeEncoding*> event_blocks{&spec.activity};
  for (const auto& e : spec.specific) event_blocks.push_back(&e);
  for (const auto& e : spec.universal) event_blocks.push_back(&e);
  spec.event_layout = make_layout(event_blocks, spec.event_width);
  std::vector<const AttributeEncoding*> case_blocks;
  for (const auto& e : spec.case_attrs) case_blocks.push_back(&e);
  spec.case_layout = make_layout(case_blocks, spec.case_width);
}

}  // namespace

double NumericStats::scale(double v) const {
  if (constant()) return 0.0;
  return std::clamp((v - min) / (max - min), 0.0, 1.0);
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw ValidityError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EncoderSpec fit_encoders(const EventLog& log, const std::set<std::string>& train_ids) {
  if (train_ids.empty()) throw ValidityError("fit_encoders: empty training set");
  std::vector<const Case*> train;
  for (const auto& id : train_ids) {
    const Case* c = log.find_case(id);
    if (!c) throw ValidityError("fit_encoders: unknown training case '" + id + "'");
    train.push_back(c);
  }

  EncoderSpec spec;
  std::vector<OptAttrValue> acts;
  for (const Case* c : train) {
    for (const auto& e : c->events) acts.emplace_back(e.activity);
  }
  spec.activity = fit_attribute(kActivityAttribute, AttrKind::kCategorical, acts, spec.warnings);

  const auto& schema = log.schema();
  for (const auto& def : schema.at_level(AttrLevel::kEventSpecific)) {
    std::vector<OptAttrValue> obs;
    for (const Case* c : train) {
      for (const auto& e : c->events) obs.push_back(e.specific_attrs.at(def.name));
    }
    spec.specific.push_back(fit_attribute(def.name, def.kind, obs, spec.warnings));
  }
  for (const auto& def : schema.at_level(AttrLevel::kEventUniversal)) {
    std::vector<OptAttrValue> obs;
    for (const Case* c : train) {
      for (const auto& e : c->events) obs.emplace_back(e.universal_attrs.at(def.name));
    }
    spec.universal.push_back(fit_attribute(def.name, def.kind, obs, spec.warnings));
  }
  {
    std::vector<OptAttrValue> obs;
    for (const Case* c : train) {
      for (const auto& e : c->events) obs.emplace_back(static_cast<double>(e.duration_min));
    }
    spec.universal.push_back(fit_attribute(kDurationAttribute, AttrKind::kNumeric, obs, spec.warnings));
  }
  for (const auto& def : schema.at_level(AttrLevel::kCase)) {
    std::vector<OptAttrValue> obs;
    for (const Case* c : train) obs.push_back(c->case_attrs.at(def.name));
    spec.case_attrs.push_back(fit_attribute(def.name, def.kind, obs, spec.warnings));
  }
  rebuild_layouts(spec);
  for (const auto& w : spec.warnings) spdlog::warn("encode: {}", w);
  return spec;
}

Vector encode_event(const Event& event, const EncoderSpec& spec, UnseenTally* tally) {
  Vector v(static_cast<Eigen::Index>(spec.event_width));
  double* out = v.data();
  std::size_t slot = 0;
  write_block(spec.activity, AttrValue{event.activity}, out + spec.event_layout[slot++].offset, tally);
  for (const auto& enc : spec.specific) {
    auto it = event.specific_attrs.find(enc.name);
    const OptAttrValue value = it == event.specific_attrs.end() ? std::nullopt : it->second;
    write_block(enc, value, out + spec.event_layout[slot++].offset, tally);
  }
  for (const auto& enc : spec.universal) {
    OptAttrValue value;
    if (enc.name == kDurationAttribute) {
      value = static_cast<double>(event.duration_min);
    } else if (auto it = event.universal_attrs.find(enc.name); it != event.universal_attrs.end()) {
      value = it->second;
    }
    write_block(enc, value, out + spec.event_layout[slot++].offset, tally);
  }
  return v;
}

Vector encode_case_attrs(const Case& c, const EncoderSpec& spec, UnseenTally* tally) {
  Vector v(static_cast<Eigen::Index>(spec.case_width));
  for (std::size_t i = 0; i < spec.case_attrs.size(); ++i) {
    const auto& enc = spec.case_attrs[i];
    auto it = c.case_attrs.find(enc.name);
    const OptAttrValue value = it == c.case_attrs.end() ? std::nullopt : it->second;
    write_block(enc, value, v.data() + spec.case_layout[i].offset, tally);
  }
  return v;
}

EncodedCase encode_case(const Case& c, const EncoderSpec& spec, std::span<const std::string> label_set,
                        UnseenTally* tally) {
  EncodedCase out;
  out.case_id = c.case_id;
  const auto n = static_cast<Eigen::Index>(c.events.size());
  out.node_matrix.resize(n, static_cast<Eigen::Index>(spec.event_width));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Event& e = c.events[static_cast<std::size_t>(i)];
    out.node_matrix.row(i) = encode_event(e, spec, tally).transpose();
    out.activities.push_back(e.activity);
    out.start_minutes.push_back(static_cast<double>(e.start_ts.epoch_ms() - c.events.front().start_ts.epoch_ms()) /
                                60000.0);
  }
  out.case_vector = encode_case_attrs(c, spec, tally);
  auto it = std::find(label_set.begin(), label_set.end(), c.outcome);
  if (it == label_set.end()) throw ValidityError("case '" + c.case_id + "' has unknown outcome '" + c.outcome + "'");
  out.outcome_index = static_cast<std::size_t>(it - label_set.begin());
  return out;
}

nlohmann::json EncoderSpec::to_json() const {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : event_layout) layout.push_back({{"attribute", s.attribute}, {"offset", s.offset}, {"width", s.width}});
  nlohmann::json clayout = nlohmann::json::array();
  for (const auto& s : case_layout) clayout.push_back({{"attribute", s.attribute}, {"offset", s.offset}, {"width", s.width}});
  return {{"activity", encoding_to_json(activity)},
          {"specific", encodings_to_json(specific)},
          {"universal", encodings_to_json(universal)},
          {"case", encodings_to_json(case_attrs)},
          {"event_width", event_width},
          {"case_width", case_width},
          {"event_layout", layout},
          {"case_layout", clayout},
          {"warnings", warnings}};
}

EncoderSpec EncoderSpec::from_json(const nlohmann::json& j) {
  EncoderSpec spec;
  spec.activity = encoding_from_json(j.at("activity"));
  spec.specific = encodings_from_json(j.at("specific"));
  spec.universal = encodings_from_json(j.at("universal"));
  spec.case_attrs = encodings_from_json(j.at("case"));
  spec.warnings = j.value("warnings", std::vector<std::string>{});
  rebuild_layouts(spec);
  if (spec.event_width != j.at("event_width").get<std::size_t>() ||
      spec.case_width != j.at("case_width").get<std::size_t>()) {
    throw ConfigError("encoder spec: stored widths disagree with the attribute encodings");
  }
  return spec;
}

}  // namespace ppm
