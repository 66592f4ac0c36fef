#include "ppm/eventlog.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <ostream>

#include "ppm/csv.hpp"
#include "ppm/error.hpp"

namespace ppm {
namespace {

constexpr const char* kCoreColumns[] = {"case_id", "activity", "start_ts", "end_ts", "outcome"};

const char* kind_name(AttrKind k) { return k == AttrKind::kNumeric ? "numeric" : "categorical"; }

const char* level_name(AttrLevel l) {
  switch (l) {
    case AttrLevel::kEventUniversal:
      return "event_universal";
    case AttrLevel::kEventSpecific:
      return "event_specific";
    case AttrLevel::kCase:
      return "case";
  }
  return "?";
}

bool parse_integer_label(const std::string& s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string> natural_label_order(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  long long tmp = 0;
  const bool all_int = std::all_of(labels.begin(), labels.end(),
                                   [&](const std::string& s) { return parse_integer_label(s, tmp); });
  if (all_int) {
    std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      parse_integer_label(a, x);
      parse_integer_label(b, y);
      return x < y;
    });
  }
  return labels;
}

OptAttrValue parse_cell(const std::string& cell, const AttributeDef& def, std::size_t line) {
  if (cell.empty()) return std::nullopt;
  if (def.kind == AttrKind::kCategorical) return AttrValue{cell};
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError("line " + std::to_string(line) + ": attribute '" + def.name +
                     "' expects a number, got '" + cell + "'");
  }
  return AttrValue{v};
}

bool value_matches_kind(const AttrValue& v, AttrKind kind) {
  return kind == AttrKind::kNumeric ? std::holds_alternative<double>(v)
                                    : std::holds_alternative<std::string>(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// SchemaSpec

std::vector<AttributeDef> SchemaSpec::at_level(AttrLevel level) const {
  std::vector<AttributeDef> out;
  for (const auto& a : attributes) {
    if (a.level == level) out.push_back(a);
  }
  return out;
}

const AttributeDef* SchemaSpec::find(const std::string& name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

nlohmann::json SchemaSpec::to_json() const {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : attributes) {
    attrs.push_back({{"name", a.name}, {"kind", kind_name(a.kind)}, {"level", level_name(a.level)}});
  }
  return {{"attributes", attrs}};
}

SchemaSpec SchemaSpec::from_json(const nlohmann::json& j) {
  SchemaSpec spec;
  if (!j.is_object() || !j.contains("attributes") || !j["attributes"].is_array()) {
    throw SchemaError("schema: expected an object with an 'attributes' array");
  }
  for (const auto& item : j["attributes"]) {
    AttributeDef def;
    def.name = item.at("name").get<std::string>();
    const auto kind = item.at("kind").get<std::string>();
    const auto level = item.at("level").get<std::string>();
    if (kind == "numeric") {
      def.kind = AttrKind::kNumeric;
    } else if (kind == "categorical") {
      def.kind = AttrKind::kCategorical;
    } else {
      throw SchemaError("schema: attribute '" + def.name + "' has unknown kind '" + kind + "'");
    }
    if (level == "event_universal") {
      def.level = AttrLevel::kEventUniversal;
    } else if (level == "event_specific") {
      def.level = AttrLevel::kEventSpecific;
    } else if (level == "case") {
      def.level = AttrLevel::kCase;
    } else {
      throw SchemaError("schema: attribute '" + def.name + "' has unknown level '" + level + "'");
    }
    for (const char* core : kCoreColumns) {
      if (def.name == core) throw SchemaError("schema: attribute name '" + def.name + "' is reserved");
    }
    if (def.name == "duration_min") throw SchemaError("schema: 'duration_min' is derived, not a column");
    if (spec.find(def.name)) throw SchemaError("schema: duplicate attribute '" + def.name + "'");
    spec.attributes.push_back(std::move(def));
  }
  return spec;
}

SchemaSpec SchemaSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Ordering

std::vector<std::size_t> canonical_order(std::span<const Event> events) {
  std::vector<std::size_t> idx(events.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const Event& x = events[a];
    const Event& y = events[b];
    if (x.start_ts != y.start_ts) return x.start_ts < y.start_ts;
    if (x.end_ts != y.end_ts) return x.end_ts < y.end_ts;
    return x.file_order < y.file_order;
  });
  return idx;
}

Case order_events(Case c) {
  const auto idx = canonical_order(c.events);
  std::vector<Event> sorted;
  sorted.reserve(c.events.size());
  for (std::size_t i : idx) sorted.push_back(std::move(c.events[i]));
  c.events = std::move(sorted);
  return c;
}

// ---------------------------------------------------------------------------
// EventLog

EventLog::EventLog(SchemaSpec schema, std::vector<Case> cases) : schema_(std::move(schema)) {
  std::vector<std::string> outcomes;
  for (auto& c : cases) {
    if (c.events.empty()) throw IntegrityError("case '" + c.case_id + "' has no events");
    if (c.outcome.empty()) throw IntegrityError("case '" + c.case_id + "' has no outcome");
    if (case_index_.count(c.case_id)) throw IntegrityError("duplicate case id '" + c.case_id + "'");
    for (const auto& e : c.events) {
      if (e.end_ts < e.start_ts) {
        throw ValidityError("case '" + c.case_id + "': event '" + e.activity + "' ends before it starts");
      }
      if (e.duration_min != compute_duration(e.start_ts, e.end_ts)) {
        throw IntegrityError("case '" + c.case_id + "': stored duration disagrees with timestamps");
      }
      for (const auto& [name, value] : e.universal_attrs) {
        const auto* def = schema_.find(name);
        if (!def || def->level != AttrLevel::kEventUniversal) {
          throw SchemaError("unknown universal attribute '" + name + "'");
        }
        if (!value_matches_kind(value, def->kind)) {
          throw SchemaError("attribute '" + name + "' has the wrong value kind");
        }
      }
      for (const auto& [name, value] : e.specific_attrs) {
        const auto* def = schema_.find(name);
        if (!def || def->level != AttrLevel::kEventSpecific) {
          throw SchemaError("unknown specific attribute '" + name + "'");
        }
        if (value && !value_matches_kind(*value, def->kind)) {
          throw SchemaError("attribute '" + name + "' has the wrong value kind");
        }
      }
      for (const auto& def : schema_.at_level(AttrLevel::kEventUniversal)) {
        if (!e.universal_attrs.count(def.name)) {
          throw IntegrityError("case '" + c.case_id + "': universal attribute '" + def.name +
                               "' missing on an event");
        }
      }
    }
    for (auto& e : c.events) {
      for (const auto& def : schema_.at_level(AttrLevel::kEventSpecific)) e.specific_attrs.emplace(def.name, std::nullopt);
    }
    for (const auto& def : schema_.at_level(AttrLevel::kCase)) c.case_attrs.emplace(def.name, std::nullopt);
    for (const auto& [name, value] : c.case_attrs) {
      const auto* def = schema_.find(name);
      if (!def || def->level != AttrLevel::kCase) throw SchemaError("unknown case attribute '" + name + "'");
      if (value && !value_matches_kind(*value, def->kind)) {
        throw SchemaError("attribute '" + name + "' has the wrong value kind");
      }
    }
    c = order_events(std::move(c));
    case_index_.emplace(c.case_id, cases_.size());
    outcomes.push_back(c.outcome);
    cases_.push_back(std::move(c));
  }
  label_set_ = natural_label_order(std::move(outcomes));
}

const Case* EventLog::find_case(const std::string& case_id) const {
  auto it = case_index_.find(case_id);
  return it == case_index_.end() ? nullptr : &cases_[it->second];
}

std::size_t EventLog::label_index(const std::string& label) const {
  auto it = std::find(label_set_.begin(), label_set_.end(), label);
  if (it == label_set_.end()) throw ValidityError("label '" + label + "' not in label set");
  return static_cast<std::size_t>(it - label_set_.begin());
}

std::size_t EventLog::max_case_length() const {
  std::size_t m = 0;
  for (const auto& c : cases_) m = std::max(m, c.events.size());
  return m;
}

std::vector<std::size_t> EventLog::label_histogram() const {
  std::vector<std::size_t> h(label_set_.size(), 0);
  for (const auto& c : cases_) ++h[label_index(c.outcome)];
  return h;
}

bool EventLog::operator==(const EventLog& other) const {
  if (label_set_ != other.label_set_ || cases_.size() != other.cases_.size()) return false;
  if (schema_.to_json() != other.schema_.to_json()) return false;
  for (std::size_t i = 0; i < cases_.size(); ++i) {
    const Case& a = cases_[i];
    const Case& b = other.cases_[i];
    if (a.case_id != b.case_id || a.outcome != b.outcome || a.case_attrs != b.case_attrs ||
        a.events.size() != b.events.size()) {
      return false;
    }
    for (std::size_t k = 0; k < a.events.size(); ++k) {
      const Event& x = a.events[k];
      const Event& y = b.events[k];
      if (x.activity != y.activity || x.start_ts != y.start_ts || x.end_ts != y.end_ts ||
          x.duration_min != y.duration_min || x.universal_attrs != y.universal_attrs ||
          x.specific_attrs != y.specific_attrs) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parsing

EventLog parse_event_log(const std::string& path, const SchemaSpec& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open event log " + path);
  return parse_event_log(in, schema, path);
}

EventLog parse_event_log(std::istream& in, const SchemaSpec& schema, const std::string& source_name) {
  const auto rows = csv::read(in);
  if (rows.empty()) throw ParseError(source_name + ": missing header row");
  const auto& header = rows.front();

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) {
      throw SchemaError(source_name + ": duplicate column '" + header[i] + "'");
    }
  }
  for (const char* core : kCoreColumns) {
    if (!column.count(core)) throw SchemaError(source_name + ": missing required column '" + std::string(core) + "'");
  }
  for (const auto& name : header) {
    const bool is_core = std::any_of(std::begin(kCoreColumns), std::end(kCoreColumns),
                                     [&](const char* c) { return name == c; });
    if (!is_core && !schema.find(name)) {
      throw SchemaError(source_name + ": column '" + name + "' is not declared in the schema");
    }
  }
  for (const auto& def : schema.attributes) {
    if (!column.count(def.name)) {
      throw SchemaError(source_name + ": schema attribute '" + def.name + "' has no column");
    }
  }

  const std::size_t c_case = column["case_id"], c_act = column["activity"], c_start = column["start_ts"],
                    c_end = column["end_ts"], c_out = column["outcome"];

  std::vector<Case> cases;
  std::unordered_map<std::string, std::size_t> by_id;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;
    const auto where = source_name + " line " + std::to_string(line);
    if (row.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    const auto& id = row[c_case];
    if (id.empty()) throw ParseError(where + ": empty case_id");
    if (row[c_act].empty()) throw ParseError(where + ": empty activity");
    if (row[c_out].empty()) throw ParseError(where + ": empty outcome");

    const auto start = Timestamp::parse(row[c_start]);
    if (!start) throw ParseError(where + ": malformed start_ts '" + row[c_start] + "'");
    const auto end = Timestamp::parse(row[c_end]);
    if (!end) throw ParseError(where + ": malformed end_ts '" + row[c_end] + "'");
    if (*end < *start) throw ValidityError(where + ": end_ts precedes start_ts");

    auto [it, inserted] = by_id.emplace(id, cases.size());
    if (inserted) {
      Case c;
      c.case_id = id;
      c.outcome = row[c_out];
      for (const auto& def : schema.at_level(AttrLevel::kCase)) c.case_attrs[def.name] = std::nullopt;
      cases.push_back(std::move(c));
    }
    Case& c = cases[it->second];
    if (c.outcome != row[c_out]) {
      throw IntegrityError(where + ": case '" + id + "' has conflicting outcomes '" + c.outcome +
                           "' and '" + row[c_out] + "'");
    }

    Event e;
    e.activity = row[c_act];
    e.start_ts = *start;
    e.end_ts = *end;
    e.duration_min = compute_duration(*start, *end);
    e.file_order = r - 1;
    for (const auto& def : schema.attributes) {
      auto value = parse_cell(row[column[def.name]], def, line);
      switch (def.level) {
        case AttrLevel::kEventUniversal:
          if (!value) throw ParseError(where + ": universal attribute '" + def.name + "' is empty");
          e.universal_attrs.emplace(def.name, std::move(*value));
          break;
        case AttrLevel::kEventSpecific:
          e.specific_attrs.emplace(def.name, std::move(value));
          break;
        case AttrLevel::kCase: {
          auto& slot = c.case_attrs[def.name];
          if (value) {
            if (slot && *slot != *value) {
              throw IntegrityError(where + ": case '" + id + "' has conflicting values for '" +
                                   def.name + "'");
            }
            slot = std::move(value);
          }
          break;
        }
      }
    }
    c.events.push_back(std::move(e));
  }
  return EventLog(schema, std::move(cases));
}

// ---------------------------------------------------------------------------
// Writing

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

std::string format_attr(const AttrValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

void write_event_log(const EventLog& log, std::ostream& out) {
  csv::Row header(std::begin(kCoreColumns), std::end(kCoreColumns));
  for (const auto& def : log.schema().attributes) header.push_back(def.name);
  csv::write_row(out, header);

  for (const auto& c : log.cases()) {
    for (const auto& e : c.events) {
      csv::Row row{c.case_id, e.activity, e.start_ts.to_iso8601(), e.end_ts.to_iso8601(), c.outcome};
      for (const auto& def : log.schema().attributes) {
        std::string cell;
        switch (def.level) {
          case AttrLevel::kEventUniversal:
            cell = format_attr(e.universal_attrs.at(def.name));
            break;
          case AttrLevel::kEventSpecific: {
            auto it = e.specific_attrs.find(def.name);
            if (it != e.specific_attrs.end() && it->second) cell = format_attr(*it->second);
            break;
          }
          case AttrLevel::kCase: {
            auto it = c.case_attrs.find(def.name);
            if (it != c.case_attrs.end() && it->second) cell = format_attr(*it->second);
            break;
          }
        }
        row.push_back(std::move(cell));
      }
      csv::write_row(out, row);
    }
  }
}

void write_event_log(const EventLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidityError("cannot write " + path);
  write_event_log(log, out);
}

}  // namespace ppm
