#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ppm/timestamp.hpp"

namespace ppm {

enum class AttrKind { kNumeric, kCategorical };
enum class AttrLevel { kEventUniversal, kEventSpecific, kCase };

struct AttributeDef {
  std::string name;
  AttrKind kind = AttrKind::kNumeric;
  AttrLevel level = AttrLevel::kEventUniversal;
};

/// Declares the attribute columns of an event-log CSV beyond the fixed
/// `case_id,activity,start_ts,end_ts,outcome` columns.
///
/// JSON form: `{"attributes": [{"name": "age", "kind": "numeric", "level": "case"}, ...]}`
/// with kind in {numeric, categorical} and level in {event_universal, event_specific, case}.
struct SchemaSpec {
  std::vector<AttributeDef> attributes;

  std::vector<AttributeDef> at_level(AttrLevel level) const;
  const AttributeDef* find(const std::string& name) const;

  nlohmann::json to_json() const;
  static SchemaSpec from_json(const nlohmann::json& j);
  static SchemaSpec load(const std::string& path);
};

using AttrValue = std::variant<double, std::string>;
using OptAttrValue = std::optional<AttrValue>;

struct Event {
  std::string activity;
  Timestamp start_ts;
  Timestamp end_ts;
  std::int64_t duration_min = 0;
  std::map<std::string, AttrValue> universal_attrs;
  std::map<std::string, OptAttrValue> specific_attrs;
  /// Position of the event's row in its source, used as the last ordering tie-break.
  std::size_t file_order = 0;
};

struct Case {
  std::string case_id;
  std::vector<Event> events;
  std::map<std::string, OptAttrValue> case_attrs;
  std::string outcome;
};

/// Immutable after construction; safe to share read-only across threads.
class EventLog {
 public:
  EventLog() = default;

  /// Validates the cases against the schema, orders each case's events and
  /// derives the label set. Throws IntegrityError / SchemaError / ValidityError.
  EventLog(SchemaSpec schema, std::vector<Case> cases);

  const std::vector<Case>& cases() const { return cases_; }
  const SchemaSpec& schema() const { return schema_; }
  /// Class labels, numerically ordered when every label is an integer, else lexicographic.
  const std::vector<std::string>& label_set() const { return label_set_; }

  const Case* find_case(const std::string& case_id) const;
  std::size_t label_index(const std::string& label) const;
  std::size_t max_case_length() const;
  std::vector<std::size_t> label_histogram() const;

  bool operator==(const EventLog& other) const;

 private:
  SchemaSpec schema_;
  std::vector<Case> cases_;
  std::vector<std::string> label_set_;
  std::unordered_map<std::string, std::size_t> case_index_;
};

EventLog parse_event_log(const std::string& path, const SchemaSpec& schema);
EventLog parse_event_log(std::istream& in, const SchemaSpec& schema,
                         const std::string& source_name = "<stream>");

/// Writes the fixed columns followed by schema attributes in schema order.
void write_event_log(const EventLog& log, std::ostream& out);
void write_event_log(const EventLog& log, const std::string& path);

/// Permutation that sorts events by (start_ts, end_ts, file_order).
std::vector<std::size_t> canonical_order(std::span<const Event> events);
Case order_events(Case c);

std::string format_attr(const AttrValue& v);
std::string format_number(double v);

}  // namespace ppm
