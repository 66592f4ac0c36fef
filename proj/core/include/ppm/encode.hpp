#pragma once

#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ppm/eventlog.hpp"
#include "ppm/matrix.hpp"

namespace ppm {

/// Value written into every slot of a masked categorical block.
inline constexpr double kPaddingToken = -1.0;
/// Name under which event duration is encoded as a universal numeric attribute.
inline constexpr const char* kDurationAttribute = "duration_min";
inline constexpr const char* kActivityAttribute = "activity";

struct NumericStats {
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;

  bool constant() const { return max == min; }
  /// Min-max scaled and clamped to [0, 1]; a constant attribute scales to 0.
  double scale(double v) const;
};

struct AttributeEncoding {
  std::string name;
  AttrKind kind = AttrKind::kNumeric;
  std::vector<std::string> categories;  // lexicographic; categorical only
  NumericStats stats;                   // numeric only

  std::size_t width() const { return kind == AttrKind::kNumeric ? 1 : categories.size(); }
};

struct LayoutSlice {
  std::string attribute;
  std::size_t offset = 0;
  std::size_t width = 0;
};

/// Fitted encoders for the event vector [activity, specific, universal] and the case vector.
struct EncoderSpec {
  AttributeEncoding activity;
  std::vector<AttributeEncoding> specific;
  std::vector<AttributeEncoding> universal;  // schema order, then duration_min
  std::vector<AttributeEncoding> case_attrs;
  std::vector<LayoutSlice> event_layout;
  std::vector<LayoutSlice> case_layout;
  std::size_t event_width = 0;  // d_N
  std::size_t case_width = 0;   // d_G
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static EncoderSpec from_json(const nlohmann::json& j);
};

/// Per-attribute count of categorical values not seen during fitting.
using UnseenTally = std::map<std::string, std::size_t>;

struct EncodedCase {
  std::string case_id;
  std::vector<std::string> activities;  // row labels of node_matrix
  std::vector<double> start_minutes;    // event start, minutes since the first event
  Matrix node_matrix;                   // n x d_N
  Vector case_vector;                   // d_G
  std::size_t outcome_index = 0;
};

/// Fits category lists and numeric statistics on the training cases only.
/// Throws ValidityError when `train_ids` is empty or names an unknown case.
EncoderSpec fit_encoders(const EventLog& log, const std::set<std::string>& train_ids);

Vector encode_event(const Event& event, const EncoderSpec& spec, UnseenTally* tally = nullptr);
Vector encode_case_attrs(const Case& c, const EncoderSpec& spec, UnseenTally* tally = nullptr);
EncodedCase encode_case(const Case& c, const EncoderSpec& spec, std::span<const std::string> label_set,
                        UnseenTally* tally = nullptr);

/// Median of a non-empty sample: middle element, or mean of the two middle elements.
double median_of(std::vector<double> values);

}  // namespace ppm
