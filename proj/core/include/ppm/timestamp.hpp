#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ppm {

/// Point in time as milliseconds since the Unix epoch, UTC.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t epoch_ms) : epoch_ms_(epoch_ms) {}

  constexpr std::int64_t epoch_ms() const { return epoch_ms_; }
  constexpr double epoch_minutes() const { return static_cast<double>(epoch_ms_) / 60000.0; }

  constexpr auto operator<=>(const Timestamp&) const = default;

  /// Accepts `YYYY-MM-DDTHH:MM:SS[.fff][Z]` (a space may replace `T`).
  /// Timezone-naive input is read as UTC. Returns nullopt on malformed text.
  static std::optional<Timestamp> parse(std::string_view text);

  /// Inverse of parse(); fractional seconds are written only when non-zero.
  std::string to_iso8601() const;

 private:
  std::int64_t epoch_ms_ = 0;
};

/// Whole minutes between two instants, rounded half away from zero.
/// Throws ValidityError when `end` precedes `start`.
std::int64_t compute_duration(Timestamp start, Timestamp end);

}  // namespace ppm
