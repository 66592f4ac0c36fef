#include "ppm/timestamp.hpp"

#include <charconv>
#include <cstdio>

#include "ppm/error.hpp"

namespace ppm {
namespace {

// Howard Hinnant's days_from_civil / civil_from_days.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool read_fixed(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return ec == std::errc() && ptr == text.data() + pos + width;
}

}  // namespace

std::optional<Timestamp> Timestamp::parse(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (text.size() < 19) return std::nullopt;
  if (!read_fixed(text, 0, 4, year) || text[4] != '-' || !read_fixed(text, 5, 2, month) ||
      text[7] != '-' || !read_fixed(text, 8, 2, day) || (text[10] != 'T' && text[10] != ' ') ||
      !read_fixed(text, 11, 2, hour) || text[13] != ':' || !read_fixed(text, 14, 2, minute) ||
      text[16] != ':' || !read_fixed(text, 17, 2, second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12) return std::nullopt;
  if (day < 1 || static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month))) {
    return std::nullopt;
  }
  if (hour > 23 || minute > 59 || second > 59) return std::nullopt;

  std::size_t pos = 19;
  std::int64_t millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    const std::size_t digits_begin = pos;
    std::int64_t scale = 100;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      millis += scale * (text[pos] - '0');
      scale /= 10;
      ++pos;
    }
    if (pos == digits_begin) return std::nullopt;
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) return std::nullopt;

  const std::int64_t days =
      days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
  return Timestamp(secs * 1000 + millis);
}

std::string Timestamp::to_iso8601() const {
  std::int64_t ms = epoch_ms_;
  std::int64_t days = ms >= 0 ? ms / 86400000 : -((-ms + 86399999) / 86400000);
  std::int64_t rem = ms - days * 86400000;
  const Civil c = civil_from_days(days);
  const auto hour = static_cast<int>(rem / 3600000);
  rem %= 3600000;
  const auto minute = static_cast<int>(rem / 60000);
  rem %= 60000;
  const auto second = static_cast<int>(rem / 1000);
  const auto millis = static_cast<int>(rem % 1000);

  char buf[40];
  if (millis == 0) {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d",
                  static_cast<long long>(c.year), c.month, c.day, hour, minute, second);
  } else {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d.%03d",
                  static_cast<long long>(c.year), c.month, c.day, hour, minute, second, millis);
  }
  return buf;
}

std::int64_t compute_duration(Timestamp start, Timestamp end) {
  if (end < start) {
    throw ValidityError("event ends before it starts (" + start.to_iso8601() + " > " +
                        end.to_iso8601() + ")");
  }
  const std::int64_t ms = end.epoch_ms() - start.epoch_ms();
  // Non-negative, so adding half a minute before truncation rounds half away from zero.
  return (ms + 30000) / 60000;
}

}  // namespace ppm
