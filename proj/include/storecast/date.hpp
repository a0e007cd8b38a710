#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace storecast {

/// Calendar date backed by a day count since the Unix epoch.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}

  static std::optional<Date> from_ymd(int y, unsigned m, unsigned d) {
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date(std::chrono::sys_days{ymd});
  }

  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return static_cast<int>(ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(ymd().day()); }

  /// ISO weekday, Monday = 1 .. Sunday = 7.
  unsigned iso_weekday() const { return std::chrono::weekday{days_}.iso_encoding(); }

  /// ISO-8601 week number (1..53).
  unsigned iso_week() const {
    const Date thursday = plus_days(4 - static_cast<int>(iso_weekday()));
    const auto jan1 = std::chrono::sys_days{std::chrono::year{thursday.year()} / std::chrono::January / 1};
    const auto ordinal = (thursday.days_ - jan1).count();
    return static_cast<unsigned>(ordinal / 7 + 1);
  }

  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }
  long serial() const { return days_.time_since_epoch().count(); }

  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
  }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

enum class DateFormat { Iso, DayMonthYear };

namespace detail {
inline bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}
}  // namespace detail

/// Guess the format from a sample cell: YYYY-MM-DD or DD-MM-YYYY.
inline std::optional<DateFormat> detect_date_format(std::string_view sample) {
  if (sample.size() != 10) return std::nullopt;
  if (sample[4] == '-' && sample[7] == '-') return DateFormat::Iso;
  if (sample[2] == '-' && sample[5] == '-') return DateFormat::DayMonthYear;
  return std::nullopt;
}

inline std::optional<Date> parse_date(std::string_view s, DateFormat fmt) {
  if (s.size() != 10) return std::nullopt;
  int y = 0, m = 0, d = 0;
  bool ok = false;
  if (fmt == DateFormat::Iso) {
    ok = s[4] == '-' && s[7] == '-' && detail::parse_fixed(s, 0, 4, y) && detail::parse_fixed(s, 5, 2, m) &&
         detail::parse_fixed(s, 8, 2, d);
  } else {
    ok = s[2] == '-' && s[5] == '-' && detail::parse_fixed(s, 0, 2, d) && detail::parse_fixed(s, 3, 2, m) &&
         detail::parse_fixed(s, 6, 4, y);
  }
  if (!ok) return std::nullopt;
  return Date::from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

/// Fourth Thursday of November.
inline Date thanksgiving_date(int year) {
  using namespace std::chrono;
  const sys_days day{std::chrono::year{year} / November / Thursday[4]};
  return Date(day);
}

inline Date christmas_date(int year) { return *Date::from_ymd(year, 12, 25); }

}  // namespace storecast
