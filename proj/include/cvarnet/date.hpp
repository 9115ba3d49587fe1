#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace cvarnet {

/// Calendar day stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days) : days_(days) {}

  static Date from_ymd(int y, unsigned m, unsigned d);
  /// Parses YYYY-MM-DD; throws Error(data) on malformed input.
  static Date parse(std::string_view iso);

  std::string iso() const;
  /// 0 = Sunday ... 6 = Saturday.
  unsigned weekday() const;
  constexpr std::int32_t days() const { return days_; }
  constexpr Date plus_days(std::int32_t n) const { return Date(days_ + n); }

  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::int32_t days_ = 0;
};

/// End of the week containing `d`, where weeks end on `anchor` (0 = Sunday).
Date week_ending(Date d, unsigned anchor);

/// Weekday name ("FRI") to index; throws Error(config) for unknown names.
unsigned parse_weekday(std::string_view name);

}  // namespace cvarnet
