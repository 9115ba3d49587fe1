#include "cvarnet/date.hpp"

#include "cvarnet/core.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>

namespace cvarnet {

namespace chr = std::chrono;

Date Date::from_ymd(int y, unsigned m, unsigned d) {
  chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) {
    fail(ErrorKind::data, "invalid calendar date " + std::to_string(y) + "-" +
                              std::to_string(m) + "-" + std::to_string(d));
  }
  return Date(static_cast<std::int32_t>(chr::sys_days{ymd}.time_since_epoch().count()));
}

Date Date::parse(std::string_view iso) {
  auto bad = [&]() -> Date {
    fail(ErrorKind::data, "malformed ISO-8601 date '" + std::string(iso) + "'");
  };
  if (iso.size() < 10 || iso[4] != '-' || iso[7] != '-') return bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto p1 = std::from_chars(iso.data(), iso.data() + 4, y);
  auto p2 = std::from_chars(iso.data() + 5, iso.data() + 7, m);
  auto p3 = std::from_chars(iso.data() + 8, iso.data() + 10, d);
  if (p1.ec != std::errc{} || p2.ec != std::errc{} || p3.ec != std::errc{}) return bad();
  return from_ymd(y, m, d);
}

std::string Date::iso() const {
  chr::year_month_day ymd{chr::sys_days{chr::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

unsigned Date::weekday() const {
  return chr::weekday{chr::sys_days{chr::days{days_}}}.c_encoding();
}

Date week_ending(Date d, unsigned anchor) {
  const unsigned wd = d.weekday();
  const unsigned ahead = (anchor + 7 - wd) % 7;
  return d.plus_days(static_cast<std::int32_t>(ahead));
}

unsigned parse_weekday(std::string_view name) {
  static constexpr std::array<std::string_view, 7> names{"SUN", "MON", "TUE", "WED",
                                                         "THU", "FRI", "SAT"};
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper.rfind("W-", 0) == 0) upper = upper.substr(2);
  for (unsigned i = 0; i < names.size(); ++i) {
    if (upper == names[i]) return i;
  }
  fail(ErrorKind::config, "unknown weekday anchor '" + std::string(name) + "'");
}

}  // namespace cvarnet
