#include "eob/dates.hpp"

#include <charconv>
#include <cstdio>

#include "eob/error.hpp"

namespace eob {

using namespace std::chrono;

Date make_date(int year, unsigned month, unsigned day) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) {
    fail(ErrorKind::config, "invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) + "-" +
                                std::to_string(day));
  }
  return sys_days{ymd};
}

Date parse_date(std::string_view text) {
  auto bad = [&] { fail(ErrorKind::config, "expected YYYY-MM-DD date, got '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::string_view part, auto& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc{} || ptr != part.data() + part.size()) bad();
  };
  parse(text.substr(0, 4), y);
  parse(text.substr(5, 2), m);
  parse(text.substr(8, 2), d);
  return make_date(y, m, d);
}

std::string format_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Date d) { return static_cast<int>(year_month_day{d}.year()); }

}  // namespace eob
