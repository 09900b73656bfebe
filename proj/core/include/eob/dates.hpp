#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace eob {

using Date = std::chrono::sys_days;

// Inclusive span of calendar days.
struct DateRange {
  Date first;
  Date last;

  long days() const { return (last - first).count() + 1; }
  bool contains(Date d) const { return d >= first && d <= last; }
  bool contains(const DateRange& other) const { return other.first >= first && other.last <= last; }
};

Date make_date(int year, unsigned month, unsigned day);

// ISO 8601 calendar date, "YYYY-MM-DD".
Date parse_date(std::string_view text);
std::string format_date(Date d);

int year_of(Date d);

}  // namespace eob
