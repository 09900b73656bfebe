#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eob/dates.hpp"
#include "eob/grid_store.hpp"

namespace eob {

struct MonthDay {
  unsigned month = 1;
  unsigned day = 1;
  friend auto operator<=>(const MonthDay&, const MonthDay&) = default;
};

// "MM-DD"
MonthDay parse_month_day(std::string_view text);
std::string format_month_day(MonthDay md);

enum class Modality { unimodal, bimodal };

struct SeasonRegion {
  std::string name;
  MonthDay start;
  MonthDay end;

  bool spans_year() const { return end < start; }
};

// Growing-season rule for one country. Bimodal windows carry exactly two
// regions, North first, split at boundary_lat.
struct SeasonWindow {
  std::string country_id;
  Modality modality = Modality::unimodal;
  std::vector<SeasonRegion> regions;
  std::optional<double> boundary_lat;

  void validate() const;
};

inline constexpr std::size_t kNorthRegion = 0;
inline constexpr std::size_t kSouthRegion = 1;

const std::vector<std::string>& builtin_countries();
SeasonWindow builtin_calendar(std::string_view country_id);

// North when lat >= boundary; unimodal windows have the single region 0.
std::size_t resolve_region(const SeasonWindow& window, const Coordinate& point);

struct SeasonDates {
  int label_year = 0;  // calendar year of the start date
  DateRange range;
};

// Every season of `region` that lies completely inside `coverage`, in
// chronological order.
std::vector<SeasonDates> season_dates(const DateRange& coverage, const SeasonWindow& window, std::size_t region);

struct SeasonSlice {
  std::string household_id;
  std::string product_id;
  int season_label_year = 0;
  Date start_date{};
  std::vector<float> values;
  std::size_t season_length_days = 0;

  DateRange range() const;
};

std::vector<SeasonSlice> slice_seasons(const SiteSeries& series, const SeasonWindow& window, std::size_t region);

// Built-in calendars plus user overrides. Bimodal countries need a boundary
// latitude from the override file before they can be used.
class CalendarSet {
 public:
  CalendarSet() = default;

  // JSON array of window records:
  //   {"country": "Nigeria", "modality": "bimodal", "boundary_lat": 9.0,
  //    "regions": [{"name": "North", "start": "05-01", "end": "09-30"}, ...]}
  // A record with only "country" and "boundary_lat" completes a built-in
  // bimodal window.
  static CalendarSet from_json(const nlohmann::json& overrides);
  static CalendarSet load(const std::filesystem::path& path);

  void set(SeasonWindow window);
  const SeasonWindow& window(std::string_view country_id) const;
  nlohmann::json to_json() const;

 private:
  mutable std::map<std::string, SeasonWindow, std::less<>> windows_;
};

// Survey wave to season label: CSV country,survey_year,season_label_year.
// Countries with no rows map survey years onto themselves.
class WaveMap {
 public:
  static WaveMap load(const std::filesystem::path& path);
  void add(const std::string& country, int survey_year, int season_label_year);
  int season_for(std::string_view country, int survey_year) const;
  bool empty() const { return map_.empty(); }
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::pair<std::string, int>, int> map_;
  std::map<std::string, bool, std::less<>> has_country_;
};

}  // namespace eob
