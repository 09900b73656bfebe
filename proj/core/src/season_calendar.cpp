#include "eob/season_calendar.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "eob/csv.hpp"
#include "eob/error.hpp"

namespace eob {

using namespace std::chrono;
using nlohmann::json;

MonthDay parse_month_day(std::string_view text) {
  auto bad = [&] { fail(ErrorKind::config, "expected MM-DD, got '" + std::string(text) + "'"); };
  if (text.size() != 5 || text[2] != '-') bad();
  MonthDay md;
  auto p1 = std::from_chars(text.data(), text.data() + 2, md.month);
  auto p2 = std::from_chars(text.data() + 3, text.data() + 5, md.day);
  if (p1.ec != std::errc{} || p2.ec != std::errc{} || p1.ptr != text.data() + 2 || p2.ptr != text.data() + 5) bad();
  // Validate against a leap year so 02-29 is accepted.
  if (!year_month_day{year{2000}, month{md.month}, day{md.day}}.ok()) bad();
  return md;
}

std::string format_month_day(MonthDay md) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02u-%02u", md.month, md.day);
  return buf;
}

void SeasonWindow::validate() const {
  if (country_id.empty()) fail(ErrorKind::config, "season window without country");
  if (modality == Modality::unimodal && regions.size() != 1) {
    fail(ErrorKind::config, country_id + ": unimodal window needs exactly one region");
  }
  if (modality == Modality::bimodal && regions.size() != 2) {
    fail(ErrorKind::config, country_id + ": bimodal window needs exactly two regions (North, South)");
  }
  for (const auto& r : regions) {
    if (r.start == r.end) fail(ErrorKind::config, country_id + ": zero-length season");
  }
}

const std::vector<std::string>& builtin_countries() {
  static const std::vector<std::string> names{"Ethiopia", "Malawi", "Niger", "Nigeria", "Tanzania", "Uganda"};
  return names;
}

SeasonWindow builtin_calendar(std::string_view country_id) {
  auto uni = [&](MonthDay s, MonthDay e) {
    return SeasonWindow{std::string(country_id), Modality::unimodal, {SeasonRegion{"All", s, e}}, std::nullopt};
  };
  auto bi = [&](MonthDay ns, MonthDay ne, MonthDay ss, MonthDay se) {
    return SeasonWindow{std::string(country_id),
                        Modality::bimodal,
                        {SeasonRegion{"North", ns, ne}, SeasonRegion{"South", ss, se}},
                        std::nullopt};
  };
  if (country_id == "Ethiopia") return uni({3, 1}, {11, 30});
  if (country_id == "Malawi") return uni({10, 1}, {4, 30});
  if (country_id == "Niger") return uni({6, 1}, {11, 30});
  if (country_id == "Nigeria") return bi({5, 1}, {9, 30}, {3, 1}, {8, 31});
  if (country_id == "Tanzania") return uni({11, 1}, {4, 30});
  if (country_id == "Uganda") return bi({4, 1}, {9, 30}, {2, 1}, {7, 31});
  fail(ErrorKind::config, "no growing-season calendar for country '" + std::string(country_id) + "'");
}

std::size_t resolve_region(const SeasonWindow& window, const Coordinate& point) {
  if (window.modality == Modality::unimodal) return 0;
  if (!window.boundary_lat) {
    fail(ErrorKind::config, window.country_id + ": bimodal calendar needs a boundary_lat in the calendar file");
  }
  return point.lat >= *window.boundary_lat ? kNorthRegion : kSouthRegion;
}

namespace {

// Month-day in a given year; 02-29 falls back to 02-28 outside leap years.
Date on_year(int y, MonthDay md) {
  const year_month_day ymd{year{y}, month{md.month}, day{md.day}};
  if (ymd.ok()) return sys_days{ymd};
  return sys_days{year_month_day_last{year{y}, month_day_last{month{md.month}}}};
}

}  // namespace

std::vector<SeasonDates> season_dates(const DateRange& coverage, const SeasonWindow& window, std::size_t region) {
  if (region >= window.regions.size()) {
    fail(ErrorKind::config, window.country_id + ": region " + std::to_string(region) + " does not exist");
  }
  const SeasonRegion& r = window.regions[region];
  std::vector<SeasonDates> out;
  const int y0 = year_of(coverage.first) - 1;
  const int y1 = year_of(coverage.last);
  for (int y = y0; y <= y1; ++y) {
    const DateRange season{on_year(y, r.start), on_year(r.spans_year() ? y + 1 : y, r.end)};
    if (coverage.contains(season)) out.push_back({y, season});
  }
  return out;
}

DateRange SeasonSlice::range() const {
  return DateRange{start_date, start_date + days(static_cast<long>(season_length_days) - 1)};
}

std::vector<SeasonSlice> slice_seasons(const SiteSeries& series, const SeasonWindow& window, std::size_t region) {
  std::vector<SeasonSlice> out;
  if (series.values.empty()) return out;
  for (const auto& s : season_dates(series.range(), window, region)) {
    SeasonSlice slice;
    slice.household_id = series.household_id;
    slice.product_id = series.product_id;
    slice.season_label_year = s.label_year;
    slice.start_date = s.range.first;
    slice.season_length_days = static_cast<std::size_t>(s.range.days());
    const auto offset = static_cast<std::size_t>((s.range.first - series.start_date).count());
    slice.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(offset),
                        series.values.begin() + static_cast<std::ptrdiff_t>(offset + slice.season_length_days));
    out.push_back(std::move(slice));
  }
  return out;
}

// ---- CalendarSet -----------------------------------------------------------

CalendarSet CalendarSet::from_json(const json& overrides) {
  if (!overrides.is_array()) fail(ErrorKind::config, "calendar file must hold a JSON array");
  CalendarSet set;
  for (const auto& rec : overrides) {
    try {
      const std::string country = rec.at("country").get<std::string>();
      SeasonWindow w;
      if (rec.contains("regions")) {
        w.country_id = country;
        const std::string modality = rec.value("modality", "unimodal");
        if (modality == "unimodal") {
          w.modality = Modality::unimodal;
        } else if (modality == "bimodal") {
          w.modality = Modality::bimodal;
        } else {
          fail(ErrorKind::config, country + ": unknown modality '" + modality + "'");
        }
        for (const auto& r : rec.at("regions")) {
          w.regions.push_back(SeasonRegion{r.value("name", ""), parse_month_day(r.at("start").get<std::string>()),
                                           parse_month_day(r.at("end").get<std::string>())});
        }
      } else {
        w = builtin_calendar(country);
      }
      if (rec.contains("boundary_lat") && !rec.at("boundary_lat").is_null()) {
        w.boundary_lat = rec.at("boundary_lat").get<double>();
      }
      set.set(std::move(w));
    } catch (const json::exception& e) {
      fail(ErrorKind::config, std::string("calendar record: ") + e.what());
    }
  }
  return set;
}

CalendarSet CalendarSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open calendar file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
}

void CalendarSet::set(SeasonWindow window) {
  window.validate();
  std::string key = window.country_id;
  windows_.insert_or_assign(std::move(key), std::move(window));
}

const SeasonWindow& CalendarSet::window(std::string_view country_id) const {
  if (auto it = windows_.find(country_id); it != windows_.end()) return it->second;
  SeasonWindow w = builtin_calendar(country_id);
  return windows_.emplace(std::string(country_id), std::move(w)).first->second;
}

json CalendarSet::to_json() const {
  json arr = json::array();
  for (const auto& [country, w] : windows_) {
    json rec;
    rec["country"] = country;
    rec["modality"] = w.modality == Modality::bimodal ? "bimodal" : "unimodal";
    if (w.boundary_lat) rec["boundary_lat"] = *w.boundary_lat;
    json regions = json::array();
    for (const auto& r : w.regions) {
      regions.push_back({{"name", r.name}, {"start", format_month_day(r.start)}, {"end", format_month_day(r.end)}});
    }
    rec["regions"] = regions;
    arr.push_back(rec);
  }
  return arr;
}

// ---- WaveMap ---------------------------------------------------------------

WaveMap WaveMap::load(const std::filesystem::path& path) {
  const auto t = csv::Table::read(path);
  t.require_columns({"country", "survey_year", "season_label_year"});
  const auto c = t.column("country"), s = t.column("survey_year"), l = t.column("season_label_year");
  WaveMap m;
  for (const auto& rec : t.records()) {
    const auto sy = csv::parse_int(rec.fields[s]);
    const auto ly = csv::parse_int(rec.fields[l]);
    if (!sy || !ly) fail(ErrorKind::data, t.source() + ":" + std::to_string(rec.line) + ": bad year");
    m.add(rec.fields[c], static_cast<int>(*sy), static_cast<int>(*ly));
  }
  return m;
}

void WaveMap::add(const std::string& country, int survey_year, int season_label_year) {
  map_[{country, survey_year}] = season_label_year;
  has_country_[country] = true;
}

int WaveMap::season_for(std::string_view country, int survey_year) const {
  if (has_country_.find(country) == has_country_.end()) return survey_year;
  auto it = map_.find({std::string(country), survey_year});
  if (it == map_.end()) {
    fail(ErrorKind::data, "wave map has no season for " + std::string(country) + " survey year " +
                              std::to_string(survey_year));
  }
  return it->second;
}

void WaveMap::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "country,survey_year,season_label_year\n";
  for (const auto& [key, label] : map_) out << csv::quote_if_needed(key.first) << ',' << key.second << ',' << label << '\n';
}

}  // namespace eob
