#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eob/dates.hpp"

namespace eob {

enum class Variable { precip, temp_mean, temp_max, temp_min };
enum class Units { mm, m, kg_m2_s, celsius, kelvin };

std::string_view to_string(Variable v);
std::string_view to_string(Units u);
Variable parse_variable(std::string_view text);
Units parse_units(std::string_view text);

bool is_temperature(Variable v);

struct Coordinate {
  double lat = 0.0;
  double lon = 0.0;
  bool urban = false;
};

// One product's daily field on a regular lat/lon grid. Row r has its cell
// centres at latitude lat0 + r * cell_size, column c at lon0 + c * cell_size.
// values are day-major, row-major within a day; NaN marks a missing cell-day.
struct GridDataset {
  std::string product_id;
  Variable variable = Variable::precip;
  double lat0 = 0.0;
  double lon0 = 0.0;
  double cell_size = 1.0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  Date start_date{};
  std::size_t n_days = 0;
  Units input_units = Units::mm;
  std::string aggregation;  // free text: how sub-daily sources were aggregated
  std::vector<float> values;

  std::size_t cells() const { return n_rows * n_cols; }
  DateRange coverage() const;
  std::size_t index(std::size_t day, std::size_t row, std::size_t col) const {
    return (day * n_rows + row) * n_cols + col;
  }
  float at(std::size_t day, std::size_t row, std::size_t col) const { return values[index(day, row, col)]; }
  double cell_lat(std::size_t row) const { return lat0 + static_cast<double>(row) * cell_size; }
  double cell_lon(std::size_t col) const { return lon0 + static_cast<double>(col) * cell_size; }
  bool normalized() const { return input_units == Units::mm || input_units == Units::celsius; }

  // Checks shape and unit/variable consistency; throws a data error.
  void validate() const;
};

// Converts one value to mm/day or degrees Celsius.
double to_normalized_units(double value, Units units);

// Returns a copy in mm/day (precip) or degrees C (temperature). Negative
// precipitation is clamped to zero; temperatures outside [-90, 60] C are a
// data error. Already-normalised datasets pass through unchanged.
GridDataset normalize_units(GridDataset dataset);

// Daily mean as (min + max) / 2 for products that only publish extremes.
GridDataset derive_mean_temperature(const GridDataset& tmin, const GridDataset& tmax);

struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Nearest cell centre. Exact midline ties resolve to the lower index.
CellIndex nearest_cell(const GridDataset& dataset, const Coordinate& point);

enum class Extraction { nearest, bilinear };

struct SiteSeries {
  std::string household_id;
  std::string product_id;
  Variable variable = Variable::precip;
  Date start_date{};
  std::vector<float> values;

  DateRange range() const;
};

SiteSeries extract_site(const GridDataset& dataset, const Coordinate& point, const DateRange& range,
                        Extraction method = Extraction::nearest, std::string household_id = {});

// DHS-style coordinate displacement.
struct DisplacementRule {
  double urban_km = 2.0;
  double rural_km = 5.0;
  double rural_extended_km = 10.0;
  double extended_probability = 0.01;
};

struct Displacement {
  Coordinate point;
  double distance_km = 0.0;
  double bearing_rad = 0.0;
  bool extended = false;
};

inline constexpr double kKmPerDegreeLat = 111.32;

Displacement displace(const Coordinate& point, std::uint64_t seed, const DisplacementRule& rule = {});
Coordinate displace_coordinate(const Coordinate& point, std::uint64_t seed);

// Haversine distance on a sphere of mean Earth radius.
double great_circle_km(const Coordinate& a, const Coordinate& b);

// ---- files -------------------------------------------------------------

// Flat grid stack: <dir>/<name>.hdr.json + <dir>/<name>.f32.
void write_grid(const GridDataset& dataset, const std::filesystem::path& dir, const std::string& name);
GridDataset read_grid(const std::filesystem::path& header_path);
// All *.hdr.json files under dir, sorted by filename.
std::vector<std::filesystem::path> list_grids(const std::filesystem::path& dir);

struct HouseholdLocation {
  std::string household_id;
  Coordinate coord;
};

// CSV: household_id,lat,lon,urban
std::vector<HouseholdLocation> read_coordinates(const std::filesystem::path& path);
void write_coordinates(const std::filesystem::path& path, std::span<const HouseholdLocation> locations);

// Extracted series for many households. Households matched to the same cell
// share one stored series.
struct SiteStack {
  std::string product_id;
  Variable variable = Variable::precip;
  Date start_date{};
  std::size_t n_days = 0;
  std::vector<std::string> household_ids;
  std::vector<std::uint32_t> series_of_household;
  std::size_t n_series = 0;
  std::vector<float> values;  // series-major, n_series * n_days

  std::span<const float> series(std::size_t s) const { return {values.data() + s * n_days, n_days}; }
  SiteSeries site(std::size_t household_index) const;
  DateRange range() const;
};

SiteStack extract_sites(const GridDataset& dataset, std::span<const HouseholdLocation> households,
                        Extraction method = Extraction::nearest);

// <dir>/<name>.sites.json + <dir>/<name>.sites.f32
void write_site_stack(const SiteStack& stack, const std::filesystem::path& dir, const std::string& name);
SiteStack read_site_stack(const std::filesystem::path& header_path);

}  // namespace eob
