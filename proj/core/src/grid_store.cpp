#include "eob/grid_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eob/csv.hpp"
#include "eob/error.hpp"
#include "eob/random.hpp"

namespace eob {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Variable v) {
  switch (v) {
    case Variable::precip: return "precip";
    case Variable::temp_mean: return "temp_mean";
    case Variable::temp_max: return "temp_max";
    case Variable::temp_min: return "temp_min";
  }
  return "?";
}

std::string_view to_string(Units u) {
  switch (u) {
    case Units::mm: return "mm";
    case Units::m: return "m";
    case Units::kg_m2_s: return "kg_m2_s";
    case Units::celsius: return "celsius";
    case Units::kelvin: return "kelvin";
  }
  return "?";
}

Variable parse_variable(std::string_view text) {
  for (auto v : {Variable::precip, Variable::temp_mean, Variable::temp_max, Variable::temp_min}) {
    if (text == to_string(v)) return v;
  }
  fail(ErrorKind::config, "unknown variable '" + std::string(text) + "'");
}

Units parse_units(std::string_view text) {
  for (auto u : {Units::mm, Units::m, Units::kg_m2_s, Units::celsius, Units::kelvin}) {
    if (text == to_string(u)) return u;
  }
  fail(ErrorKind::config, "unknown unit tag '" + std::string(text) + "'");
}

bool is_temperature(Variable v) { return v != Variable::precip; }

namespace {

bool is_temperature_unit(Units u) { return u == Units::celsius || u == Units::kelvin; }

}  // namespace

DateRange GridDataset::coverage() const {
  return DateRange{start_date, start_date + std::chrono::days(static_cast<long>(n_days) - 1)};
}

void GridDataset::validate() const {
  const std::string who = "grid '" + product_id + "/" + std::string(to_string(variable)) + "'";
  if (!(cell_size > 0.0)) fail(ErrorKind::data, who + ": cell_size must be positive");
  if (n_rows == 0 || n_cols == 0 || n_days == 0) fail(ErrorKind::data, who + ": empty dimensions");
  if (values.size() != n_days * n_rows * n_cols) {
    fail(ErrorKind::data, who + ": expected " + std::to_string(n_days * n_rows * n_cols) + " values, found " +
                              std::to_string(values.size()));
  }
  if (is_temperature(variable) != is_temperature_unit(input_units)) {
    fail(ErrorKind::config, who + ": units '" + std::string(to_string(input_units)) + "' do not fit the variable");
  }
}

double to_normalized_units(double value, Units units) {
  switch (units) {
    case Units::mm:
    case Units::celsius:
      return value;
    case Units::m:
      return value * 1000.0;
    case Units::kg_m2_s:
      return value * 86400.0;
    case Units::kelvin:
      return value - 273.15;
  }
  fail(ErrorKind::config, "unknown unit tag");
}

GridDataset normalize_units(GridDataset dataset) {
  dataset.validate();
  const Units from = dataset.input_units;
  const bool temp = is_temperature(dataset.variable);
  for (float& v : dataset.values) {
    if (std::isnan(v)) continue;
    const double x = to_normalized_units(static_cast<double>(v), from);
    if (temp) {
      if (x < -90.0 || x > 60.0) {
        fail(ErrorKind::data, "grid '" + dataset.product_id + "': temperature " + std::to_string(x) +
                                  " C outside [-90, 60] after conversion from " + std::string(to_string(from)));
      }
      v = static_cast<float>(x);
    } else {
      v = static_cast<float>(std::max(x, 0.0));
    }
  }
  dataset.input_units = temp ? Units::celsius : Units::mm;
  return dataset;
}

GridDataset derive_mean_temperature(const GridDataset& tmin, const GridDataset& tmax) {
  if (tmin.variable != Variable::temp_min || tmax.variable != Variable::temp_max) {
    fail(ErrorKind::config, "derive_mean_temperature expects a temp_min and a temp_max grid");
  }
  const GridDataset lo = normalize_units(tmin);
  const GridDataset hi = normalize_units(tmax);
  if (lo.n_rows != hi.n_rows || lo.n_cols != hi.n_cols || lo.n_days != hi.n_days || lo.start_date != hi.start_date ||
      lo.lat0 != hi.lat0 || lo.lon0 != hi.lon0 || lo.cell_size != hi.cell_size) {
    fail(ErrorKind::alignment, "min/max temperature grids of '" + tmin.product_id + "' are not aligned");
  }
  GridDataset mean = lo;
  mean.variable = Variable::temp_mean;
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    mean.values[i] = static_cast<float>(0.5 * (static_cast<double>(lo.values[i]) + static_cast<double>(hi.values[i])));
  }
  return mean;
}

namespace {

void check_bounds(const GridDataset& d, const Coordinate& p) {
  const double half = 0.5 * d.cell_size;
  const double lat_lo = d.lat0 - half, lat_hi = d.lat0 + (static_cast<double>(d.n_rows) - 0.5) * d.cell_size;
  const double lon_lo = d.lon0 - half, lon_hi = d.lon0 + (static_cast<double>(d.n_cols) - 0.5) * d.cell_size;
  if (!(p.lat >= lat_lo && p.lat <= lat_hi && p.lon >= lon_lo && p.lon <= lon_hi)) {
    std::ostringstream msg;
    msg << "point (" << p.lat << ", " << p.lon << ") outside grid '" << d.product_id << "' bounds [" << lat_lo << ", "
        << lat_hi << "] x [" << lon_lo << ", " << lon_hi << "]";
    fail(ErrorKind::out_of_bounds, msg.str());
  }
}

std::size_t nearest_index(double offset_cells, std::size_t n) {
  // ceil(f - 1/2) sends exact half-way points to the lower index.
  const double k = std::ceil(offset_cells - 0.5);
  if (k <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), n - 1);
}

std::size_t first_day_offset(const GridDataset& d, const DateRange& range) {
  const DateRange cov = d.coverage();
  if (range.last < range.first || !cov.contains(range)) {
    fail(ErrorKind::coverage, "date range " + format_date(range.first) + ".." + format_date(range.last) +
                                  " outside coverage of '" + d.product_id + "' (" + format_date(cov.first) + ".." +
                                  format_date(cov.last) + ")");
  }
  return static_cast<std::size_t>((range.first - d.start_date).count());
}

}  // namespace

CellIndex nearest_cell(const GridDataset& dataset, const Coordinate& point) {
  check_bounds(dataset, point);
  return CellIndex{nearest_index((point.lat - dataset.lat0) / dataset.cell_size, dataset.n_rows),
                   nearest_index((point.lon - dataset.lon0) / dataset.cell_size, dataset.n_cols)};
}

DateRange SiteSeries::range() const {
  return DateRange{start_date, start_date + std::chrono::days(static_cast<long>(values.size()) - 1)};
}

namespace {

struct BilinearWeights {
  std::size_t r0, r1, c0, c1;
  double wr, wc;  // weight of r1 / c1
};

BilinearWeights bilinear_weights(const GridDataset& d, const Coordinate& p) {
  auto axis = [](double f, std::size_t n, std::size_t& i0, std::size_t& i1, double& w) {
    f = std::clamp(f, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(f));
    i1 = std::min(i0 + 1, n - 1);
    w = f - static_cast<double>(i0);
  };
  BilinearWeights b{};
  axis((p.lat - d.lat0) / d.cell_size, d.n_rows, b.r0, b.r1, b.wr);
  axis((p.lon - d.lon0) / d.cell_size, d.n_cols, b.c0, b.c1, b.wc);
  return b;
}

float bilinear_at(const GridDataset& d, std::size_t day, const BilinearWeights& b) {
  const double v00 = d.at(day, b.r0, b.c0), v01 = d.at(day, b.r0, b.c1);
  const double v10 = d.at(day, b.r1, b.c0), v11 = d.at(day, b.r1, b.c1);
  const double top = v00 * (1.0 - b.wc) + v01 * b.wc;
  const double bottom = v10 * (1.0 - b.wc) + v11 * b.wc;
  return static_cast<float>(top * (1.0 - b.wr) + bottom * b.wr);
}

}  // namespace

SiteSeries extract_site(const GridDataset& dataset, const Coordinate& point, const DateRange& range,
                        Extraction method, std::string household_id) {
  check_bounds(dataset, point);
  const std::size_t d0 = first_day_offset(dataset, range);
  SiteSeries s;
  s.household_id = std::move(household_id);
  s.product_id = dataset.product_id;
  s.variable = dataset.variable;
  s.start_date = range.first;
  const auto n = static_cast<std::size_t>(range.days());
  s.values.resize(n);
  if (method == Extraction::nearest) {
    const CellIndex cell = nearest_cell(dataset, point);
    for (std::size_t i = 0; i < n; ++i) s.values[i] = dataset.at(d0 + i, cell.row, cell.col);
  } else {
    const BilinearWeights w = bilinear_weights(dataset, point);
    for (std::size_t i = 0; i < n; ++i) s.values[i] = bilinear_at(dataset, d0 + i, w);
  }
  return s;
}

// ---- displacement --------------------------------------------------------

Displacement displace(const Coordinate& point, std::uint64_t seed, const DisplacementRule& rule) {
  Rng rng(derive_seed(seed, "displace"));
  Displacement out;
  double radius = rule.urban_km;
  if (!point.urban) {
    out.extended = rng.uniform() < rule.extended_probability;
    radius = out.extended ? rule.rural_extended_km : rule.rural_km;
  }
  // sqrt of a uniform makes the point uniform over the disk.
  out.distance_km = radius * std::sqrt(rng.uniform());
  out.bearing_rad = 2.0 * std::numbers::pi * rng.uniform();
  const double north_km = out.distance_km * std::cos(out.bearing_rad);
  const double east_km = out.distance_km * std::sin(out.bearing_rad);
  const double coslat = std::max(std::cos(point.lat * std::numbers::pi / 180.0), 1e-6);
  out.point = point;
  out.point.lat = std::clamp(point.lat + north_km / kKmPerDegreeLat, -90.0, 90.0);
  double lon = point.lon + east_km / (kKmPerDegreeLat * coslat);
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  out.point.lon = lon;
  return out;
}

Coordinate displace_coordinate(const Coordinate& point, std::uint64_t seed) { return displace(point, seed).point; }

double great_circle_km(const Coordinate& a, const Coordinate& b) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// ---- files ---------------------------------------------------------------

namespace {

void write_f32(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  } else {
    for (float v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) fail(ErrorKind::io, "cannot stat " + path.string());
  if (size != expected * 4) {
    fail(ErrorKind::data, path.string() + ": expected " + std::to_string(expected * 4) + " bytes, found " +
                              std::to_string(size));
  }
  std::vector<float> values(expected);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected * 4));
  if (!in) fail(ErrorKind::io, "short read from " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
      v = std::bit_cast<float>(bits);
    }
  }
  return values;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string strip_suffix(const std::string& name, std::string_view suffix) {
  if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return name.substr(0, name.size() - suffix.size());
  }
  fail(ErrorKind::config, "expected a '" + std::string(suffix) + "' file, got " + name);
}

template <typename T>
T field(const json& j, const char* key, const fs::path& src) {
  if (!j.contains(key)) fail(ErrorKind::data, src.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::data, src.string() + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

void write_grid(const GridDataset& dataset, const fs::path& dir, const std::string& name) {
  dataset.validate();
  fs::create_directories(dir);
  json h = json::object();
  h["format"] = "eob-grid";
  h["format_version"] = 1;
  h["byte_order"] = "little";
  h["dtype"] = "float32";
  h["product_id"] = dataset.product_id;
  h["variable"] = to_string(dataset.variable);
  h["lat0"] = dataset.lat0;
  h["lon0"] = dataset.lon0;
  h["cell_size"] = dataset.cell_size;
  h["n_rows"] = dataset.n_rows;
  h["n_cols"] = dataset.n_cols;
  h["start_date"] = format_date(dataset.start_date);
  h["n_days"] = dataset.n_days;
  h["input_units"] = to_string(dataset.input_units);
  h["aggregation"] = dataset.aggregation;
  h["data_file"] = name + ".f32";
  write_json(dir / (name + ".hdr.json"), h);
  write_f32(dir / (name + ".f32"), dataset.values);
}

GridDataset read_grid(const fs::path& header_path) {
  const json h = read_json(header_path);
  if (h.value("byte_order", "little") != "little") {
    fail(ErrorKind::data, header_path.string() + ": only little-endian grid stacks are supported");
  }
  GridDataset d;
  d.product_id = field<std::string>(h, "product_id", header_path);
  d.variable = parse_variable(field<std::string>(h, "variable", header_path));
  d.lat0 = field<double>(h, "lat0", header_path);
  d.lon0 = field<double>(h, "lon0", header_path);
  d.cell_size = field<double>(h, "cell_size", header_path);
  d.n_rows = field<std::size_t>(h, "n_rows", header_path);
  d.n_cols = field<std::size_t>(h, "n_cols", header_path);
  d.start_date = parse_date(field<std::string>(h, "start_date", header_path));
  d.n_days = field<std::size_t>(h, "n_days", header_path);
  d.input_units = parse_units(field<std::string>(h, "input_units", header_path));
  d.aggregation = h.value("aggregation", "");
  const std::string stem = strip_suffix(header_path.filename().string(), ".hdr.json");
  const std::string data_file = h.value("data_file", stem + ".f32");
  d.values = read_f32(header_path.parent_path() / data_file, d.n_days * d.n_rows * d.n_cols);
  d.validate();
  return d;
}

std::vector<fs::path> list_grids(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) fail(ErrorKind::dependency, "grid directory " + dir.string() + " does not exist");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 9 && name.ends_with(".hdr.json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<HouseholdLocation> read_coordinates(const fs::path& path) {
  const auto table = csv::Table::read(path);
  table.require_columns({"household_id", "lat", "lon", "urban"});
  const auto c_id = table.column("household_id"), c_lat = table.column("lat"), c_lon = table.column("lon"),
             c_urban = table.column("urban");
  std::vector<HouseholdLocation> out;
  std::string errors;
  for (const auto& rec : table.records()) {
    const auto lat = csv::parse_double(rec.fields[c_lat]);
    const auto lon = csv::parse_double(rec.fields[c_lon]);
    const auto urban = csv::parse_int(rec.fields[c_urban]);
    const std::string where = table.source() + ":" + std::to_string(rec.line) + ": ";
    if (rec.fields[c_id].empty()) {
      errors += where + "empty household_id\n";
    } else if (!lat || !lon || std::isnan(*lat) || std::isnan(*lon) || *lat < -90 || *lat > 90 || *lon < -180 ||
               *lon > 180) {
      errors += where + "invalid coordinate\n";
    } else if (!urban || (*urban != 0 && *urban != 1)) {
      errors += where + "urban must be 0 or 1\n";
    } else {
      out.push_back({rec.fields[c_id], Coordinate{*lat, *lon, *urban == 1}});
    }
  }
  if (!errors.empty()) fail(ErrorKind::data, errors);
  return out;
}

void write_coordinates(const fs::path& path, std::span<const HouseholdLocation> locations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "household_id,lat,lon,urban\n";
  for (const auto& h : locations) {
    out << csv::quote_if_needed(h.household_id) << ',' << csv::format_number(h.coord.lat) << ','
        << csv::format_number(h.coord.lon) << ',' << (h.coord.urban ? 1 : 0) << '\n';
  }
}

// ---- site stacks ---------------------------------------------------------

SiteSeries SiteStack::site(std::size_t household_index) const {
  SiteSeries s;
  s.household_id = household_ids.at(household_index);
  s.product_id = product_id;
  s.variable = variable;
  s.start_date = start_date;
  const auto v = series(series_of_household.at(household_index));
  s.values.assign(v.begin(), v.end());
  return s;
}

DateRange SiteStack::range() const {
  return DateRange{start_date, start_date + std::chrono::days(static_cast<long>(n_days) - 1)};
}

SiteStack extract_sites(const GridDataset& dataset, std::span<const HouseholdLocation> households,
                        Extraction method) {
  SiteStack stack;
  stack.product_id = dataset.product_id;
  stack.variable = dataset.variable;
  stack.start_date = dataset.start_date;
  stack.n_days = dataset.n_days;
  const DateRange full = dataset.coverage();
  std::map<std::pair<std::size_t, std::size_t>, std::uint32_t> by_cell;
  for (const auto& h : households) {
    stack.household_ids.push_back(h.household_id);
    std::uint32_t s;
    if (method == Extraction::nearest) {
      const CellIndex cell = nearest_cell(dataset, h.coord);
      auto [it, inserted] = by_cell.try_emplace({cell.row, cell.col}, static_cast<std::uint32_t>(stack.n_series));
      s = it->second;
      if (inserted) {
        ++stack.n_series;
        stack.values.reserve(stack.n_series * stack.n_days);
        for (std::size_t day = 0; day < dataset.n_days; ++day) stack.values.push_back(dataset.at(day, cell.row, cell.col));
      }
    } else {
      const SiteSeries one = extract_site(dataset, h.coord, full, method, h.household_id);
      s = static_cast<std::uint32_t>(stack.n_series++);
      stack.values.insert(stack.values.end(), one.values.begin(), one.values.end());
    }
    stack.series_of_household.push_back(s);
  }
  return stack;
}

void write_site_stack(const SiteStack& stack, const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  json h = json::object();
  h["format"] = "eob-sites";
  h["format_version"] = 1;
  h["byte_order"] = "little";
  h["product_id"] = stack.product_id;
  h["variable"] = to_string(stack.variable);
  h["start_date"] = format_date(stack.start_date);
  h["n_days"] = stack.n_days;
  h["n_series"] = stack.n_series;
  h["household_ids"] = stack.household_ids;
  h["series_of_household"] = stack.series_of_household;
  h["data_file"] = name + ".sites.f32";
  write_json(dir / (name + ".sites.json"), h);
  write_f32(dir / (name + ".sites.f32"), stack.values);
}

SiteStack read_site_stack(const fs::path& header_path) {
  const json h = read_json(header_path);
  SiteStack s;
  s.product_id = field<std::string>(h, "product_id", header_path);
  s.variable = parse_variable(field<std::string>(h, "variable", header_path));
  s.start_date = parse_date(field<std::string>(h, "start_date", header_path));
  s.n_days = field<std::size_t>(h, "n_days", header_path);
  s.n_series = field<std::size_t>(h, "n_series", header_path);
  s.household_ids = field<std::vector<std::string>>(h, "household_ids", header_path);
  s.series_of_household = field<std::vector<std::uint32_t>>(h, "series_of_household", header_path);
  if (s.household_ids.size() != s.series_of_household.size()) {
    fail(ErrorKind::data, header_path.string() + ": household index length mismatch");
  }
  for (auto idx : s.series_of_household) {
    if (idx >= s.n_series) fail(ErrorKind::data, header_path.string() + ": series index out of range");
  }
  const std::string stem = strip_suffix(header_path.filename().string(), ".sites.json");
  s.values = read_f32(header_path.parent_path() / h.value("data_file", stem + ".sites.f32"), s.n_series * s.n_days);
  return s;
}

}  // namespace eob
