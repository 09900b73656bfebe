#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eob/dates.hpp"
#include "eob/grid_store.hpp"
#include "eob/season_calendar.hpp"

namespace eob {

// The 14 rainfall and 8 temperature seasonal metrics.
enum class MetricId : std::uint8_t {
  mean,
  median,
  variance,
  skew,
  total,
  dev_total,
  z_total,
  rain_days,
  dev_rain_days,
  no_rain_days,
  dev_no_rain_days,
  share_rain_days,
  dev_share_rain_days,
  max_dry_spell,
  t_mean,
  t_median,
  t_variance,
  t_skew,
  gdd,
  dev_gdd,
  z_gdd,
  mean_tmax,
};

inline constexpr std::size_t kMetricCount = 22;
inline constexpr std::size_t kRainfallMetricCount = 14;

std::string_view to_string(MetricId id);
MetricId parse_metric(std::string_view name);
bool is_rainfall_metric(MetricId id);
std::span<const MetricId> all_metrics();
std::span<const MetricId> rainfall_metrics_list();
std::span<const MetricId> temperature_metrics_list();

enum class GddMode { accumulate, count_days_in_bound };

struct MetricOptions {
  double rain_threshold_mm = 1.0;     // rain day iff value >= threshold
  double gdd_base_c = 10.0;
  double gdd_upper_c = 30.0;
  GddMode gdd_mode = GddMode::accumulate;
  double max_missing_fraction = 0.05;  // slices above this are excluded
  bool missing_as_dry = false;         // NaN days count as 0 mm instead of being dropped
  Date long_run_start = make_date(1983, 1, 1);
};

// Sample moments: variance with n-1 denominator, Fisher-Pearson g1 skew
// (population central moments), skew 0 for a constant series.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double variance = 0.0;
  double skew = 0.0;
};

Moments sample_moments(std::span<const double> values);

// Date-free seasonal statistics before any long-run comparison.
struct RainfallSeason {
  int label_year = 0;
  Date start{};
  std::size_t length = 0;  // days entering counts and shares
  std::size_t missing = 0;
  Moments moments;
  double total = 0.0;
  std::size_t rain_days = 0;
  std::size_t no_rain_days = 0;
  double share_rain_days = 0.0;
  std::size_t max_dry_spell = 0;
};

struct TemperatureSeason {
  int label_year = 0;
  Date start{};
  std::size_t length = 0;
  Moments moments;
  double gdd = 0.0;
  double mean_tmax = std::numeric_limits<double>::quiet_NaN();
};

RainfallSeason summarize_rainfall(const SeasonSlice& slice, const MetricOptions& options = {});
// slice_max may be empty (no max channel), in which case mean_tmax is NaN.
TemperatureSeason summarize_temperature(const SeasonSlice& slice_mean, const SeasonSlice* slice_max,
                                        const MetricOptions& options = {});

// Degree-day contribution of one day.
double degree_days(double t_mean, const MetricOptions& options);

struct Climatology {
  std::string household_id;
  std::string product_id;
  MetricId metric = MetricId::total;
  double long_run_mean = 0.0;
  double long_run_sd = 0.0;
  std::size_t n_seasons = 0;

  bool degenerate() const { return !(long_run_sd > 0.0); }
  double deviation(double value) const { return value - long_run_mean; }
  // NaN when the long-run sd is zero.
  double z_score(double value) const;
};

struct SeasonValue {
  Date start{};
  double value = 0.0;
};

// Sample mean and sd (n-1) over the seasons starting on or after
// options.long_run_start. Fewer than two such seasons is a climatology error.
Climatology build_climatology(std::span<const SeasonValue> seasons, MetricId metric, const MetricOptions& options = {},
                              std::string household_id = {}, std::string product_id = {});

// Long-run statistics for the metrics that have deviation forms: total,
// rain_days, no_rain_days, share_rain_days, gdd.
struct ClimatologySet {
  std::map<MetricId, Climatology> by_metric;

  const Climatology* find(MetricId id) const;
  void add(Climatology c) { by_metric.insert_or_assign(c.metric, std::move(c)); }
};

ClimatologySet rainfall_climatology(std::span<const RainfallSeason> seasons, const MetricOptions& options = {});
ClimatologySet temperature_climatology(std::span<const TemperatureSeason> seasons, const MetricOptions& options = {});

struct MetricVector {
  std::string household_id;
  std::string product_id;
  std::string country_id;
  int season_label_year = 0;
  std::array<double, kMetricCount> values;

  MetricVector() { values.fill(std::numeric_limits<double>::quiet_NaN()); }
  double operator[](MetricId id) const { return values[static_cast<std::size_t>(id)]; }
  double& operator[](MetricId id) { return values[static_cast<std::size_t>(id)]; }
};

// Fill the rainfall (resp. temperature) entries of `out` from a season
// summary and the household-product climatology. Deviations without a
// usable climatology stay NaN.
void apply_rainfall(const RainfallSeason& season, const ClimatologySet& clim, MetricVector& out);
void apply_temperature(const TemperatureSeason& season, const ClimatologySet& clim, MetricVector& out);

MetricVector rainfall_metrics(const SeasonSlice& slice, const ClimatologySet& clim, const MetricOptions& options = {});
MetricVector temperature_metrics(const SeasonSlice& slice_mean, const SeasonSlice& slice_max,
                                 const ClimatologySet& clim, const MetricOptions& options = {});

// All seasons for one household and product. Any of the series may be
// absent; the corresponding entries stay NaN. Seasons rejected for missing
// data, and climatologies that cannot be formed, are reported in `notes`.
struct SiteMetricInput {
  std::span<const float> precip;
  std::span<const float> temp_mean;
  std::span<const float> temp_max;
  Date precip_start{};
  Date temp_start{};
};

std::vector<MetricVector> compute_site_metrics(const SiteMetricInput& input, const SeasonWindow& window,
                                               std::size_t region, const MetricOptions& options,
                                               std::vector<std::string>* notes = nullptr);

struct HouseholdSite {
  std::string household_id;
  std::string country_id;
  Coordinate coord;
};

// Stacks of one product; any may be null. All non-null stacks must list the
// households in the same order.
struct StackMetricInput {
  const SiteStack* precip = nullptr;
  const SiteStack* temp_mean = nullptr;
  const SiteStack* temp_max = nullptr;
};

// Metrics for every household (ordered by household, then season year).
// `keep` filters (country, season label year); null keeps all seasons.
// Households sharing all series and the same season window are computed once.
std::vector<MetricVector> compute_stack_metrics(const StackMetricInput& input, std::span<const HouseholdSite> sites,
                                                const CalendarSet& calendars, const MetricOptions& options,
                                                const std::function<bool(const std::string&, int)>& keep = {},
                                                std::vector<std::string>* notes = nullptr, std::size_t workers = 1);

}  // namespace eob
