#include "eob/weather_metrics.hpp"

#include <atomic>
#include <thread>
#include <tuple>
#include <unordered_map>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eob/error.hpp"

namespace eob {

namespace {

constexpr std::array<std::string_view, kMetricCount> kNames{
    "mean",         "median",         "variance",        "skew",           "total",
    "dev_total",    "z_total",        "rain_days",       "dev_rain_days",  "no_rain_days",
    "dev_no_rain_days", "share_rain_days", "dev_share_rain_days", "max_dry_spell", "t_mean",
    "t_median",     "t_variance",     "t_skew",          "gdd",            "dev_gdd",
    "z_gdd",        "mean_tmax",
};

constexpr std::array<MetricId, kMetricCount> kAll = [] {
  std::array<MetricId, kMetricCount> a{};
  for (std::size_t i = 0; i < kMetricCount; ++i) a[i] = static_cast<MetricId>(i);
  return a;
}();

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view to_string(MetricId id) { return kNames[static_cast<std::size_t>(id)]; }

MetricId parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    if (kNames[i] == name) return static_cast<MetricId>(i);
  }
  fail(ErrorKind::config, "unknown metric '" + std::string(name) + "'");
}

bool is_rainfall_metric(MetricId id) { return static_cast<std::size_t>(id) < kRainfallMetricCount; }

std::span<const MetricId> all_metrics() { return kAll; }
std::span<const MetricId> rainfall_metrics_list() { return std::span(kAll).first(kRainfallMetricCount); }
std::span<const MetricId> temperature_metrics_list() { return std::span(kAll).subspan(kRainfallMetricCount); }

Moments sample_moments(std::span<const double> values) {
  Moments m;
  m.n = values.size();
  if (m.n == 0) fail(ErrorKind::metric, "moments of an empty series");
  const double n = static_cast<double>(m.n);

  // Extended accumulators: the third central moment of a near-symmetric
  // season cancels badly in double.
  long double sum = 0.0L;
  for (double v : values) sum += v;
  const long double mean = sum / static_cast<long double>(m.n);
  m.mean = static_cast<double>(mean);

  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t mid = m.n / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  m.median = sorted[mid];
  if (m.n % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
    m.median = 0.5 * (lower + m.median);
  }

  const bool constant = std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); });
  if (constant) {
    m.mean = values.front();
    return m;
  }
  long double s2 = 0.0L, s3 = 0.0L;
  for (double v : values) {
    const long double d = v - mean;
    s2 += d * d;
    s3 += d * d * d;
  }
  m.variance = m.n > 1 ? static_cast<double>(s2 / (n - 1.0)) : 0.0;
  const long double m2 = s2 / n;
  const long double m3 = s3 / n;
  m.skew = m2 > 0.0L ? static_cast<double>(m3 / (m2 * std::sqrt(m2))) : 0.0;
  return m;
}

namespace {

std::string describe(const SeasonSlice& s) {
  std::ostringstream o;
  o << "season " << s.season_label_year << " (" << format_date(s.start_date) << ", household '" << s.household_id
    << "', product '" << s.product_id << "')";
  return o.str();
}

void check_missing(const SeasonSlice& slice, std::size_t missing, const MetricOptions& options) {
  if (slice.values.empty()) fail(ErrorKind::metric, describe(slice) + ": empty slice");
  if (missing == slice.values.size()) fail(ErrorKind::metric, describe(slice) + ": all days missing");
  const double frac = static_cast<double>(missing) / static_cast<double>(slice.values.size());
  if (frac > options.max_missing_fraction) {
    std::ostringstream o;
    o << describe(slice) << ": " << missing << " of " << slice.values.size() << " days missing exceeds tolerance "
      << options.max_missing_fraction;
    fail(ErrorKind::metric, o.str());
  }
}

}  // namespace

RainfallSeason summarize_rainfall(const SeasonSlice& slice, const MetricOptions& options) {
  RainfallSeason r;
  r.label_year = slice.season_label_year;
  r.start = slice.start_date;
  r.missing = static_cast<std::size_t>(std::count_if(slice.values.begin(), slice.values.end(),
                                                     [](float v) { return std::isnan(v); }));
  check_missing(slice, r.missing, options);

  std::vector<double> days;
  days.reserve(slice.values.size());
  std::size_t run = 0;
  for (float raw : slice.values) {
    double v = raw;
    if (std::isnan(raw)) {
      if (!options.missing_as_dry) continue;  // skipped days neither extend nor break a dry run
      v = 0.0;
    }
    days.push_back(v);
    if (v >= options.rain_threshold_mm) {
      ++r.rain_days;
      run = 0;
    } else {
      ++r.no_rain_days;
      r.max_dry_spell = std::max(r.max_dry_spell, ++run);
    }
  }
  r.length = days.size();
  r.moments = sample_moments(days);
  for (double v : days) r.total += v;
  r.share_rain_days = static_cast<double>(r.rain_days) / static_cast<double>(r.length);
  return r;
}

double degree_days(double t_mean, const MetricOptions& options) {
  if (options.gdd_mode == GddMode::count_days_in_bound) {
    return (t_mean >= options.gdd_base_c && t_mean <= options.gdd_upper_c) ? 1.0 : 0.0;
  }
  return std::max(0.0, std::min(t_mean, options.gdd_upper_c) - options.gdd_base_c);
}

TemperatureSeason summarize_temperature(const SeasonSlice& slice_mean, const SeasonSlice* slice_max,
                                        const MetricOptions& options) {
  if (slice_max != nullptr && (slice_max->start_date != slice_mean.start_date ||
                               slice_max->values.size() != slice_mean.values.size())) {
    fail(ErrorKind::alignment, describe(slice_mean) + ": mean and max temperature slices cover different dates");
  }
  TemperatureSeason t;
  t.label_year = slice_mean.season_label_year;
  t.start = slice_mean.start_date;
  const auto missing = static_cast<std::size_t>(std::count_if(slice_mean.values.begin(), slice_mean.values.end(),
                                                              [](float v) { return std::isnan(v); }));
  check_missing(slice_mean, missing, options);
  std::vector<double> days;
  days.reserve(slice_mean.values.size());
  for (float v : slice_mean.values) {
    if (std::isnan(v)) continue;
    days.push_back(v);
    t.gdd += degree_days(v, options);
  }
  t.length = days.size();
  t.moments = sample_moments(days);
  if (slice_max != nullptr) {
    double sum = 0.0;
    std::size_t n = 0;
    for (float v : slice_max->values) {
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    const std::size_t max_missing = slice_max->values.size() - n;
    if (n > 0 && static_cast<double>(max_missing) <= options.max_missing_fraction * static_cast<double>(slice_max->values.size())) {
      t.mean_tmax = sum / static_cast<double>(n);
    }
  }
  return t;
}

double Climatology::z_score(double value) const {
  if (degenerate()) return kNaN;
  return (value - long_run_mean) / long_run_sd;
}

Climatology build_climatology(std::span<const SeasonValue> seasons, MetricId metric, const MetricOptions& options,
                              std::string household_id, std::string product_id) {
  Climatology c;
  c.household_id = std::move(household_id);
  c.product_id = std::move(product_id);
  c.metric = metric;
  std::vector<double> vals;
  for (const auto& s : seasons) {
    if (s.start >= options.long_run_start && !std::isnan(s.value)) vals.push_back(s.value);
  }
  c.n_seasons = vals.size();
  if (vals.size() < 2) {
    fail(ErrorKind::climatology, "long-run " + std::string(to_string(metric)) + " for household '" + c.household_id +
                                     "', product '" + c.product_id + "' needs >= 2 seasons from " +
                                     format_date(options.long_run_start) + ", found " + std::to_string(vals.size()));
  }
  const Moments m = sample_moments(vals);
  c.long_run_mean = m.mean;
  c.long_run_sd = std::sqrt(m.variance);
  return c;
}

const Climatology* ClimatologySet::find(MetricId id) const {
  auto it = by_metric.find(id);
  return it == by_metric.end() ? nullptr : &it->second;
}

namespace {

template <typename Season, typename Get>
void add_climatology(ClimatologySet& set, std::span<const Season> seasons, MetricId id, Get get,
                     const MetricOptions& options) {
  std::vector<SeasonValue> v;
  v.reserve(seasons.size());
  for (const auto& s : seasons) v.push_back({s.start, get(s)});
  set.add(build_climatology(v, id, options));
}

}  // namespace

ClimatologySet rainfall_climatology(std::span<const RainfallSeason> seasons, const MetricOptions& options) {
  ClimatologySet set;
  add_climatology(set, seasons, MetricId::total, [](const RainfallSeason& s) { return s.total; }, options);
  add_climatology(set, seasons, MetricId::rain_days,
                  [](const RainfallSeason& s) { return static_cast<double>(s.rain_days); }, options);
  add_climatology(set, seasons, MetricId::no_rain_days,
                  [](const RainfallSeason& s) { return static_cast<double>(s.no_rain_days); }, options);
  add_climatology(set, seasons, MetricId::share_rain_days, [](const RainfallSeason& s) { return s.share_rain_days; },
                  options);
  return set;
}

ClimatologySet temperature_climatology(std::span<const TemperatureSeason> seasons, const MetricOptions& options) {
  ClimatologySet set;
  add_climatology(set, seasons, MetricId::gdd, [](const TemperatureSeason& s) { return s.gdd; }, options);
  return set;
}

void apply_rainfall(const RainfallSeason& s, const ClimatologySet& clim, MetricVector& out) {
  out.season_label_year = s.label_year;
  out[MetricId::mean] = s.moments.mean;
  out[MetricId::median] = s.moments.median;
  out[MetricId::variance] = s.moments.variance;
  out[MetricId::skew] = s.moments.skew;
  out[MetricId::total] = s.total;
  out[MetricId::rain_days] = static_cast<double>(s.rain_days);
  out[MetricId::no_rain_days] = static_cast<double>(s.no_rain_days);
  out[MetricId::share_rain_days] = s.share_rain_days;
  out[MetricId::max_dry_spell] = static_cast<double>(s.max_dry_spell);
  if (const auto* c = clim.find(MetricId::total)) {
    out[MetricId::dev_total] = c->deviation(s.total);
    out[MetricId::z_total] = c->z_score(s.total);
  }
  if (const auto* c = clim.find(MetricId::rain_days)) {
    out[MetricId::dev_rain_days] = c->deviation(static_cast<double>(s.rain_days));
  }
  if (const auto* c = clim.find(MetricId::no_rain_days)) {
    out[MetricId::dev_no_rain_days] = c->deviation(static_cast<double>(s.no_rain_days));
  }
  if (const auto* c = clim.find(MetricId::share_rain_days)) {
    out[MetricId::dev_share_rain_days] = c->deviation(s.share_rain_days);
  }
}

void apply_temperature(const TemperatureSeason& s, const ClimatologySet& clim, MetricVector& out) {
  out.season_label_year = s.label_year;
  out[MetricId::t_mean] = s.moments.mean;
  out[MetricId::t_median] = s.moments.median;
  out[MetricId::t_variance] = s.moments.variance;
  out[MetricId::t_skew] = s.moments.skew;
  out[MetricId::gdd] = s.gdd;
  out[MetricId::mean_tmax] = s.mean_tmax;
  if (const auto* c = clim.find(MetricId::gdd)) {
    out[MetricId::dev_gdd] = c->deviation(s.gdd);
    out[MetricId::z_gdd] = c->z_score(s.gdd);
  }
}

MetricVector rainfall_metrics(const SeasonSlice& slice, const ClimatologySet& clim, const MetricOptions& options) {
  MetricVector mv;
  mv.household_id = slice.household_id;
  mv.product_id = slice.product_id;
  apply_rainfall(summarize_rainfall(slice, options), clim, mv);
  return mv;
}

MetricVector temperature_metrics(const SeasonSlice& slice_mean, const SeasonSlice& slice_max,
                                 const ClimatologySet& clim, const MetricOptions& options) {
  MetricVector mv;
  mv.household_id = slice_mean.household_id;
  mv.product_id = slice_mean.product_id;
  apply_temperature(summarize_temperature(slice_mean, &slice_max, options), clim, mv);
  return mv;
}

namespace {

SeasonSlice cut(std::span<const float> series, Date series_start, const SeasonDates& s) {
  SeasonSlice slice;
  slice.season_label_year = s.label_year;
  slice.start_date = s.range.first;
  slice.season_length_days = static_cast<std::size_t>(s.range.days());
  const auto offset = static_cast<std::size_t>((s.range.first - series_start).count());
  const auto part = series.subspan(offset, slice.season_length_days);
  slice.values.assign(part.begin(), part.end());
  return slice;
}

DateRange span_range(Date start, std::size_t n) {
  return DateRange{start, start + std::chrono::days(static_cast<long>(n) - 1)};
}

}  // namespace

std::vector<MetricVector> compute_site_metrics(const SiteMetricInput& input, const SeasonWindow& window,
                                               std::size_t region, const MetricOptions& options,
                                               std::vector<std::string>* notes) {
  auto note = [&](const std::string& msg) {
    if (notes) notes->push_back(msg);
  };
  std::map<int, MetricVector> by_year;

  if (!input.precip.empty()) {
    std::vector<RainfallSeason> seasons;
    for (const auto& sd : season_dates(span_range(input.precip_start, input.precip.size()), window, region)) {
      try {
        seasons.push_back(summarize_rainfall(cut(input.precip, input.precip_start, sd), options));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::metric) throw;
        note(e.what());
      }
    }
    ClimatologySet clim;
    try {
      clim = rainfall_climatology(seasons, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::climatology) throw;
      note(e.what());
    }
    for (const auto& s : seasons) apply_rainfall(s, clim, by_year[s.label_year]);
  }

  if (!input.temp_mean.empty()) {
    if (!input.temp_max.empty() && input.temp_max.size() != input.temp_mean.size()) {
      fail(ErrorKind::alignment, "mean and max temperature series differ in length");
    }
    std::vector<TemperatureSeason> seasons;
    for (const auto& sd : season_dates(span_range(input.temp_start, input.temp_mean.size()), window, region)) {
      try {
        const SeasonSlice mean = cut(input.temp_mean, input.temp_start, sd);
        if (input.temp_max.empty()) {
          seasons.push_back(summarize_temperature(mean, nullptr, options));
        } else {
          const SeasonSlice max = cut(input.temp_max, input.temp_start, sd);
          seasons.push_back(summarize_temperature(mean, &max, options));
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::metric) throw;
        note(e.what());
      }
    }
    ClimatologySet clim;
    try {
      clim = temperature_climatology(seasons, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::climatology) throw;
      note(e.what());
    }
    for (const auto& s : seasons) apply_temperature(s, clim, by_year[s.label_year]);
  }

  std::vector<MetricVector> out;
  out.reserve(by_year.size());
  for (auto& [year, mv] : by_year) {
    mv.season_label_year = year;
    out.push_back(std::move(mv));
  }
  return out;
}

}  // namespace eob

namespace eob {

std::vector<MetricVector> compute_stack_metrics(const StackMetricInput& input, std::span<const HouseholdSite> sites,
                                                const CalendarSet& calendars, const MetricOptions& options,
                                                const std::function<bool(const std::string&, int)>& keep,
                                                std::vector<std::string>* notes, std::size_t workers) {
  const std::array<const SiteStack*, 3> stacks{input.precip, input.temp_mean, input.temp_max};
  std::string product;
  std::array<std::unordered_map<std::string, std::size_t>, 3> row_of;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!stacks[k]) continue;
    if (product.empty()) product = stacks[k]->product_id;
    if (stacks[k]->product_id != product) {
      fail(ErrorKind::alignment, "site stacks mix products " + product + " and " + stacks[k]->product_id);
    }
    for (std::size_t i = 0; i < stacks[k]->household_ids.size(); ++i) row_of[k].emplace(stacks[k]->household_ids[i], i);
  }
  if (product.empty()) fail(ErrorKind::dependency, "no site stacks supplied");
  if (input.temp_max && !input.temp_mean) fail(ErrorKind::alignment, "maximum temperature without mean temperature");

  // One job per distinct (country, region, series) combination.
  struct Job {
    SeasonWindow window;
    std::size_t region = 0;
    std::array<long, 3> series{-1, -1, -1};
    std::string first_household;
    std::vector<MetricVector> out;
    std::vector<std::string> notes;
  };
  std::vector<Job> jobs;
  std::map<std::tuple<std::string, std::size_t, long, long, long>, std::size_t> job_of;
  std::vector<std::size_t> site_job(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& s = sites[i];
    const SeasonWindow& window = calendars.window(s.country_id);
    const std::size_t region = resolve_region(window, s.coord);
    std::array<long, 3> series{-1, -1, -1};
    for (std::size_t k = 0; k < 3; ++k) {
      if (!stacks[k]) continue;
      auto it = row_of[k].find(s.household_id);
      if (it == row_of[k].end()) {
        fail(ErrorKind::alignment, "household " + s.household_id + " missing from " + product + " " +
                                       std::string(to_string(stacks[k]->variable)) + " stack");
      }
      series[k] = static_cast<long>(stacks[k]->series_of_household[it->second]);
    }
    auto key = std::make_tuple(s.country_id, region, series[0], series[1], series[2]);
    auto [it, inserted] = job_of.emplace(key, jobs.size());
    if (inserted) jobs.push_back(Job{window, region, series, s.household_id, {}, {}});
    site_job[i] = it->second;
  }

  auto span_of = [&](std::size_t k, long series) -> std::span<const float> {
    if (!stacks[k] || series < 0) return {};
    return stacks[k]->series(static_cast<std::size_t>(series));
  };
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      Job& job = jobs[j];
      SiteMetricInput in;
      in.precip = span_of(0, job.series[0]);
      in.temp_mean = span_of(1, job.series[1]);
      in.temp_max = span_of(2, job.series[2]);
      if (input.precip) in.precip_start = input.precip->start_date;
      if (input.temp_mean) in.temp_start = input.temp_mean->start_date;
      if (input.temp_max && input.temp_mean && input.temp_max->start_date != input.temp_mean->start_date) {
        job.notes.push_back("maximum and mean temperature stacks start on different days");
        in.temp_max = {};
      }
      std::vector<std::string> raw;
      job.out = compute_site_metrics(in, job.window, job.region, options, &raw);
      for (auto& n : raw) job.notes.push_back(product + " site " + job.first_household + ": " + n);
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, jobs.size()));
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(work);
  }

  std::vector<MetricVector> out;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (const auto& mv : jobs[site_job[i]].out) {
      if (keep && !keep(sites[i].country_id, mv.season_label_year)) continue;
      MetricVector v = mv;
      v.household_id = sites[i].household_id;
      v.product_id = product;
      v.country_id = sites[i].country_id;
      out.push_back(std::move(v));
    }
  }
  if (notes) {
    for (const auto& job : jobs) notes->insert(notes->end(), job.notes.begin(), job.notes.end());
  }
  return out;
}

}  // namespace eob
