#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eob/robustness_harness.hpp"
#include "eob/weather_metrics.hpp"

namespace eob {

inline constexpr double kDefaultAlpha = 0.05;

// Fraction of p-values strictly below each level. Empty input gives NaN.
std::vector<double> significance_shares(std::span<const double> p_values, std::span<const double> levels);
double mean_loglik(std::span<const double> logliks);

struct HeuristicGroup {
  std::string product;
  MetricId metric = MetricId::mean;
  Model model = Model::weather_only;
  bool quadratic = false;

  auto operator<=>(const HeuristicGroup&) const = default;
};

struct HeuristicRow {
  HeuristicGroup group;
  std::size_t n_ok = 0;
  // Failed specs are not part of the share denominator.
  std::size_t n_failed = 0;
  std::vector<double> shares;
  double mean_loglik = 0.0;
};

struct HeuristicTable {
  std::vector<double> levels;
  std::vector<HeuristicRow> rows;
  std::vector<std::string> warnings;
};

// Grouped by (product, metric, model, quadratic) in key order.
HeuristicTable heuristics(std::span<const SpecOutcome> results, std::vector<double> levels = {0.01, 0.05, 0.10});
void write_heuristics_csv(const HeuristicTable& table, const std::filesystem::path& path);

enum class SigClass { neg_sig, insig, pos_sig };
std::string_view to_string(SigClass c);
SigClass classify(double beta, double p_value, double alpha = kDefaultAlpha);

struct SpecChartCell {
  std::string spec_id;
  double beta1 = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  Model model = Model::weather_only;
  Outcome outcome = Outcome::farm_value;
  std::string product;
  SigClass sig_class = SigClass::insig;
  // 0-based position inside its model region.
  std::size_t position = 0;
};

struct SpecChart {
  std::string country;
  MetricId metric = MetricId::mean;
  double alpha = kDefaultAlpha;
  bool blinded = false;
  // Model regions in M1, M2, M3 order; ascending beta inside each.
  std::vector<SpecChartCell> cells;
  std::size_t n_failed = 0;
  std::vector<std::string> warnings;
};

// Linear specs only. Sorting is stable so equal betas keep spec-id order.
SpecChart spec_chart(std::span<const SpecOutcome> results, const std::string& country, MetricId metric,
                     double alpha = kDefaultAlpha);
nlohmann::ordered_json to_json(const SpecChart& chart);

struct RankColumn {
  Model model = Model::weather_only;
  Outcome outcome = Outcome::farm_value;
  // Some product of the chart has no successful estimate in this column.
  bool partial = false;
  std::map<std::string, double> beta;
  std::map<std::string, std::size_t> rank;
};

struct Bumpline {
  std::string country;
  MetricId metric = MetricId::mean;
  bool absolute = false;
  bool blinded = false;
  std::vector<std::string> products;
  std::vector<RankColumn> columns;
};

// Rank 1 = largest coefficient (signed unless `absolute`); ties go to the
// lexicographically smaller product label.
std::map<std::string, std::size_t> rank_products(const std::map<std::string, double>& beta, bool absolute = false);
Bumpline bumpline(std::span<const SpecOutcome> results, const std::string& country, MetricId metric,
                  bool absolute = false);
nlohmann::ordered_json to_json(const Bumpline& b);

// Per-year cross-household mean with a normal 95% interval.
struct DescriptiveRow {
  std::string country;
  std::string product;
  int season_year = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

std::vector<DescriptiveRow> descriptives(std::span<const MetricVector> metrics, MetricId metric);
void write_descriptives_csv(std::span<const DescriptiveRow> rows, const std::filesystem::path& path);

}  // namespace eob
