#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace eob {

// One household-year survey record. Missing numeric fields are NaN.
struct PanelRow {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

  std::string household_id;
  std::string country_id;
  int year = 0;
  double outcome_value_usd_ha = kMissing;  // 2015 USD per hectare
  double outcome_yield_kg_ha = kMissing;
  double fert_kg_ha = kMissing;
  double labor_days_ha = kMissing;
  double pesticide = kMissing;   // {0, 1}
  double herbicide = kMissing;   // {0, 1}
  double irrigation = kMissing;  // {0, 1}
};

// household_id,country,year,outcome_value_usd_ha,outcome_yield_kg_ha,
// fert_kg_ha,labor_days_ha,pesticide,herbicide,irrigation
// Every malformed row is reported, with its line number, in one data error.
std::vector<PanelRow> read_panel(const std::filesystem::path& path);
void write_panel(const std::filesystem::path& path, std::span<const PanelRow> rows);

// Summary-statistics layout: per country, one block for total farm
// production and one for the primary crop.
struct SummaryStat {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;  // sample sd; NaN for fewer than two values
  std::size_t n = 0;
};

struct PanelSummaryRow {
  std::string country_id;
  std::string block;  // "farm" or "primary_crop"
  std::size_t n_obs = 0;
  std::size_t n_households = 0;
  std::vector<SummaryStat> stats;
};

std::vector<PanelSummaryRow> panel_summary(std::span<const PanelRow> rows);
void write_panel_summary(const std::filesystem::path& path, std::span<const PanelSummaryRow> rows);

}  // namespace eob
