#include "eob/panel.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "eob/csv.hpp"
#include "eob/error.hpp"

namespace eob {

namespace {

const std::vector<std::string> kColumns{"household_id", "country",       "year",      "outcome_value_usd_ha",
                                        "outcome_yield_kg_ha", "fert_kg_ha", "labor_days_ha", "pesticide",
                                        "herbicide",    "irrigation"};

}  // namespace

std::vector<PanelRow> read_panel(const std::filesystem::path& path) {
  const auto t = csv::Table::read(path);
  t.require_columns(kColumns);
  std::vector<std::size_t> col;
  for (const auto& c : kColumns) col.push_back(t.column(c));

  std::vector<PanelRow> rows;
  rows.reserve(t.records().size());
  std::string errors;
  std::size_t n_errors = 0;
  for (const auto& rec : t.records()) {
    const std::string where = t.source() + ":" + std::to_string(rec.line) + ": ";
    std::string problem;
    PanelRow r;
    r.household_id = rec.fields[col[0]];
    r.country_id = rec.fields[col[1]];
    if (r.household_id.empty()) problem = "empty household_id";
    if (r.country_id.empty()) problem = "empty country";
    const auto year = csv::parse_int(rec.fields[col[2]]);
    if (!year) problem = "bad year '" + rec.fields[col[2]] + "'";
    else r.year = static_cast<int>(*year);

    double* targets[] = {&r.outcome_value_usd_ha, &r.outcome_yield_kg_ha, &r.fert_kg_ha, &r.labor_days_ha,
                         &r.pesticide, &r.herbicide, &r.irrigation};
    for (std::size_t k = 0; k < 7 && problem.empty(); ++k) {
      const auto& text = rec.fields[col[3 + k]];
      const auto v = csv::parse_double(text);
      if (!v || std::isinf(*v)) {
        problem = "bad " + kColumns[3 + k] + " '" + text + "'";
      } else if (*v < 0.0) {
        problem = kColumns[3 + k] + " must be nonnegative";
      } else if (k >= 4 && !std::isnan(*v) && *v != 0.0 && *v != 1.0) {
        problem = kColumns[3 + k] + " must be 0 or 1";
      } else {
        *targets[k] = *v;
      }
    }
    if (!problem.empty()) {
      if (++n_errors <= 50) errors += where + problem + "\n";
      continue;
    }
    rows.push_back(std::move(r));
  }
  if (n_errors > 0) {
    if (n_errors > 50) errors += "... " + std::to_string(n_errors - 50) + " more\n";
    fail(ErrorKind::data, errors);
  }
  return rows;
}

void write_panel(const std::filesystem::path& path, std::span<const PanelRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
  out << '\n';
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.household_id) << ',' << csv::quote_if_needed(r.country_id) << ',' << r.year;
    for (double v : {r.outcome_value_usd_ha, r.outcome_yield_kg_ha, r.fert_kg_ha, r.labor_days_ha, r.pesticide,
                     r.herbicide, r.irrigation}) {
      out << ',';
      csv::write_number(out, v);
    }
    out << '\n';
  }
}

namespace {

SummaryStat summarize(std::string name, const std::vector<double>& v) {
  SummaryStat s;
  s.name = std::move(name);
  double sum = 0.0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    sum += x;
    ++s.n;
  }
  if (s.n == 0) {
    s.mean = s.sd = PanelRow::kMissing;
    return s;
  }
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) {
    s.sd = PanelRow::kMissing;
    return s;
  }
  double ss = 0.0;
  for (double x : v) {
    if (!std::isnan(x)) ss += (x - s.mean) * (x - s.mean);
  }
  s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

}  // namespace

std::vector<PanelSummaryRow> panel_summary(std::span<const PanelRow> rows) {
  std::map<std::string, std::vector<const PanelRow*>> by_country;
  for (const auto& r : rows) by_country[r.country_id].push_back(&r);

  std::vector<PanelSummaryRow> out;
  for (const auto& [country, members] : by_country) {
    for (const bool farm : {true, false}) {
      std::vector<const PanelRow*> block;
      for (const auto* r : members) {
        if (!std::isnan(farm ? r->outcome_value_usd_ha : r->outcome_yield_kg_ha)) block.push_back(r);
      }
      if (block.empty()) continue;
      PanelSummaryRow row;
      row.country_id = country;
      row.block = farm ? "farm" : "primary_crop";
      row.n_obs = block.size();
      std::set<std::string> households;
      std::vector<double> outcome, fert, labor, pest, herb, irr;
      for (const auto* r : block) {
        households.insert(r->household_id);
        outcome.push_back(farm ? r->outcome_value_usd_ha : r->outcome_yield_kg_ha);
        fert.push_back(r->fert_kg_ha);
        labor.push_back(r->labor_days_ha);
        pest.push_back(r->pesticide);
        herb.push_back(r->herbicide);
        irr.push_back(r->irrigation);
      }
      row.n_households = households.size();
      row.stats = {summarize(farm ? "outcome_value_usd_ha" : "outcome_yield_kg_ha", outcome),
                   summarize("fert_kg_ha", fert),
                   summarize("labor_days_ha", labor),
                   summarize("pesticide", pest),
                   summarize("herbicide", herb),
                   summarize("irrigation", irr)};
      out.push_back(std::move(row));
    }
  }
  return out;
}

void write_panel_summary(const std::filesystem::path& path, std::span<const PanelSummaryRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "country,panel,n_obs,n_households,outcome_mean,outcome_sd,fert_kg_ha_mean,fert_kg_ha_sd,"
         "labor_days_ha_mean,labor_days_ha_sd,pesticide_mean,pesticide_sd,herbicide_mean,herbicide_sd,"
         "irrigation_mean,irrigation_sd\n";
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.country_id) << ',' << r.block << ',' << r.n_obs << ',' << r.n_households;
    for (const auto& s : r.stats) {
      out << ',';
      csv::write_number(out, s.mean);
      out << ',';
      csv::write_number(out, s.sd);
    }
    out << '\n';
  }
}

}  // namespace eob
