#include "eob/inference_heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "eob/csv.hpp"

namespace eob {

using nlohmann::ordered_json;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  return out;
}

ordered_json number_or_null(double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); }
}  // namespace

std::vector<double> significance_shares(std::span<const double> p_values, std::span<const double> levels) {
  std::vector<double> shares(levels.size(), kNaN);
  if (p_values.empty()) return shares;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto hits = std::count_if(p_values.begin(), p_values.end(), [&](double p) { return p < levels[l]; });
    shares[l] = static_cast<double>(hits) / static_cast<double>(p_values.size());
  }
  return shares;
}

double mean_loglik(std::span<const double> logliks) {
  if (logliks.empty()) return kNaN;
  double s = 0.0;
  for (double x : logliks) s += x;
  return s / static_cast<double>(logliks.size());
}

HeuristicTable heuristics(std::span<const SpecOutcome> results, std::vector<double> levels) {
  if (!std::is_sorted(levels.begin(), levels.end())) fail(ErrorKind::config, "significance levels must ascend");
  struct Acc {
    std::vector<double> p, ll;
    std::size_t failed = 0;
  };
  std::map<HeuristicGroup, Acc> groups;
  for (const auto& r : results) {
    Acc& a = groups[{r.spec.product_id, r.spec.metric, r.spec.model, r.spec.quadratic}];
    if (r.ok()) {
      a.p.push_back(r.result->p_value);
      a.ll.push_back(r.result->loglik);
    } else {
      ++a.failed;
    }
  }
  HeuristicTable t;
  t.levels = std::move(levels);
  for (const auto& [g, a] : groups) {
    if (a.p.empty()) {
      t.warnings.push_back("group " + g.product + "/" + std::string(to_string(g.metric)) + "/" +
                           std::string(to_string(g.model)) + " has no successful specs; omitted");
      continue;
    }
    HeuristicRow row;
    row.group = g;
    row.n_ok = a.p.size();
    row.n_failed = a.failed;
    row.shares = significance_shares(a.p, t.levels);
    row.mean_loglik = mean_loglik(a.ll);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_heuristics_csv(const HeuristicTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "product,metric,model,quadratic,n_ok,n_failed";
  for (double l : table.levels) out << ",share_" << csv::format_number(l);
  out << ",mean_loglik\n";
  for (const auto& r : table.rows) {
    out << csv::quote_if_needed(r.group.product) << ',' << to_string(r.group.metric) << ','
        << to_string(r.group.model) << ',' << (r.group.quadratic ? 1 : 0) << ',' << r.n_ok << ',' << r.n_failed;
    for (double s : r.shares) out << ',' << csv::format_number(s);
    out << ',' << csv::format_number(r.mean_loglik) << '\n';
  }
}

std::string_view to_string(SigClass c) {
  switch (c) {
    case SigClass::neg_sig: return "neg_sig";
    case SigClass::insig: return "insig";
    case SigClass::pos_sig: return "pos_sig";
  }
  return "insig";
}

SigClass classify(double beta, double p_value, double alpha) {
  if (!(p_value < alpha)) return SigClass::insig;
  if (beta < 0) return SigClass::neg_sig;
  if (beta > 0) return SigClass::pos_sig;
  return SigClass::insig;
}

SpecChart spec_chart(std::span<const SpecOutcome> results, const std::string& country, MetricId metric,
                     double alpha) {
  SpecChart chart;
  chart.country = country;
  chart.metric = metric;
  chart.alpha = alpha;
  std::vector<const SpecOutcome*> block;
  for (const auto& r : results) {
    if (r.spec.country_id != country || r.spec.metric != metric || r.spec.quadratic) continue;
    if (!r.ok()) {
      ++chart.n_failed;
      continue;
    }
    block.push_back(&r);
  }
  std::stable_sort(block.begin(), block.end(), [](const SpecOutcome* a, const SpecOutcome* b) { return a->id() < b->id(); });
  if (block.empty()) {
    chart.warnings.push_back("no results for " + country + "." + std::string(to_string(metric)));
    return chart;
  }
  for (Model m : {Model::weather_only, Model::fixed_effects, Model::fixed_effects_inputs}) {
    std::vector<const SpecOutcome*> region;
    for (const auto* r : block) {
      if (r->spec.model == m) region.push_back(r);
    }
    std::stable_sort(region.begin(), region.end(),
                     [](const SpecOutcome* a, const SpecOutcome* b) { return a->result->beta1 < b->result->beta1; });
    for (std::size_t i = 0; i < region.size(); ++i) {
      const auto& res = *region[i]->result;
      SpecChartCell c;
      c.spec_id = region[i]->id();
      c.beta1 = res.beta1;
      c.ci_low = res.ci_low;
      c.ci_high = res.ci_high;
      c.p_value = res.p_value;
      c.model = m;
      c.outcome = region[i]->spec.outcome;
      c.product = region[i]->spec.product_id;
      c.sig_class = classify(res.beta1, res.p_value, alpha);
      c.position = i;
      chart.cells.push_back(std::move(c));
    }
  }
  return chart;
}

ordered_json to_json(const SpecChart& chart) {
  ordered_json j;
  j["schema"] = "eob.specchart";
  j["schema_version"] = 1;
  j["country"] = chart.country;
  j["metric"] = to_string(chart.metric);
  j["alpha"] = chart.alpha;
  j["blinded"] = chart.blinded;
  j["regions"] = ordered_json::array({"M1", "M2", "M3"});
  std::map<std::string, std::size_t> counts{{"neg_sig", 0}, {"insig", 0}, {"pos_sig", 0}};
  ordered_json cells = ordered_json::array();
  for (const auto& c : chart.cells) {
    ordered_json cj;
    cj["spec_id"] = c.spec_id;
    cj["model"] = to_string(c.model);
    cj["outcome"] = to_string(c.outcome);
    cj["product"] = c.product;
    cj["position"] = c.position;
    cj["beta1"] = number_or_null(c.beta1);
    cj["ci_low"] = number_or_null(c.ci_low);
    cj["ci_high"] = number_or_null(c.ci_high);
    cj["p_value"] = number_or_null(c.p_value);
    cj["sig_class"] = to_string(c.sig_class);
    counts[std::string(to_string(c.sig_class))]++;
    cells.push_back(std::move(cj));
  }
  j["n_cells"] = chart.cells.size();
  j["n_failed"] = chart.n_failed;
  j["class_counts"] = {{"neg_sig", counts["neg_sig"]}, {"insig", counts["insig"]}, {"pos_sig", counts["pos_sig"]}};
  j["cells"] = std::move(cells);
  j["warnings"] = chart.warnings;
  return j;
}

std::map<std::string, std::size_t> rank_products(const std::map<std::string, double>& beta, bool absolute) {
  std::vector<std::pair<std::string, double>> v(beta.begin(), beta.end());  // already label-sorted
  auto key = [absolute](double b) { return absolute ? std::fabs(b) : b; };
  std::stable_sort(v.begin(), v.end(), [&](const auto& a, const auto& b) { return key(a.second) > key(b.second); });
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < v.size(); ++i) rank[v[i].first] = i + 1;
  return rank;
}

Bumpline bumpline(std::span<const SpecOutcome> results, const std::string& country, MetricId metric, bool absolute) {
  Bumpline b;
  b.country = country;
  b.metric = metric;
  b.absolute = absolute;
  std::set<std::string> products;
  std::map<std::pair<Model, Outcome>, std::map<std::string, double>> cols;
  for (const auto& r : results) {
    if (r.spec.country_id != country || r.spec.metric != metric || r.spec.quadratic) continue;
    products.insert(r.spec.product_id);
    if (r.ok() && std::isfinite(r.result->beta1)) cols[{r.spec.model, r.spec.outcome}][r.spec.product_id] = r.result->beta1;
  }
  b.products.assign(products.begin(), products.end());
  for (Model m : {Model::weather_only, Model::fixed_effects, Model::fixed_effects_inputs}) {
    for (Outcome o : {Outcome::farm_value, Outcome::primary_yield}) {
      RankColumn c;
      c.model = m;
      c.outcome = o;
      if (auto it = cols.find({m, o}); it != cols.end()) c.beta = it->second;
      c.partial = c.beta.size() != b.products.size();
      c.rank = rank_products(c.beta, absolute);
      b.columns.push_back(std::move(c));
    }
  }
  return b;
}

ordered_json to_json(const Bumpline& b) {
  ordered_json j;
  j["schema"] = "eob.bumpline";
  j["schema_version"] = 1;
  j["country"] = b.country;
  j["metric"] = to_string(b.metric);
  j["rank_by"] = b.absolute ? "abs_beta" : "beta";
  j["blinded"] = b.blinded;
  j["products"] = b.products;
  ordered_json cols = ordered_json::array();
  for (const auto& c : b.columns) {
    ordered_json cj;
    cj["model"] = to_string(c.model);
    cj["outcome"] = to_string(c.outcome);
    cj["partial"] = c.partial;
    ordered_json entries = ordered_json::array();
    for (const auto& p : b.products) {
      ordered_json e;
      e["product"] = p;
      auto it = c.rank.find(p);
      e["rank"] = it == c.rank.end() ? ordered_json(nullptr) : ordered_json(it->second);
      e["beta1"] = it == c.rank.end() ? ordered_json(nullptr) : number_or_null(c.beta.at(p));
      entries.push_back(std::move(e));
    }
    cj["entries"] = std::move(entries);
    cols.push_back(std::move(cj));
  }
  j["columns"] = std::move(cols);
  ordered_json paths = ordered_json::array();
  for (const auto& p : b.products) {
    ordered_json ranks = ordered_json::array();
    for (const auto& c : b.columns) {
      auto it = c.rank.find(p);
      ranks.push_back(it == c.rank.end() ? ordered_json(nullptr) : ordered_json(it->second));
    }
    paths.push_back({{"product", p}, {"ranks", std::move(ranks)}});
  }
  j["paths"] = std::move(paths);
  return j;
}

std::vector<DescriptiveRow> descriptives(std::span<const MetricVector> metrics, MetricId metric) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
  for (const auto& m : metrics) {
    const double v = m[metric];
    if (std::isfinite(v)) groups[{m.country_id, m.product_id, m.season_label_year}].push_back(v);
  }
  std::vector<DescriptiveRow> rows;
  for (const auto& [key, values] : groups) {
    DescriptiveRow r;
    std::tie(r.country, r.product, r.season_year) = key;
    r.n = values.size();
    const Moments mo = sample_moments(values);
    r.mean = mo.mean;
    r.sd = r.n > 1 ? std::sqrt(mo.variance) : kNaN;
    const double half = r.n > 1 ? 1.96 * r.sd / std::sqrt(static_cast<double>(r.n)) : kNaN;
    r.ci_low = r.mean - half;
    r.ci_high = r.mean + half;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_descriptives_csv(std::span<const DescriptiveRow> rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "country,product,season_year,n,mean,sd,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.country) << ',' << csv::quote_if_needed(r.product) << ',' << r.season_year << ','
        << r.n << ',' << csv::format_number(r.mean) << ',' << csv::format_number(r.sd) << ','
        << csv::format_number(r.ci_low) << ',' << csv::format_number(r.ci_high) << '\n';
  }
}

}  // namespace eob
