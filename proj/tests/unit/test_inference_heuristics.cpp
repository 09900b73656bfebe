#include <doctest.h>

#include <cmath>
#include <fstream>

#include "eob/error.hpp"
#include "eob/inference_heuristics.hpp"
#include "oracles.hpp"

using namespace eob;

namespace {

SpecOutcome ok(std::string country, Model m, Outcome o, MetricId metric, std::string product, double beta, double p,
               double loglik = -10.0, bool quad = false) {
  SpecOutcome s;
  s.spec = {std::move(country), m, o, metric, std::move(product), quad};
  RegressionResult r;
  r.spec = s.spec;
  r.beta1 = beta;
  r.p_value = p;
  r.se_beta1 = 0.1;
  r.ci_low = beta - 0.2;
  r.ci_high = beta + 0.2;
  r.loglik = loglik;
  s.result = r;
  return s;
}

SpecOutcome failed(std::string country, Model m, Outcome o, MetricId metric, std::string product) {
  SpecOutcome s;
  s.spec = {std::move(country), m, o, metric, std::move(product), false};
  s.error_kind = ErrorKind::singularity;
  s.error = "singular";
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("significance shares use strict inequality") {
  const std::vector<double> p{0.004, 0.03, 0.05, 0.2};
  const std::vector<double> levels{0.01, 0.05, 0.10};
  const auto s = significance_shares(p, levels);
  CHECK(s[0] == doctest::Approx(0.25));
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(s[2] == doctest::Approx(0.75));
  CHECK(std::isnan(significance_shares({}, levels)[0]));
}

TEST_CASE("shares are nested across levels") {
  std::vector<double> p;
  for (int i = 0; i < 200; ++i) p.push_back(std::fmod(i * 0.6180339887, 1.0) * 0.2);
  const std::vector<double> levels{0.001, 0.01, 0.05, 0.10, 0.15};
  const auto s = significance_shares(p, levels);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] >= s[i - 1]);
}

TEST_CASE("mean log likelihood") {
  const std::vector<double> ll{-10, -20, -30};
  CHECK(mean_loglik(ll) == doctest::Approx(-20));
  CHECK(std::isnan(mean_loglik({})));
}

TEST_CASE("heuristic table groups by product, metric, model") {
  std::vector<SpecOutcome> r{
      ok("Mali", Model::fixed_effects, Outcome::farm_value, MetricId::total, "A", 1, 0.001, -5),
      ok("Niger", Model::fixed_effects, Outcome::farm_value, MetricId::total, "A", 1, 0.3, -7),
      failed("Mali", Model::fixed_effects, Outcome::primary_yield, MetricId::total, "A"),
      ok("Mali", Model::weather_only, Outcome::farm_value, MetricId::total, "B", 1, 0.04),
      failed("Mali", Model::weather_only, Outcome::farm_value, MetricId::gdd, "B"),
  };
  const auto t = heuristics(r);
  // the all-failed gdd group is dropped with a warning
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].group.product == "A");
  CHECK(t.rows[0].n_ok == 2);
  CHECK(t.rows[0].n_failed == 1);
  CHECK(t.rows[0].shares[0] == doctest::Approx(0.5));
  CHECK(t.rows[0].mean_loglik == doctest::Approx(-6));
  CHECK(t.rows[1].group.product == "B");
  CHECK(t.rows[1].shares[0] == 0.0);
  CHECK(t.rows[1].shares[1] == 1.0);
  REQUIRE(t.warnings.size() == 1);
  CHECK(t.warnings[0].find("gdd") != std::string::npos);
  CHECK_THROWS_AS(heuristics(r, {0.1, 0.05}), Error);

  oracle::TempDir dir("heur");
  write_heuristics_csv(t, dir / "h.csv");
  const auto text = slurp(dir / "h.csv");
  CHECK(text.rfind("product,metric,model,quadratic,n_ok,n_failed,share_0.01,share_0.05,share_0.1,mean_loglik\n", 0) ==
        0);
}

TEST_CASE("significance classes") {
  CHECK(classify(0.5, 0.01) == SigClass::pos_sig);
  CHECK(classify(-0.5, 0.01) == SigClass::neg_sig);
  CHECK(classify(-0.5, 0.05) == SigClass::insig);
  CHECK(classify(0.5, 0.2) == SigClass::insig);
  CHECK(classify(0.5, std::nan("")) == SigClass::insig);
  CHECK(classify(0.5, 0.08, 0.10) == SigClass::pos_sig);
}

TEST_CASE("spec chart sorts within model regions") {
  std::vector<SpecOutcome> r;
  const double betas[] = {0.3, -0.2, 0.1};
  const char* products[] = {"A", "B", "C"};
  for (Model m : {Model::fixed_effects_inputs, Model::weather_only, Model::fixed_effects}) {
    for (int k = 0; k < 3; ++k) {
      r.push_back(ok("Mali", m, Outcome::farm_value, MetricId::total, products[k], betas[k], k == 0 ? 0.01 : 0.5));
    }
  }
  r.push_back(ok("Mali", Model::fixed_effects, Outcome::farm_value, MetricId::total, "A", 9, 0.5, -1, true));
  r.push_back(failed("Mali", Model::fixed_effects, Outcome::primary_yield, MetricId::total, "A"));
  r.push_back(ok("Niger", Model::fixed_effects, Outcome::farm_value, MetricId::total, "A", 9, 0.5));
  const auto chart = spec_chart(r, "Mali", MetricId::total);
  REQUIRE(chart.cells.size() == 9);
  CHECK(chart.n_failed == 1);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(chart.cells[i].model == static_cast<Model>(i / 3));
    CHECK(chart.cells[i].position == i % 3);
  }
  CHECK(chart.cells[0].product == "B");
  CHECK(chart.cells[2].product == "A");
  CHECK(chart.cells[2].sig_class == SigClass::pos_sig);

  const auto j = to_json(chart);
  CHECK(j["schema"] == "eob.specchart");
  CHECK(j["n_cells"] == 9);
  CHECK(j["class_counts"]["pos_sig"] == 3);
  CHECK(j["class_counts"]["insig"] == 6);
  CHECK(j["regions"].size() == 3);

  const auto empty = spec_chart(r, "Chad", MetricId::total);
  CHECK(empty.cells.empty());
  CHECK(empty.warnings.size() == 1);
}

TEST_CASE("equal betas keep spec id order") {
  std::vector<SpecOutcome> r{ok("Mali", Model::weather_only, Outcome::primary_yield, MetricId::total, "A", 1, 0.5),
                             ok("Mali", Model::weather_only, Outcome::farm_value, MetricId::total, "B", 1, 0.5),
                             ok("Mali", Model::weather_only, Outcome::farm_value, MetricId::total, "A", 1, 0.5)};
  const auto chart = spec_chart(r, "Mali", MetricId::total);
  CHECK(chart.cells[0].spec_id == "Mali.M1.farm_value.total.A");
  CHECK(chart.cells[1].spec_id == "Mali.M1.farm_value.total.B");
  CHECK(chart.cells[2].spec_id == "Mali.M1.primary_yield.total.A");
}

TEST_CASE("product ranks") {
  const std::map<std::string, double> b{{"A", 0.1}, {"B", -0.9}, {"C", 0.5}, {"D", 0.1}};
  const auto r = rank_products(b);
  CHECK(r.at("C") == 1);
  CHECK(r.at("A") == 2);  // tie with D goes to the smaller label
  CHECK(r.at("D") == 3);
  CHECK(r.at("B") == 4);
  const auto a = rank_products(b, true);
  CHECK(a.at("B") == 1);
  CHECK(a.at("C") == 2);
}

TEST_CASE("bumpline columns and partial flag") {
  std::vector<SpecOutcome> r;
  for (Model m : {Model::weather_only, Model::fixed_effects, Model::fixed_effects_inputs}) {
    for (Outcome o : {Outcome::farm_value, Outcome::primary_yield}) {
      r.push_back(ok("Mali", m, o, MetricId::gdd, "A", 0.2, 0.5));
      r.push_back(ok("Mali", m, o, MetricId::gdd, "B", 0.4, 0.5));
      if (m == Model::fixed_effects && o == Outcome::farm_value) {
        r.push_back(failed("Mali", m, o, MetricId::gdd, "C"));
      } else {
        r.push_back(ok("Mali", m, o, MetricId::gdd, "C", -0.1, 0.5));
      }
    }
  }
  const auto b = bumpline(r, "Mali", MetricId::gdd);
  CHECK(b.products == std::vector<std::string>{"A", "B", "C"});
  REQUIRE(b.columns.size() == 6);
  CHECK_FALSE(b.columns[0].partial);
  CHECK(b.columns[2].partial);
  CHECK(b.columns[2].rank.size() == 2);
  CHECK(b.columns[0].rank.at("B") == 1);
  CHECK(b.columns[0].rank.at("C") == 3);
  const auto j = to_json(b);
  CHECK(j["schema"] == "eob.bumpline");
  CHECK(j["columns"].size() == 6);
  CHECK(j["paths"].size() == 3);
  CHECK(j["rank_by"] == "beta");
}

TEST_CASE("descriptives per country, product and year") {
  std::vector<MetricVector> m;
  const double v[] = {1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) {
    MetricVector x;
    x.household_id = "h" + std::to_string(i);
    x.product_id = "A";
    x.country_id = "Mali";
    x.season_label_year = 2014;
    x[MetricId::gdd] = v[i];
    m.push_back(x);
  }
  MetricVector lone = m[0];
  lone.season_label_year = 2015;
  m.push_back(lone);
  const auto rows = descriptives(m, MetricId::gdd);
  REQUIRE(rows.size() == 2);
  const auto o = oracle::moments({1, 2, 3, 4});
  CHECK(rows[0].n == 4);
  CHECK(rows[0].mean == doctest::Approx(o.mean));
  CHECK(rows[0].sd == doctest::Approx(std::sqrt(o.variance)));
  CHECK(rows[0].ci_high - rows[0].mean == doctest::Approx(1.96 * std::sqrt(o.variance) / 2));
  CHECK(std::isnan(rows[1].sd));
  CHECK(descriptives(m, MetricId::total).empty());
}
