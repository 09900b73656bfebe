#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "eob/error.hpp"
#include "eob/panel_econometrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace eob;

TEST_CASE("ihs") {
  CHECK(ihs(0.0) == 0.0);
  CHECK(ihs(1.0) == doctest::Approx(std::log(1.0 + std::sqrt(2.0))));
  CHECK(ihs(-3.0) == doctest::Approx(-ihs(3.0)));
  CHECK(ihs(1e6) == doctest::Approx(std::log(2e6)).epsilon(1e-9));
}

TEST_CASE("M2 matches dummy-variable regression") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = fixture::random_sample(rng);
    const auto e = estimate(Model::fixed_effects, false, s);
    const auto o = oracle::lsdv(s.y, s.w, s.household, s.year);
    CHECK(oracle::rel_err(e.beta1, o.beta) < 1e-8);
    CHECK(oracle::rel_err(e.se_beta1, o.se) < 1e-8);
    CHECK(oracle::rel_err(e.p_value, o.p) < 1e-6);
    CHECK(oracle::rel_err(e.rss, o.rss) < 1e-8);
    CHECK(e.n_params == o.k);
  }
}

TEST_CASE("M3 matches dummy-variable regression with inputs") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto s = fixture::random_sample(rng, true);
    const auto e = estimate(Model::fixed_effects_inputs, false, s);
    const auto o = oracle::lsdv(s.y, s.w, s.household, s.year, s.inputs);
    CHECK(oracle::rel_err(e.beta1, o.beta) < 1e-8);
    CHECK(oracle::rel_err(e.se_beta1, o.se) < 1e-8);
  }
}

TEST_CASE("M1 is pooled OLS with clustered errors") {
  std::mt19937_64 rng(13);
  const auto s = fixture::random_sample(rng);
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = s.w[static_cast<std::size_t>(i)];
    y(i) = s.y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd b = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const Eigen::VectorXd u = y - X * b;
  const auto V = oracle::naive_sandwich(X, u, s.household);
  const auto e = estimate(Model::weather_only, false, s);
  CHECK(oracle::rel_err(e.beta1, b(1)) < 1e-9);
  CHECK(oracle::rel_err(e.se_beta1, std::sqrt(V(1, 1))) < 1e-9);
  CHECK(e.n_params == 2);
}

TEST_CASE("cluster sandwich matches the pairwise reference") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const auto c = fixture::random_sandwich(rng);
    const auto fast = cluster_sandwich(c.X, c.u, c.cluster, c.absorbed);
    const auto slow = oracle::naive_sandwich(c.X, c.u, c.cluster, c.absorbed);
    CHECK((fast - slow).norm() / slow.norm() < 1e-10);
  }
}

TEST_CASE("rescaling W rescales beta and se, leaves p") {
  std::mt19937_64 rng(15);
  auto s = fixture::random_sample(rng);
  const auto a = estimate(Model::fixed_effects, false, s);
  for (auto& w : s.w) w *= 4.0;
  const auto b = estimate(Model::fixed_effects, false, s);
  CHECK(oracle::rel_err(b.beta1, a.beta1 / 4.0) < 1e-10);
  CHECK(oracle::rel_err(b.se_beta1, a.se_beta1 / 4.0) < 1e-10);
  CHECK(oracle::rel_err(b.p_value, a.p_value) < 1e-8);
}

TEST_CASE("shifting W is absorbed by the intercept or fixed effects") {
  std::mt19937_64 rng(16);
  auto s = fixture::random_sample(rng);
  const auto m1 = estimate(Model::weather_only, false, s);
  const auto m2 = estimate(Model::fixed_effects, false, s);
  for (auto& w : s.w) w += 100.0;
  CHECK(oracle::rel_err(estimate(Model::weather_only, false, s).beta1, m1.beta1) < 1e-8);
  CHECK(oracle::rel_err(estimate(Model::fixed_effects, false, s).beta1, m2.beta1) < 1e-8);
}

TEST_CASE("log likelihood from the residual sum of squares") {
  std::mt19937_64 rng(17);
  const auto s = fixture::random_sample(rng);
  const auto e = estimate(Model::fixed_effects, false, s);
  const double n = static_cast<double>(e.n_obs);
  CHECK(e.loglik == doctest::Approx(-0.5 * n * (std::log(2 * std::numbers::pi) + std::log(e.rss / n) + 1)));
}

TEST_CASE("quadratic term is centred") {
  std::mt19937_64 rng(18);
  auto s = fixture::random_sample(rng);
  const auto a = estimate(Model::fixed_effects, true, s);
  for (auto& w : s.w) w += 5.0;
  const auto b = estimate(Model::fixed_effects, true, s);
  CHECK(oracle::rel_err(a.beta1, b.beta1) < 1e-7);
  CHECK(a.n_params == estimate(Model::fixed_effects, false, s).n_params + 1);
}

TEST_CASE("weather constant within households is a singularity") {
  RegressionSample s;
  for (std::uint32_t g = 0; g < 6; ++g) {
    for (int t = 0; t < 3; ++t) {
      s.y.push_back(g + 0.1 * t * t);
      s.w.push_back(g * 2.0);
      s.household.push_back(g);
      s.year.push_back(2010 + t);
    }
  }
  try {
    estimate(Model::fixed_effects, false, s);
    FAIL("expected singularity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::singularity);
  }
  CHECK_NOTHROW(estimate(Model::weather_only, false, s));
}

TEST_CASE("one cluster cannot be inferred from") {
  RegressionSample s;
  for (int t = 0; t < 5; ++t) {
    s.y.push_back(t * 1.5 + (t % 2));
    s.w.push_back(t);
    s.household.push_back(0);
    s.year.push_back(2010 + t);
  }
  try {
    estimate(Model::weather_only, false, s);
    FAIL("expected inference error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::inference);
  }
}

TEST_CASE("p-value falls with |t| and is symmetric") {
  double prev = 1.0;
  for (double t = 0.0; t < 8.0; t += 0.25) {
    const double p = student_t_two_sided_p(t, 20);
    CHECK(p <= prev);
    CHECK(p == doctest::Approx(student_t_two_sided_p(-t, 20)));
    prev = p;
  }
  CHECK(student_t_two_sided_p(0.0, 5) == doctest::Approx(1.0));
  CHECK(student_t_two_sided_p(2.086, 20) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(student_t_quantile(0.975, 20) == doctest::Approx(2.085963).epsilon(1e-6));
}

TEST_CASE("spec ids round trip") {
  RegressionSpec s{"Ethiopia", Model::fixed_effects_inputs, Outcome::primary_yield, MetricId::z_gdd, "ERA5", true};
  const auto id = s.id();
  CHECK(RegressionSpec::parse_id(id) == s);
  s.quadratic = false;
  CHECK(RegressionSpec::parse_id(s.id()) == s);
  CHECK_THROWS_AS(RegressionSpec::parse_id("Ethiopia.M2"), Error);
  CHECK_THROWS_AS(RegressionSpec::parse_id("Ethiopia.M9.farm_value.total.ERA5"), Error);
}

TEST_CASE("fit drops incomplete rows and maps survey years to seasons") {
  std::vector<PanelRow> panel;
  std::vector<MetricVector> metrics;
  std::mt19937_64 rng(19);
  std::normal_distribution<double> z;
  for (int g = 0; g < 20; ++g) {
    for (int t = 0; t < 3; ++t) {
      PanelRow r;
      r.household_id = "h" + std::to_string(g);
      r.country_id = "Mali";
      r.year = 2015 + t;
      const double w = z(rng);
      r.outcome_value_usd_ha = std::sinh(3 + 0.5 * w + 0.1 * z(rng) + 0.2 * g);
      r.outcome_yield_kg_ha = 10;
      panel.push_back(r);
      MetricVector m;
      m.household_id = r.household_id;
      m.product_id = "P";
      m.country_id = "Mali";
      m.season_label_year = r.year - 1;
      m[MetricId::total] = w;
      metrics.push_back(m);
    }
  }
  panel[0].outcome_value_usd_ha = PanelRow::kMissing;
  WaveMap waves;
  waves.add("Mali", 2015, 2014);
  waves.add("Mali", 2016, 2015);
  waves.add("Mali", 2017, 2016);
  const MetricTable table(metrics);
  const RegressionSpec spec{"Mali", Model::fixed_effects, Outcome::farm_value, MetricId::total, "P", false};
  const auto r = fit(spec, panel, table, waves);
  CHECK(r.n_dropped == 1);
  CHECK(r.n_obs == 59);
  CHECK(r.beta1 == doctest::Approx(0.5).epsilon(0.05));
  // without the wave map the last survey year finds no season
  CHECK(fit(spec, panel, table).n_dropped == 21);
}
