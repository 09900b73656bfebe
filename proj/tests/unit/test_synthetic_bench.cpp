#include <doctest.h>

#include <cmath>
#include <fstream>

#include "eob/error.hpp"
#include "eob/panel_econometrics.hpp"
#include "eob/synthetic_bench.hpp"
#include "oracles.hpp"

using namespace eob;

namespace {

nlohmann::json small_json() {
  return {{"seed", 42},
          {"countries", {"Ethiopia", "Niger"}},
          {"households_per_country", 40},
          {"first_survey_year", 2013},
          {"n_years", 3},
          {"weather_start_year", 2010},
          {"grid", {{"rows_per_country", 4}, {"n_cols", 4}}}};
}

SynthConfig small() { return SynthConfig::from_json(small_json()); }

const ProductGrids& product(const std::vector<ProductGrids>& all, const std::string& id) {
  for (const auto& p : all) {
    if (p.id == id) return p;
  }
  FAIL("no product " << id);
  return all.front();
}

}  // namespace

TEST_CASE("default products and json round trip") {
  const auto c = small();
  REQUIRE(c.products.size() == 4);
  CHECK(c.products[1].distortion.kind == DistortionKind::affine);
  CHECK(c.products[1].distortion.a == 2.0);
  CHECK(c.products[1].distortion.b == 5.0);
  const auto back = SynthConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  auto bad = small_json();
  bad["countries"] = {"Atlantis"};
  CHECK_THROWS_AS(SynthConfig::from_json(bad), Error);
  bad = small_json();
  bad["n_years"] = 1;
  CHECK_THROWS_AS(SynthConfig::from_json(bad), Error);
}

TEST_CASE("latent weather is plausible and quantized") {
  const auto c = small();
  const auto w = gen_latent_weather(c);
  CHECK(w.precip.n_rows == 8);
  CHECK(w.precip.start_date == make_date(2010, 1, 1));
  CHECK(w.precip.coverage().last == make_date(2016, 12, 31));
  std::size_t wet = 0;
  for (float v : w.precip.values) {
    CHECK_MESSAGE(v >= 0.0f, "negative rain");
    const double steps = v / c.rain_quantum_mm;
    if (steps != std::round(steps)) FAIL("rain not on the quantum grid");
    wet += v >= 1.0f;
  }
  const double share = double(wet) / double(w.precip.values.size());
  CHECK(share > 0.15);
  CHECK(share < 0.5);
  double sum = 0;
  for (std::size_t i = 0; i < w.temp_mean.values.size(); ++i) {
    sum += w.temp_mean.values[i];
    CHECK(w.temp_max.values[i] > w.temp_mean.values[i]);
  }
  CHECK(sum / double(w.temp_mean.values.size()) == doctest::Approx(c.temp_mean_c).epsilon(0.1));
}

TEST_CASE("distortions") {
  const auto c = small();
  const auto w = gen_latent_weather(c);

  SynthProduct ident{"I"};
  CHECK(distort(w.precip, ident, 1).values == w.precip.values);

  SynthProduct aff{"A", {DistortionKind::affine, 2.0, 5.0}};
  const auto a = distort(w.precip, aff, 1);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == 2.0f * w.precip.values[i] + 5.0f);
  // temperature untouched unless asked
  CHECK(distort(w.temp_mean, aff, 1).values == w.temp_mean.values);

  SynthProduct cen{"C"};
  cen.distortion.kind = DistortionKind::censor;
  cen.distortion.threshold = 1.0;
  for (float v : distort(w.precip, cen, 1).values) CHECK((v == 0.0f || v >= 1.0f));

  SynthProduct sm{"S"};
  sm.distortion.kind = DistortionKind::smooth;
  sm.distortion.radius = 0;
  CHECK(distort(w.precip, sm, 1).values == w.precip.values);
  sm.distortion.radius = 1;
  const auto s = distort(w.precip, sm, 1);
  double lat_sum = 0, smooth_sum = 0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    lat_sum += w.precip.values[i];
    smooth_sum += s.values[i];
  }
  CHECK(smooth_sum == doctest::Approx(lat_sum).epsilon(0.05));

  SynthProduct noisy{"N"};
  noisy.distortion.kind = DistortionKind::mult_noise;
  noisy.distortion.sigma = 0.4;
  const auto n1 = distort(w.precip, noisy, 3);
  const auto n2 = distort(w.precip, noisy, 3);
  CHECK(n1.values == n2.values);
  double noisy_sum = 0;
  for (float v : n1.values) noisy_sum += v;
  CHECK(noisy_sum == doctest::Approx(lat_sum).epsilon(0.02));
  CHECK(distort(w.precip, noisy, 4).values != n1.values);
}

TEST_CASE("products in file units convert back") {
  auto j = small_json();
  j["products"] = {{{"id", "METRE"}, {"units", {{"precip", "m"}, {"temp", "kelvin"}}}},
                   {{"id", "FLUX"}, {"units", {{"precip", "kg_m2_s"}}}, {"variables", {"precip"}}}};
  const auto c = SynthConfig::from_json(j);
  const auto w = gen_latent_weather(c);
  const auto products = gen_products(c, w);
  const auto& m = product(products, "METRE");
  REQUIRE(m.grids.size() == 3);
  CHECK(m.grids[0].input_units == Units::m);
  const auto back = normalize_units(m.grids[0]);
  const auto temp = normalize_units(m.grids[1]);
  for (std::size_t i = 0; i < back.values.size(); i += 97) {
    CHECK(back.values[i] == doctest::Approx(w.precip.values[i]).epsilon(1e-6));
    // kelvin in float32 keeps about 3e-5 degrees
    CHECK(std::fabs(temp.values[i] - w.temp_mean.values[i]) < 1e-4);
  }
  const auto& f = product(products, "FLUX");
  REQUIRE(f.grids.size() == 1);
  const auto fb = normalize_units(f.grids[0]);
  for (std::size_t i = 0; i < fb.values.size(); i += 97) {
    CHECK(fb.values[i] == doctest::Approx(w.precip.values[i]).epsilon(1e-6));
  }
}

TEST_CASE("households sit inside their country band") {
  const auto c = small();
  const auto hh = gen_households(c);
  REQUIRE(hh.size() == 80);
  CHECK(hh[0].household_id == "Ethiopia-00001");
  CHECK(hh[40].household_id == "Niger-00001");
  const auto bands = country_bands(c);
  for (const auto& h : hh) {
    const auto& b = h.country_id == "Ethiopia" ? bands[0] : bands[1];
    CHECK(h.coord.lat > b.lat_lo);
    CHECK(h.coord.lat < b.lat_hi);
  }
  CHECK_FALSE(bands[0].boundary_lat.has_value());
  // Nigeria has two seasons split inside its band
  auto with_nigeria = small_json();
  with_nigeria["countries"] = {"Niger", "Nigeria"};
  const auto nb = country_bands(SynthConfig::from_json(with_nigeria));
  REQUIRE(nb[1].boundary_lat.has_value());
  CHECK(*nb[1].boundary_lat == doctest::Approx((nb[1].lat_lo + nb[1].lat_hi) / 2));
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate(small());
  const auto b = generate(small());
  CHECK(a.products[0].grids[0].values == b.products[0].grids[0].values);
  REQUIRE(a.panel.size() == b.panel.size());
  for (std::size_t i = 0; i < a.panel.size(); ++i) {
    CHECK(a.panel[i].outcome_value_usd_ha == b.panel[i].outcome_value_usd_ha);
  }
  auto j = small_json();
  j["seed"] = 43;
  const auto c = generate(SynthConfig::from_json(j));
  CHECK(c.latent.precip.values != a.latent.precip.values);
}

TEST_CASE("panel follows the outcome model") {
  auto j = small_json();
  j["outcome"] = {{"noise_sd", 0.01}};
  const auto bench = generate(SynthConfig::from_json(j));
  CHECK(bench.panel.size() == 80 * 3);
  CHECK(bench.truth_metrics.size() == 80 * 3);
  const MetricTable table(bench.truth_metrics);
  const std::string latent = bench.truth_metrics.front().product_id;
  for (const auto& country : {"Ethiopia", "Niger"}) {
    const RegressionSpec spec{country, Model::fixed_effects, Outcome::farm_value, MetricId::z_total, latent, false};
    const auto r = fit(spec, bench.panel, table, bench.waves);
    CHECK(r.beta1 == doctest::Approx(0.8).epsilon(0.02));
    CHECK(r.n_obs == 120);
  }
}

TEST_CASE("without household or year effects M1 and M2 agree") {
  auto j = small_json();
  j["outcome"] = {{"household_sd", 0.0}, {"year_sd", 0.0}, {"noise_sd", 0.05}};
  j["households_per_country"] = 120;
  const auto bench = generate(SynthConfig::from_json(j));
  const MetricTable table(bench.truth_metrics);
  const std::string latent = bench.truth_metrics.front().product_id;
  RegressionSpec spec{"Niger", Model::weather_only, Outcome::farm_value, MetricId::z_total, latent, false};
  const auto m1 = fit(spec, bench.panel, table, bench.waves);
  spec.model = Model::fixed_effects;
  const auto m2 = fit(spec, bench.panel, table, bench.waves);
  CHECK(m1.beta1 == doctest::Approx(m2.beta1).epsilon(0.02));
  CHECK(m1.beta1 == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("bench files") {
  auto j = small_json();
  j["households_per_country"] = 5;
  const auto bench = generate(SynthConfig::from_json(j));
  oracle::TempDir dir("bench");
  const auto files = write_bench(bench, dir.path());
  for (const auto& f : files) CHECK(std::filesystem::exists(f));
  CHECK(std::filesystem::exists(dir / "grids/AFFINE.precip.hdr.json"));
  CHECK(read_panel(dir / "panel.csv").size() == bench.panel.size());
  CHECK(read_coordinates(dir / "coordinates.csv").size() == 10);
  std::ifstream in(dir / "truth.json");
  const auto truth = nlohmann::json::parse(in);
  CHECK(truth["beta_true"] == 0.8);
  CHECK(truth["countries"].size() == 2);
}
