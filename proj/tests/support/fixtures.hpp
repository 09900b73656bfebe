// Random inputs shared by unit and acceptance tests.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "eob/panel_econometrics.hpp"

namespace fixture {

// Unbalanced two-way panel with household and year effects, W correlated
// with the household effect, and heteroskedastic noise.
inline eob::RegressionSample random_sample(std::mt19937_64& rng, bool with_inputs = false) {
  std::uniform_int_distribution<int> n_hh(5, 50), n_years(2, 5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution keep(0.85);
  const int G = n_hh(rng), T = n_years(rng);
  std::vector<double> year_fx(static_cast<std::size_t>(T));
  for (auto& v : year_fx) v = z(rng);

  eob::RegressionSample s;
  std::vector<std::array<double, 5>> x;
  for (int g = 0; g < G; ++g) {
    const double a = z(rng);
    const double scale = 0.5 + std::abs(z(rng));
    int kept = 0;
    for (int t = 0; t < T; ++t) {
      // at least two rows per household
      if (kept + (T - t) > 2 && !keep(rng)) continue;
      ++kept;
      const double w = 0.7 * a + z(rng);
      std::array<double, 5> in{std::abs(z(rng)) * 20, std::abs(z(rng)) * 30, double(rng() % 2), double(rng() % 2),
                               double(rng() % 2)};
      double y = 2.0 + a + year_fx[static_cast<std::size_t>(t)] + 0.4 * w + scale * z(rng);
      if (with_inputs) y += 0.01 * in[0] - 0.005 * in[1] + 0.1 * in[2];
      s.y.push_back(y);
      s.w.push_back(w);
      s.household.push_back(static_cast<std::uint32_t>(g));
      s.year.push_back(2010 + t);
      x.push_back(in);
    }
  }
  if (with_inputs) {
    s.inputs.resize(static_cast<Eigen::Index>(x.size()), 5);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int j = 0; j < 5; ++j) s.inputs(static_cast<Eigen::Index>(i), j) = x[i][static_cast<std::size_t>(j)];
    }
  }
  return s;
}

struct SandwichCase {
  Eigen::MatrixXd X;
  Eigen::VectorXd u;
  std::vector<std::uint32_t> cluster;
  std::size_t absorbed = 0;
};

inline SandwichCase random_sandwich(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_obs(30, 200), n_cols(1, 6), n_cl(3, 25), n_abs(0, 5);
  std::normal_distribution<double> z(0.0, 1.0);
  SandwichCase c;
  const int n = n_obs(rng), k = n_cols(rng), g = n_cl(rng);
  c.X.resize(n, k);
  c.u.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) c.X(i, j) = z(rng) * (j + 1) + (j == 0 ? 3.0 : 0.0);
    c.u(i) = z(rng) * (1 + (i % 3));
    c.cluster.push_back(static_cast<std::uint32_t>(i < g ? i : rng() % static_cast<unsigned>(g)));
  }
  c.absorbed = static_cast<std::size_t>(n_abs(rng));
  return c;
}

}  // namespace fixture
