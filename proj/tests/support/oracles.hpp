// Reference implementations used only by the tests. They are written for
// clarity, not speed, and share no code with the library.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

namespace oracle {

struct NaiveMoments {
  double mean = 0, median = 0, variance = 0, skew = 0;
};

// Straight textbook formulas in long double.
inline NaiveMoments moments(std::vector<double> x) {
  NaiveMoments m;
  const std::size_t n = x.size();
  if (n == 0) return m;
  long double s = 0;
  for (double v : x) s += v;
  const long double mean = s / n;
  long double m2 = 0, m3 = 0;
  for (double v : x) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m.mean = static_cast<double>(mean);
  m.variance = n > 1 ? static_cast<double>(m2 / (n - 1)) : 0.0;
  const long double pm2 = m2 / n, pm3 = m3 / n;
  m.skew = pm2 > 0 ? static_cast<double>(pm3 / std::pow(pm2, 1.5L)) : 0.0;
  std::sort(x.begin(), x.end());
  m.median = n % 2 ? x[n / 2] : (x[n / 2 - 1] + x[n / 2]) / 2.0;
  return m;
}

// Cluster-robust covariance by explicit double loop over observation pairs.
inline Eigen::MatrixXd naive_sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& u,
                                      const std::vector<std::uint32_t>& cluster, std::size_t extra_params = 0) {
  const long n = X.rows(), k = X.cols();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      if (cluster[i] != cluster[j]) continue;
      meat += (u(i) * u(j)) * X.row(i).transpose() * X.row(j);
    }
  }
  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  std::vector<std::uint32_t> ids(cluster);
  std::sort(ids.begin(), ids.end());
  const double g = static_cast<double>(std::unique(ids.begin(), ids.end()) - ids.begin());
  const double kk = static_cast<double>(k + extra_params);
  const double c = g / (g - 1) * (n - 1.0) / (n - kk);
  return c * xtx_inv * meat * xtx_inv;
}

struct LsdvFit {
  double beta = 0, se = 0, p = 0, rss = 0;
  std::size_t k = 0;
};

// Brute-force two-way fixed effects: one dummy per household (no intercept),
// year dummies without the first year, then W and optional extra covariates.
inline LsdvFit lsdv(const std::vector<double>& y, const std::vector<double>& w, const std::vector<std::uint32_t>& hh,
                    const std::vector<int>& year, const Eigen::MatrixXd& extra = {}) {
  const long n = static_cast<long>(y.size());
  std::map<std::uint32_t, long> hcol;
  for (auto h : hh) hcol.emplace(h, 0);
  long c = 0;
  for (auto& [h, col] : hcol) col = c++;
  std::map<int, long> ycol;
  for (int t : year) ycol.emplace(t, 0);
  long yc = 0;
  for (auto& [t, col] : ycol) col = yc++ - 1;  // first year -> -1 (dropped)
  const long k = 1 + extra.cols() + static_cast<long>(hcol.size()) + static_cast<long>(ycol.size()) - 1;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, k);
  Eigen::VectorXd Y(n);
  for (long i = 0; i < n; ++i) {
    Y(i) = y[i];
    X(i, 0) = w[i];
    for (long e = 0; e < extra.cols(); ++e) X(i, 1 + e) = extra(i, e);
    const long base = 1 + extra.cols();
    X(i, base + hcol.at(hh[i])) = 1.0;
    const long yy = ycol.at(year[i]);
    if (yy >= 0) X(i, base + static_cast<long>(hcol.size()) + yy) = 1.0;
  }
  const Eigen::VectorXd b = X.householderQr().solve(Y);
  const Eigen::VectorXd u = Y - X * b;
  const Eigen::MatrixXd V = naive_sandwich(X, u, hh);
  LsdvFit f;
  f.beta = b(0);
  f.se = std::sqrt(V(0, 0));
  f.rss = u.squaredNorm();
  f.k = static_cast<std::size_t>(k);
  const double g = static_cast<double>(hcol.size());
  boost::math::students_t dist(g - 1);
  f.p = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(f.beta / f.se)));
  return f;
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale == 0 ? 0.0 : std::fabs(a - b) / scale;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "eob") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
