#include "eob/panel_econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "eob/error.hpp"

namespace eob {

std::string_view to_string(Model m) {
  switch (m) {
    case Model::weather_only: return "M1";
    case Model::fixed_effects: return "M2";
    case Model::fixed_effects_inputs: return "M3";
  }
  return "?";
}

std::string_view to_string(Outcome o) { return o == Outcome::farm_value ? "farm_value" : "primary_yield"; }

Model parse_model(std::string_view text) {
  if (text == "M1" || text == "weather_only") return Model::weather_only;
  if (text == "M2" || text == "fixed_effects") return Model::fixed_effects;
  if (text == "M3" || text == "fixed_effects_inputs") return Model::fixed_effects_inputs;
  fail(ErrorKind::config, "unknown model '" + std::string(text) + "'");
}

Outcome parse_outcome(std::string_view text) {
  if (text == "farm_value") return Outcome::farm_value;
  if (text == "primary_yield") return Outcome::primary_yield;
  fail(ErrorKind::config, "unknown outcome '" + std::string(text) + "'");
}

std::string RegressionSpec::id() const {
  std::string s = country_id;
  s += '.';
  s += to_string(model);
  s += '.';
  s += to_string(outcome);
  s += '.';
  s += to_string(metric);
  s += '.';
  s += product_id;
  if (quadratic) s += ".quad";
  return s;
}

RegressionSpec RegressionSpec::parse_id(std::string_view id) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto dot = id.find('.', pos);
    parts.emplace_back(id.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  if (parts.size() != 5 && !(parts.size() == 6 && parts[5] == "quad")) {
    fail(ErrorKind::data, "malformed spec id '" + std::string(id) + "'");
  }
  RegressionSpec s;
  s.country_id = parts[0];
  s.model = parse_model(parts[1]);
  s.outcome = parse_outcome(parts[2]);
  s.metric = parse_metric(parts[3]);
  s.product_id = parts[4];
  s.quadratic = parts.size() == 6;
  return s;
}

double ihs(double y) {
  // asinh is exact at zero and odd, and avoids cancellation for y < 0.
  return std::asinh(y);
}

double cluster_correction(std::size_t n_clusters, std::size_t n_obs, std::size_t n_params) {
  const double g = static_cast<double>(n_clusters);
  const double n = static_cast<double>(n_obs);
  const double k = static_cast<double>(n_params);
  return g / (g - 1.0) * (n - 1.0) / (n - k);
}

double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double student_t_quantile(double prob, double df) {
  const boost::math::students_t dist(df);
  return boost::math::quantile(dist, prob);
}

namespace {

struct DenseClusters {
  std::vector<std::uint32_t> code;
  std::size_t count = 0;
};

DenseClusters densify(std::span<const std::uint32_t> ids) {
  std::map<std::uint32_t, std::uint32_t> remap;
  for (auto id : ids) remap.emplace(id, 0);
  std::uint32_t next = 0;
  for (auto& [id, code] : remap) code = next++;
  DenseClusters d;
  d.count = remap.size();
  d.code.reserve(ids.size());
  for (auto id : ids) d.code.push_back(remap[id]);
  return d;
}

Eigen::MatrixXd bread_from_qr(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const Eigen::Index p = qr.cols();
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd inner = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation();
  return perm * inner * perm.transpose();
}

Eigen::MatrixXd meat(const Eigen::MatrixXd& X, const Eigen::VectorXd& u, const DenseClusters& clusters) {
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(clusters.count), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    scores.row(clusters.code[static_cast<std::size_t>(i)]) += u(i) * X.row(i);
  }
  return scores.transpose() * scores;
}

void check_inference(std::size_t g, std::size_t n, std::size_t k) {
  if (g < 2) fail(ErrorKind::inference, "clustered errors need at least 2 clusters, found " + std::to_string(g));
  if (n <= k) {
    fail(ErrorKind::inference, "no residual degrees of freedom: " + std::to_string(n) + " observations for " +
                                   std::to_string(k) + " parameters");
  }
}

}  // namespace

Eigen::MatrixXd cluster_sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                 std::span<const std::uint32_t> cluster_ids, std::size_t absorbed_params) {
  if (static_cast<std::size_t>(X.rows()) != cluster_ids.size() || X.rows() != residuals.size()) {
    fail(ErrorKind::data, "cluster_sandwich: dimension mismatch");
  }
  if (cluster_ids.empty()) fail(ErrorKind::inference, "cluster_sandwich: no observations");
  const DenseClusters clusters = densify(cluster_ids);
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t k = static_cast<std::size_t>(X.cols()) + absorbed_params;
  check_inference(clusters.count, n, k);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) fail(ErrorKind::singularity, "cluster_sandwich: X'X is rank deficient");
  const Eigen::MatrixXd bread = bread_from_qr(qr);
  return cluster_correction(clusters.count, n, k) * (bread * meat(X, residuals, clusters) * bread);
}

namespace {

// Household-demeaning of one column in place.
void demean(Eigen::Ref<Eigen::VectorXd> x, const std::vector<std::uint32_t>& group, std::size_t n_groups,
            const std::vector<double>& group_size) {
  std::vector<double> sum(n_groups, 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) sum[group[static_cast<std::size_t>(i)]] += x(i);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto g = group[static_cast<std::size_t>(i)];
    x(i) -= sum[g] / group_size[g];
  }
}

struct Column {
  Eigen::VectorXd values;
  double raw_norm = 0.0;
};

// Incremental Gram-Schmidt rank screen.
class RankScreen {
 public:
  RankScreen(double tol) : tol_(tol) {}

  bool accept(const Column& c) {
    if (!(c.raw_norm > 0.0)) return false;
    Eigen::VectorXd r = c.values;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis_) r -= q * q.dot(r);
    }
    const double norm = r.norm();
    if (!(norm > tol_ * c.raw_norm)) return false;
    basis_.push_back(r / norm);
    return true;
  }

 private:
  double tol_;
  std::vector<Eigen::VectorXd> basis_;
};

}  // namespace

Estimate estimate(Model model, bool quadratic, const RegressionSample& sample, const EstimatorOptions& options) {
  const std::size_t n = sample.size();
  if (n == 0) fail(ErrorKind::inference, "empty estimation sample");
  if (sample.w.size() != n || sample.household.size() != n || sample.year.size() != n) {
    fail(ErrorKind::data, "estimation sample columns differ in length");
  }
  const bool fe = model != Model::weather_only;
  const bool inputs = model == Model::fixed_effects_inputs;
  if (inputs && static_cast<std::size_t>(sample.inputs.rows()) != n) {
    fail(ErrorKind::data, "input covariates missing from estimation sample");
  }
  const auto N = static_cast<Eigen::Index>(n);

  const DenseClusters households = densify(sample.household);
  std::vector<double> group_size(households.count, 0.0);
  for (auto g : households.code) group_size[g] += 1.0;

  auto make_column = [&](Eigen::VectorXd v) {
    Column c;
    c.raw_norm = v.norm();
    if (fe) demean(v, households.code, households.count, group_size);
    c.values = std::move(v);
    return c;
  };

  std::vector<Column> nuisance;
  if (!fe) {
    nuisance.push_back(make_column(Eigen::VectorXd::Ones(N)));
  } else {
    std::vector<int> years(sample.year.begin(), sample.year.end());
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());
    for (std::size_t k = 1; k < years.size(); ++k) {
      Eigen::VectorXd d(N);
      for (Eigen::Index i = 0; i < N; ++i) d(i) = sample.year[static_cast<std::size_t>(i)] == years[k] ? 1.0 : 0.0;
      nuisance.push_back(make_column(std::move(d)));
    }
    if (inputs) {
      for (Eigen::Index j = 0; j < sample.inputs.cols(); ++j) nuisance.push_back(make_column(sample.inputs.col(j)));
    }
  }

  const Eigen::Map<const Eigen::VectorXd> w_raw(sample.w.data(), N);
  std::vector<Column> weather;
  weather.push_back(make_column(w_raw));
  if (quadratic) {
    const double centre = w_raw.mean();
    weather.push_back(make_column((w_raw.array() - centre).square().matrix()));
  }

  Estimate est;
  RankScreen screen(options.collinearity_tol);
  std::vector<const Column*> kept;
  for (const auto& c : nuisance) {
    if (screen.accept(c)) {
      kept.push_back(&c);
    } else {
      ++est.n_omitted;
    }
  }
  const auto w_index = static_cast<Eigen::Index>(kept.size());
  for (std::size_t k = 0; k < weather.size(); ++k) {
    if (!screen.accept(weather[k])) {
      fail(ErrorKind::singularity, std::string(k == 0 ? "weather metric" : "squared weather metric") +
                                       " is collinear with the " +
                                       (fe ? "fixed effects and controls" : "intercept") + " (no usable variation)");
    }
    kept.push_back(&weather[k]);
  }

  Eigen::MatrixXd X(N, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = kept[j]->values;
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(sample.y.data(), N);
  if (fe) demean(y, households.code, households.count, group_size);

  const std::size_t absorbed = fe ? households.count : 0;
  est.n_obs = n;
  est.n_clusters = households.count;
  est.n_params = static_cast<std::size_t>(X.cols()) + absorbed;
  check_inference(est.n_clusters, est.n_obs, est.n_params);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) fail(ErrorKind::singularity, "design matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd u = y - X * beta;
  est.rss = u.squaredNorm();

  const Eigen::MatrixXd bread = bread_from_qr(qr);
  const Eigen::MatrixXd vcov =
      cluster_correction(est.n_clusters, est.n_obs, est.n_params) * (bread * meat(X, u, households) * bread);

  est.beta1 = beta(w_index);
  const double var = vcov(w_index, w_index);
  if (!(var > 0.0)) fail(ErrorKind::inference, "clustered variance of the weather coefficient is zero");
  est.se_beta1 = std::sqrt(var);
  est.t_stat = est.beta1 / est.se_beta1;
  const double df = static_cast<double>(est.n_clusters - 1);
  est.p_value = student_t_two_sided_p(est.t_stat, df);
  const double crit = student_t_quantile(0.5 + 0.5 * options.ci_level, df);
  est.ci_low = est.beta1 - crit * est.se_beta1;
  est.ci_high = est.beta1 + crit * est.se_beta1;
  const double nn = static_cast<double>(n);
  est.loglik = -0.5 * nn * (std::log(2.0 * std::numbers::pi) + std::log(est.rss / nn) + 1.0);
  return est;
}

// ---- MetricTable -----------------------------------------------------------

namespace {

std::string metric_key(std::string_view household, std::string_view product, int year) {
  std::string k;
  k.reserve(household.size() + product.size() + 8);
  k.append(household);
  k.push_back('\x1f');
  k.append(product);
  k.push_back('\x1f');
  k.append(std::to_string(year));
  return k;
}

}  // namespace

MetricTable::MetricTable(std::vector<MetricVector> rows) : rows_(std::move(rows)) {
  index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    auto [it, inserted] = index_.emplace(metric_key(r.household_id, r.product_id, r.season_label_year), i);
    if (!inserted) {
      fail(ErrorKind::data, "duplicate metric row for household '" + r.household_id + "', product '" + r.product_id +
                                "', season " + std::to_string(r.season_label_year));
    }
  }
}

const MetricVector* MetricTable::find(std::string_view household, std::string_view product, int season_year) const {
  auto it = index_.find(metric_key(household, product, season_year));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

std::vector<const MetricVector*> align_metrics(std::span<const PanelRow> panel, const MetricTable& metrics,
                                               std::string_view product, const WaveMap& waves) {
  std::vector<const MetricVector*> out;
  out.reserve(panel.size());
  for (const auto& r : panel) {
    out.push_back(metrics.find(r.household_id, product, waves.season_for(r.country_id, r.year)));
  }
  return out;
}

RegressionSample build_sample(const RegressionSpec& spec, std::span<const PanelRow> panel,
                              std::span<const MetricVector* const> aligned, std::size_t* n_dropped) {
  if (aligned.size() != panel.size()) fail(ErrorKind::data, "metric alignment does not match the panel");
  const bool inputs = spec.model == Model::fixed_effects_inputs;
  RegressionSample s;
  std::unordered_map<std::string_view, std::uint32_t> hh_code;
  std::vector<std::array<double, 5>> x;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const PanelRow& r = panel[i];
    if (r.country_id != spec.country_id) continue;
    const double outcome = spec.outcome == Outcome::farm_value ? r.outcome_value_usd_ha : r.outcome_yield_kg_ha;
    const double w = aligned[i] ? (*aligned[i])[spec.metric] : std::numeric_limits<double>::quiet_NaN();
    const std::array<double, 5> in{r.fert_kg_ha, r.labor_days_ha, r.pesticide, r.herbicide, r.irrigation};
    bool complete = !std::isnan(outcome) && !std::isnan(w);
    if (inputs) {
      for (double v : in) complete = complete && !std::isnan(v);
    }
    if (!complete) {
      ++dropped;
      continue;
    }
    auto [it, inserted] = hh_code.emplace(r.household_id, static_cast<std::uint32_t>(hh_code.size()));
    s.y.push_back(ihs(outcome));
    s.w.push_back(w);
    s.household.push_back(it->second);
    s.year.push_back(r.year);
    if (inputs) x.push_back(in);
  }
  if (inputs) {
    s.inputs.resize(static_cast<Eigen::Index>(x.size()), 5);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (Eigen::Index j = 0; j < 5; ++j) s.inputs(static_cast<Eigen::Index>(i), j) = x[i][static_cast<std::size_t>(j)];
    }
  }
  if (n_dropped) *n_dropped = dropped;
  return s;
}

RegressionResult fit(const RegressionSpec& spec, std::span<const PanelRow> panel,
                     std::span<const MetricVector* const> aligned, const EstimatorOptions& options) {
  RegressionResult r;
  r.spec = spec;
  const RegressionSample sample = build_sample(spec, panel, aligned, &r.n_dropped);
  try {
    const Estimate e = estimate(spec.model, spec.quadratic, sample, options);
    r.beta1 = e.beta1;
    r.se_beta1 = e.se_beta1;
    r.t_stat = e.t_stat;
    r.p_value = e.p_value;
    r.ci_low = e.ci_low;
    r.ci_high = e.ci_high;
    r.loglik = e.loglik;
    r.n_obs = e.n_obs;
    r.n_clusters = e.n_clusters;
    r.n_params = e.n_params;
    r.n_omitted = e.n_omitted;
  } catch (const Error& e) {
    throw Error(e.kind(), spec.id() + ": " + e.what());
  }
  return r;
}

RegressionResult fit(const RegressionSpec& spec, std::span<const PanelRow> panel, const MetricTable& metrics,
                     const WaveMap& waves, const EstimatorOptions& options) {
  const auto aligned = align_metrics(panel, metrics, spec.product_id, waves);
  return fit(spec, panel, aligned, options);
}

}  // namespace eob
