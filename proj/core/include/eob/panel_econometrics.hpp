#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "eob/panel.hpp"
#include "eob/season_calendar.hpp"
#include "eob/weather_metrics.hpp"

namespace eob {

enum class Model {
  weather_only,          // M1: pooled OLS on [1, W]
  fixed_effects,         // M2: household and year fixed effects
  fixed_effects_inputs,  // M3: M2 plus the five input covariates
};

enum class Outcome { farm_value, primary_yield };

std::string_view to_string(Model m);  // "M1", "M2", "M3"
std::string_view to_string(Outcome o);
Model parse_model(std::string_view text);
Outcome parse_outcome(std::string_view text);

struct RegressionSpec {
  std::string country_id;
  Model model = Model::weather_only;
  Outcome outcome = Outcome::farm_value;
  MetricId metric = MetricId::total;
  std::string product_id;
  bool quadratic = false;

  // country.model.outcome.metric.product[.quad]
  std::string id() const;
  static RegressionSpec parse_id(std::string_view id);
  friend bool operator==(const RegressionSpec&, const RegressionSpec&) = default;
};

struct RegressionResult {
  RegressionSpec spec;
  double beta1 = 0.0;
  double se_beta1 = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double loglik = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::size_t n_params = 0;   // includes absorbed household effects
  std::size_t n_dropped = 0;  // listwise deletions
  std::size_t n_omitted = 0;  // collinear nuisance columns dropped
};

// Inverse hyperbolic sine, ln(y + sqrt(y^2 + 1)).
double ihs(double y);

// Listwise-complete estimation sample. Household and year codes are dense.
struct RegressionSample {
  std::vector<double> y;  // ihs(outcome)
  std::vector<double> w;
  std::vector<std::uint32_t> household;
  std::vector<int> year;
  Eigen::MatrixXd inputs;  // n x 5 for M3, otherwise empty

  std::size_t size() const { return y.size(); }
};

struct Estimate {
  double beta1 = 0.0;
  double se_beta1 = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double loglik = 0.0;
  double rss = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::size_t n_params = 0;
  std::size_t n_omitted = 0;
};

struct EstimatorOptions {
  double ci_level = 0.95;
  double collinearity_tol = 1e-10;
};

// Fits one model on a prepared sample. Household effects are absorbed by
// within-demeaning; year effects enter as dummies with the first year
// dropped. Errors are clustered by household with the CR1 factor
// G/(G-1) * (N-1)/(N-K) and referenced to Student-t with G-1 degrees of
// freedom. A quadratic fit centres W before squaring and reports the
// linear term.
Estimate estimate(Model model, bool quadratic, const RegressionSample& sample, const EstimatorOptions& options = {});

// (X'X)^-1 (sum_g X_g' u_g u_g' X_g) (X'X)^-1 scaled by
// G/(G-1) * (N-1)/(N-K) where K = X.cols() + absorbed_params.
Eigen::MatrixXd cluster_sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                 std::span<const std::uint32_t> cluster_ids, std::size_t absorbed_params = 0);
double cluster_correction(std::size_t n_clusters, std::size_t n_obs, std::size_t n_params);

double student_t_two_sided_p(double t, double df);
double student_t_quantile(double prob, double df);

// Metric vectors indexed by (household, product, season year).
class MetricTable {
 public:
  MetricTable() = default;
  explicit MetricTable(std::vector<MetricVector> rows);

  const MetricVector* find(std::string_view household, std::string_view product, int season_year) const;
  const std::vector<MetricVector>& rows() const { return rows_; }

 private:
  std::vector<MetricVector> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// For each panel row, the matching metric vector of `product` (or null),
// after mapping survey years to season labels.
std::vector<const MetricVector*> align_metrics(std::span<const PanelRow> panel, const MetricTable& metrics,
                                               std::string_view product, const WaveMap& waves);

// Builds the listwise-complete sample for `spec` from rows of spec.country.
// `aligned` runs parallel to `panel`.
RegressionSample build_sample(const RegressionSpec& spec, std::span<const PanelRow> panel,
                              std::span<const MetricVector* const> aligned, std::size_t* n_dropped = nullptr);

RegressionResult fit(const RegressionSpec& spec, std::span<const PanelRow> panel,
                     std::span<const MetricVector* const> aligned, const EstimatorOptions& options = {});
RegressionResult fit(const RegressionSpec& spec, std::span<const PanelRow> panel, const MetricTable& metrics,
                     const WaveMap& waves = {}, const EstimatorOptions& options = {});

}  // namespace eob
