#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eob/error.hpp"
#include "eob/panel_econometrics.hpp"

namespace eob {

struct BatteryConfig {
  std::vector<std::string> countries;
  std::vector<std::string> rain_products;
  std::vector<std::string> temp_products;
  std::vector<MetricId> rain_metrics;
  std::vector<MetricId> temp_metrics;
  std::vector<Model> models{Model::weather_only, Model::fixed_effects, Model::fixed_effects_inputs};
  std::vector<Outcome> outcomes{Outcome::farm_value, Outcome::primary_yield};
  // Adds a weather-squared variant of every linear spec.
  bool quadratic = false;
  std::uint64_t blinding_seed = 0;

  // Six countries, six rainfall and three temperature products, all 22
  // metrics, three models, two outcomes.
  static BatteryConfig full_design();

  // Missing metric lists default to all metrics of that kind.
  static BatteryConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  // SHA-256 of the canonical JSON form, excluding the blinding seed.
  std::string sha256() const;
};

// Deterministic list of specs sorted by id.
std::vector<RegressionSpec> enumerate(const BatteryConfig& config);
// models x outcomes x countries x (rain metrics x rain products + temp metrics x temp products),
// doubled when quadratic variants are on.
std::size_t expected_spec_count(const BatteryConfig& config);
// Distinct (country, metric, product) combinations.
std::size_t count_data_versions(const BatteryConfig& config);

// Seeded bijection between product ids and anonymous "EO-k" labels.
class BlindingMap {
 public:
  BlindingMap() = default;

  std::uint64_t seed() const { return seed_; }
  const std::string& config_sha256() const { return config_sha256_; }
  const std::map<std::string, std::string>& labels() const { return label_of_; }

  const std::string& label(const std::string& product) const;
  const std::string& product(const std::string& label) const;

  nlohmann::json to_json() const;
  static BlindingMap from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static BlindingMap load(const std::filesystem::path& path);

  friend BlindingMap blind(const BatteryConfig& config, std::uint64_t seed);

 private:
  std::uint64_t seed_ = 0;
  std::string config_sha256_;
  std::map<std::string, std::string> label_of_;
  std::map<std::string, std::string> product_of_;
};

BlindingMap blind(const BatteryConfig& config, std::uint64_t seed);

// One battery cell as emitted: the regression spec (blinded or not), and either the
// estimate or the captured failure.
struct SpecOutcome {
  RegressionSpec spec;
  std::optional<RegressionResult> result;
  ErrorKind error_kind = ErrorKind::data;
  std::string error;
  std::size_t n_dropped = 0;

  bool ok() const { return result.has_value(); }
  std::string id() const { return spec.id(); }
};

nlohmann::ordered_json to_json(const SpecOutcome& outcome);
SpecOutcome spec_outcome_from_json(const nlohmann::json& j);

class ResultStore {
 public:
  ResultStore() = default;
  explicit ResultStore(std::vector<SpecOutcome> entries);

  const std::vector<SpecOutcome>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t n_failed() const;
  bool blinded() const { return blinded_; }
  void set_blinded(bool b) { blinded_ = b; }

  // JSON lines, one record per spec, in spec-id order.
  void write_jsonl(std::ostream& out) const;
  void write_jsonl(const std::filesystem::path& path) const;
  static ResultStore read_jsonl(const std::filesystem::path& path);
  // spec_id,error_kind,message followed by per-kind counts.
  void write_failures_csv(const std::filesystem::path& path) const;

 private:
  std::vector<SpecOutcome> entries_;
  bool blinded_ = false;
};

struct RunOptions {
  std::size_t workers = 1;
  const BlindingMap* blinding = nullptr;
  EstimatorOptions estimator;
  // Resumability: completed specs are appended here as they finish and
  // reused on the next run when their cache key matches.
  std::optional<std::filesystem::path> checkpoint;
  // Content hash of all inputs (panel, metrics, estimator settings).
  std::string input_hash;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct RunStats {
  std::size_t executed = 0;
  std::size_t reused = 0;
};

// Executes every enumerated spec. Per-spec failures are captured in the
// store; the battery itself only fails on configuration errors.
ResultStore run(const BatteryConfig& config, std::span<const PanelRow> panel, const MetricTable& metrics,
                const WaveMap& waves, const RunOptions& options = {}, RunStats* stats = nullptr);

// Replaces anonymous labels by product ids and re-sorts. The map must have
// been issued for this configuration.
ResultStore unblind(const ResultStore& store, const BlindingMap& map, const BatteryConfig& config);

}  // namespace eob
