#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eob/grid_store.hpp"
#include "eob/robustness_harness.hpp"
#include "eob/synthetic_bench.hpp"
#include "eob/weather_metrics.hpp"

namespace eob {

inline constexpr std::string_view kToolVersion = "0.3.0";

enum class Stage { synth, ingest, extract, metrics, battery, analyze };
std::string_view to_string(Stage s);
// "all" expands to every applicable stage in dependency order.
std::vector<Stage> parse_stage_selector(std::string_view text, bool has_synth);

struct InputPaths {
  std::optional<std::filesystem::path> grids;
  std::optional<std::filesystem::path> coordinates;
  std::optional<std::filesystem::path> panel;
  std::optional<std::filesystem::path> waves;
  std::optional<std::filesystem::path> calendars;
};

struct AnalysisOptions {
  double alpha = 0.05;
  std::vector<double> levels{0.01, 0.05, 0.10};
  bool rank_by_abs = false;
  std::vector<MetricId> descriptive_metrics{MetricId::no_rain_days, MetricId::gdd};
};

// One JSON file with sections synth, inputs, metrics, battery, analysis.
// Relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path base_dir;
  nlohmann::json raw;
  std::optional<SynthConfig> synth;
  InputPaths inputs;
  MetricOptions metrics;
  Extraction extraction = Extraction::nearest;
  BatteryConfig battery;
  AnalysisOptions analysis;

  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir, std::uint64_t seed);
  static PipelineConfig load(const std::filesystem::path& path, std::uint64_t seed);
  // Canonical JSON of one section, used for stage cache keys.
  nlohmann::json section(Stage s) const;
};

struct RunRequest {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out_dir;  // default: "out" next to the config
  std::string stage = "all";
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool force = false;
  bool blind = false;
  std::optional<std::filesystem::path> unblind_map;
  std::ostream* log = nullptr;
};

struct StageReport {
  Stage stage = Stage::ingest;
  bool skipped = false;
  std::vector<std::filesystem::path> outputs;
};

struct RunReport {
  std::filesystem::path out_dir;
  std::vector<StageReport> stages;
  std::size_t battery_total = 0;
  std::size_t battery_failed = 0;
};

// Executes the selected stages. Throws eob::Error; Error::kind maps to the
// process exit code.
RunReport run_pipeline(const RunRequest& request);

// Fixed output locations under the run directory.
struct OutputLayout {
  std::filesystem::path root;
  std::filesystem::path synth() const { return root / "synth"; }
  std::filesystem::path ingest() const { return root / "ingest"; }
  std::filesystem::path extract() const { return root / "extract"; }
  std::filesystem::path metrics() const { return root / "metrics"; }
  std::filesystem::path battery() const { return root / "battery"; }
  std::filesystem::path analysis() const { return root / "analysis"; }
  std::filesystem::path blindmap() const { return root / "blinding" / "blindmap.json"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
};

// Wide metric table: household_id,product_id,country,season_year,<22 metrics>.
void write_metrics_wide(const std::filesystem::path& path, std::span<const MetricVector> rows);
std::vector<MetricVector> read_metrics_wide(const std::filesystem::path& path);
// Long form: household_id,product_id,country,season_year,metric_id,value (finite values only).
void write_metrics_long(const std::filesystem::path& path, std::span<const MetricVector> rows);

// Writes the per-country summary table; prints it to `out` when given.
std::vector<PanelSummaryRow> summarize_panel_file(const std::filesystem::path& panel_path,
                                                  const std::optional<std::filesystem::path>& csv_out);

}  // namespace eob
