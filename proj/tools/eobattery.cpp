// eobattery: command line front end for the weather-product robustness pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eob/csv.hpp"
#include "eob/error.hpp"
#include "eob/pipeline.hpp"
#include "eob/robustness_harness.hpp"

namespace {

void print_summary(const std::vector<eob::PanelSummaryRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.country_id << " [" << r.block << "] obs=" << r.n_obs << " households=" << r.n_households << '\n';
    for (const auto& s : r.stats) {
      std::cout << "  " << s.name << ": " << eob::csv::format_number(s.mean) << " ("
                << eob::csv::format_number(s.sd) << ")\n";
    }
  }
}

int cmd_enumerate(const std::string& config_path, bool count_only) {
  std::ifstream in(config_path);
  if (!in) eob::fail(eob::ErrorKind::config, "cannot open " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    eob::fail(eob::ErrorKind::config, e.what());
  }
  const auto cfg = eob::BatteryConfig::from_json(j.contains("battery") ? j.at("battery") : j);
  const auto specs = eob::enumerate(cfg);
  if (!count_only) {
    for (const auto& s : specs) std::cout << s.id() << '\n';
  }
  std::cerr << specs.size() << " specs, " << eob::count_data_versions(cfg) << " data versions\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression-battery robustness of earth-observation weather products"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(eob::kToolVersion));

  eob::RunRequest req;
  std::string unblind_map;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run pipeline stages");
  run->add_option("--config", req.config_path, "Pipeline config (JSON)")->required();
  run->add_option("--stage", req.stage, "synth|ingest|extract|metrics|battery|analyze|all")
      ->check(CLI::IsMember({"synth", "ingest", "extract", "metrics", "battery", "analyze", "all"}));
  run->add_option("--workers", req.workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--seed", req.seed, "Base seed for all randomness");
  run->add_option("--out", out_dir, "Output directory (default: out/ next to the config)");
  run->add_flag("--force", req.force, "Ignore cached stage results");
  auto* blind_flag = run->add_flag("--blind", req.blind, "Replace product ids by anonymous labels in battery output");
  run->add_option("--unblind", unblind_map, "Blinding map used to relabel results before analysis")
      ->check(CLI::ExistingFile)
      ->excludes(blind_flag);
  bool quiet = false;
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string panel_path, summary_out;
  auto* ps = app.add_subcommand("panel-summary", "Per-country means and sds of a household panel");
  ps->add_option("panel", panel_path, "Panel CSV")->required();
  ps->add_option("--csv", summary_out, "Also write the table as CSV");

  std::string enum_config;
  bool count_only = false;
  auto* en = app.add_subcommand("enumerate", "List the specification ids of a battery config");
  en->add_option("--config", enum_config, "Pipeline or battery config")->required();
  en->add_flag("--count", count_only, "Only print counts");

  std::string ub_results, ub_map, ub_config, ub_out;
  auto* ub = app.add_subcommand("unblind", "Relabel a blinded results file");
  ub->add_option("--results", ub_results, "Blinded results.jsonl")->required()->check(CLI::ExistingFile);
  ub->add_option("--map", ub_map, "blindmap.json")->required()->check(CLI::ExistingFile);
  ub->add_option("--config", ub_config, "Pipeline config the battery ran with")->required()->check(CLI::ExistingFile);
  ub->add_option("--seed", req.seed, "Seed the battery ran with");
  ub->add_option("--out", ub_out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      if (!out_dir.empty()) req.out_dir = out_dir;
      if (!unblind_map.empty()) req.unblind_map = unblind_map;
      if (!quiet) req.log = &std::cerr;
      const auto report = eob::run_pipeline(req);
      if (report.battery_total > 0 && report.battery_failed > 0) {
        std::cerr << "battery: " << report.battery_failed << " of " << report.battery_total
                  << " specs failed; see " << (report.out_dir / "battery" / "failures.csv").string() << '\n';
      }
      return 0;
    }
    if (*ps) {
      const auto rows = eob::summarize_panel_file(panel_path, summary_out.empty()
                                                                  ? std::nullopt
                                                                  : std::optional<std::filesystem::path>(summary_out));
      print_summary(rows);
      return 0;
    }
    if (*en) return cmd_enumerate(enum_config, count_only);
    if (*ub) {
      const auto cfg = eob::PipelineConfig::load(ub_config, req.seed);
      const auto store = eob::unblind(eob::ResultStore::read_jsonl(ub_results), eob::BlindingMap::load(ub_map), cfg.battery);
      store.write_jsonl(std::filesystem::path(ub_out));
      return 0;
    }
  } catch (const eob::Error& e) {
    std::cerr << "error (" << eob::to_string(e.kind()) << "): " << e.what() << '\n';
    return eob::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
