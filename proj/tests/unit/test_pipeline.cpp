#include <doctest.h>

#include <fstream>
#include <sstream>

#include "eob/error.hpp"
#include "eob/pipeline.hpp"
#include "oracles.hpp"

using namespace eob;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "synth": {"countries": ["Niger", "Nigeria"], "households_per_country": 30, "n_years": 3,
            "first_survey_year": 2013, "weather_start_year": 2009,
            "grid": {"rows_per_country": 4, "n_cols": 4}},
  "battery": {"rain_metrics": ["total", "z_total", "no_rain_days"], "temp_metrics": ["gdd", "mean_tmax"]},
  "analysis": {"alpha": 0.05}
})";

fs::path write_config(const oracle::TempDir& dir, const std::string& text = kConfig) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Concatenated bytes of every file below `dir`, in path order.
std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + slurp(f);
  return all;
}

RunRequest request(const fs::path& config, const fs::path& out) {
  RunRequest r;
  r.config_path = config;
  r.out_dir = out;
  r.seed = 3;
  return r;
}

std::size_t skipped(const RunReport& r) {
  std::size_t n = 0;
  for (const auto& s : r.stages) n += s.skipped;
  return n;
}

ErrorKind kind_of(const RunRequest& r) {
  try {
    run_pipeline(r);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("stage selector") {
  const auto all = parse_stage_selector("all", true);
  CHECK(all.size() == 6);
  CHECK(all.front() == Stage::synth);
  CHECK(parse_stage_selector("all", false).size() == 5);
  CHECK(parse_stage_selector("battery", false) == std::vector<Stage>{Stage::battery});
  CHECK_THROWS_AS(parse_stage_selector("bogus", true), Error);
  CHECK_THROWS_AS(parse_stage_selector("synth", false), Error);
}

TEST_CASE("config validation") {
  oracle::TempDir dir("pipe");
  CHECK_THROWS_AS(PipelineConfig::load(dir / "missing.json", 0), Error);
  auto cfg = PipelineConfig::from_json(nlohmann::json::parse(kConfig), dir.path(), 1);
  CHECK(cfg.synth.has_value());
  CHECK(cfg.battery.countries == std::vector<std::string>{"Niger", "Nigeria"});
  CHECK(cfg.battery.rain_products.size() == 4);
  CHECK(cfg.battery.temp_products.size() == 4);
  auto j = nlohmann::json::parse(kConfig);
  j.erase("synth");
  try {
    PipelineConfig::from_json(j, dir.path(), 1);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  j = nlohmann::json::parse(kConfig);
  j["analysis"]["alpha"] = 2.0;
  CHECK_THROWS_AS(PipelineConfig::from_json(j, dir.path(), 1), Error);
}

TEST_CASE("metric table csv round trip") {
  oracle::TempDir dir("pipe");
  MetricVector m;
  m.household_id = "h1";
  m.product_id = "P";
  m.country_id = "Mali";
  m.season_label_year = 2014;
  m[MetricId::total] = 512.25;
  m[MetricId::z_total] = -1.0 / 3.0;
  write_metrics_wide(dir / "w.csv", std::vector<MetricVector>{m});
  const auto back = read_metrics_wide(dir / "w.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0][MetricId::total] == 512.25);
  CHECK(back[0][MetricId::z_total] == m[MetricId::z_total]);
  CHECK(std::isnan(back[0][MetricId::gdd]));
}

TEST_CASE("full run, caching and rerun of changed stages") {
  oracle::TempDir dir("pipe");
  const auto cfg = write_config(dir);
  auto req = request(cfg, dir / "out");
  const auto first = run_pipeline(req);
  CHECK(first.stages.size() == 6);
  CHECK(skipped(first) == 0);
  // 3 models x 2 outcomes x 2 countries x (3 + 2 metrics) x 4 products
  CHECK(first.battery_total == 3 * 2 * 2 * 5 * 4);
  const OutputLayout out{dir / "out"};
  CHECK(fs::exists(out.analysis() / "heuristics.csv"));
  CHECK(fs::exists(out.analysis() / "specchart" / "Niger.total.json"));
  CHECK(fs::exists(out.analysis() / "bumpline" / "Nigeria.gdd.json"));
  CHECK(fs::exists(out.analysis() / "descriptives" / "no_rain_days.csv"));
  CHECK_FALSE(fs::exists(out.battery() / "checkpoint.jsonl"));
  const auto manifest = nlohmann::json::parse(slurp(out.manifest()));
  CHECK(manifest["stages"].size() == 6);
  const auto analysis = tree_bytes(out.analysis());

  const auto second = run_pipeline(req);
  CHECK(skipped(second) == 6);
  CHECK(second.battery_total == first.battery_total);
  CHECK(tree_bytes(out.analysis()) == analysis);

  // only the analysis section changes
  std::string text = kConfig;
  text.replace(text.find("0.05"), 4, "0.10");
  write_config(dir, text);
  const auto third = run_pipeline(req);
  CHECK(skipped(third) == 5);
  CHECK_FALSE(third.stages.back().skipped);

  req.force = true;
  CHECK(skipped(run_pipeline(req)) == 0);
}

TEST_CASE("worker count does not change outputs") {
  oracle::TempDir dir("pipe");
  const auto cfg = write_config(dir);
  auto a = request(cfg, dir / "a");
  auto b = request(cfg, dir / "b");
  b.workers = 4;
  run_pipeline(a);
  run_pipeline(b);
  CHECK(tree_bytes(dir / "a" / "analysis") == tree_bytes(dir / "b" / "analysis"));
  CHECK(slurp(dir / "a" / "battery" / "results.jsonl") == slurp(dir / "b" / "battery" / "results.jsonl"));
  CHECK(slurp(dir / "a" / "metrics" / "metrics_wide.csv") == slurp(dir / "b" / "metrics" / "metrics_wide.csv"));
}

TEST_CASE("missing upstream outputs are dependency errors") {
  oracle::TempDir dir("pipe");
  const auto cfg = write_config(dir);
  auto req = request(cfg, dir / "out");
  req.stage = "metrics";
  try {
    run_pipeline(req);
    FAIL("expected dependency error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dependency);
    CHECK(std::string(e.what()).find("stage 'extract'") != std::string::npos);
  }
  req.stage = "analyze";
  CHECK(kind_of(req) == ErrorKind::dependency);
  req.stage = "all";
  req.workers = 0;
  CHECK(kind_of(req) == ErrorKind::config);
}

TEST_CASE("blinded run and later unblinding") {
  oracle::TempDir dir("pipe");
  const auto cfg = write_config(dir);
  auto plain = request(cfg, dir / "plain");
  run_pipeline(plain);

  auto blind = request(cfg, dir / "blind");
  blind.blind = true;
  run_pipeline(blind);
  const OutputLayout out{dir / "blind"};
  REQUIRE(fs::exists(out.blindmap()));
  const auto results = slurp(out.battery() / "results.jsonl");
  CHECK(results.find("\"EO-") != std::string::npos);
  CHECK(results.find("IDENT") == std::string::npos);
  CHECK(slurp(out.analysis() / "descriptives" / "no_rain_days.csv").find("IDENT") == std::string::npos);

  auto unblind = request(cfg, dir / "blind");
  unblind.stage = "analyze";
  unblind.unblind_map = out.blindmap();
  run_pipeline(unblind);
  CHECK(slurp(out.battery() / "results.unblinded.jsonl") == slurp(dir / "plain" / "battery" / "results.jsonl"));
  CHECK(tree_bytes(out.analysis()) == tree_bytes(dir / "plain" / "analysis"));

  // unblinding results that were never blinded
  auto wrong = request(cfg, dir / "plain");
  wrong.stage = "analyze";
  wrong.unblind_map = out.blindmap();
  CHECK(kind_of(wrong) == ErrorKind::config);
}

TEST_CASE("panel summary from file") {
  oracle::TempDir dir("pipe");
  const auto cfg = write_config(dir);
  auto req = request(cfg, dir / "out");
  req.stage = "synth";
  run_pipeline(req);
  const auto rows = summarize_panel_file(dir / "out" / "synth" / "panel.csv", dir / "summary.csv");
  CHECK(rows.size() == 4);
  CHECK(rows[0].n_households == 30);
  CHECK(fs::exists(dir / "summary.csv"));
}
