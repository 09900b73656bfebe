#include "eob/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "eob/csv.hpp"
#include "eob/hashing.hpp"
#include "eob/inference_heuristics.hpp"
#include "eob/panel.hpp"
#include "eob/random.hpp"

namespace eob {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::ingest: return "ingest";
    case Stage::extract: return "extract";
    case Stage::metrics: return "metrics";
    case Stage::battery: return "battery";
    case Stage::analyze: return "analyze";
  }
  return "?";
}

std::vector<Stage> parse_stage_selector(std::string_view text, bool has_synth) {
  if (text == "all") {
    std::vector<Stage> all{Stage::ingest, Stage::extract, Stage::metrics, Stage::battery, Stage::analyze};
    if (has_synth) all.insert(all.begin(), Stage::synth);
    return all;
  }
  for (auto s : {Stage::synth, Stage::ingest, Stage::extract, Stage::metrics, Stage::battery, Stage::analyze}) {
    if (to_string(s) == text) {
      if (s == Stage::synth && !has_synth) fail(ErrorKind::config, "stage synth needs a 'synth' section in the config");
      return {s};
    }
  }
  fail(ErrorKind::config, "unknown stage '" + std::string(text) + "'");
}

// ---- configuration ---------------------------------------------------------

namespace {

std::optional<fs::path> path_field(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

MetricOptions metric_options_from_json(const json& j) {
  MetricOptions o;
  o.rain_threshold_mm = j.value("rain_threshold_mm", o.rain_threshold_mm);
  o.gdd_base_c = j.value("gdd_base_c", o.gdd_base_c);
  o.gdd_upper_c = j.value("gdd_upper_c", o.gdd_upper_c);
  const std::string mode = j.value("gdd_mode", "accumulate");
  if (mode == "accumulate") {
    o.gdd_mode = GddMode::accumulate;
  } else if (mode == "count_days_in_bound") {
    o.gdd_mode = GddMode::count_days_in_bound;
  } else {
    fail(ErrorKind::config, "metrics.gdd_mode must be accumulate or count_days_in_bound");
  }
  o.max_missing_fraction = j.value("max_missing_fraction", o.max_missing_fraction);
  o.missing_as_dry = j.value("missing_as_dry", o.missing_as_dry);
  if (j.contains("long_run_start")) o.long_run_start = parse_date(j.at("long_run_start").get<std::string>());
  if (!(o.gdd_upper_c > o.gdd_base_c)) fail(ErrorKind::config, "metrics: gdd_upper_c must exceed gdd_base_c");
  if (!(o.max_missing_fraction >= 0 && o.max_missing_fraction <= 1)) {
    fail(ErrorKind::config, "metrics: max_missing_fraction must lie in [0, 1]");
  }
  return o;
}

json metric_options_to_json(const MetricOptions& o, Extraction e) {
  return {{"rain_threshold_mm", o.rain_threshold_mm},
          {"gdd_base_c", o.gdd_base_c},
          {"gdd_upper_c", o.gdd_upper_c},
          {"gdd_mode", o.gdd_mode == GddMode::accumulate ? "accumulate" : "count_days_in_bound"},
          {"max_missing_fraction", o.max_missing_fraction},
          {"missing_as_dry", o.missing_as_dry},
          {"long_run_start", format_date(o.long_run_start)},
          {"extraction", e == Extraction::nearest ? "nearest" : "bilinear"}};
}

json analysis_to_json(const AnalysisOptions& a) {
  std::vector<std::string> d;
  for (auto m : a.descriptive_metrics) d.emplace_back(to_string(m));
  return {{"alpha", a.alpha}, {"levels", a.levels}, {"rank_by", a.rank_by_abs ? "abs_beta" : "beta"},
          {"descriptive_metrics", d}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir, std::uint64_t seed) {
  if (!j.is_object()) fail(ErrorKind::config, "config must be a JSON object");
  PipelineConfig c;
  c.base_dir = base_dir;
  c.raw = j;
  try {
    if (j.contains("synth")) {
      json s = j.at("synth");
      s["seed"] = derive_seed(seed, "synth");
      c.synth = SynthConfig::from_json(s);
    }
    const json inputs = j.value("inputs", json::object());
    c.inputs.grids = path_field(inputs, "grids", base_dir);
    c.inputs.coordinates = path_field(inputs, "coordinates", base_dir);
    c.inputs.panel = path_field(inputs, "panel", base_dir);
    c.inputs.waves = path_field(inputs, "waves", base_dir);
    c.inputs.calendars = path_field(inputs, "calendars", base_dir);
    if (!c.synth && (!c.inputs.grids || !c.inputs.coordinates || !c.inputs.panel)) {
      fail(ErrorKind::config, "without a synth section, inputs.grids, inputs.coordinates and inputs.panel are required");
    }
    const json m = j.value("metrics", json::object());
    c.metrics = metric_options_from_json(m);
    const std::string ex = m.value("extraction", "nearest");
    if (ex == "nearest") {
      c.extraction = Extraction::nearest;
    } else if (ex == "bilinear") {
      c.extraction = Extraction::bilinear;
    } else {
      fail(ErrorKind::config, "metrics.extraction must be nearest or bilinear");
    }

    // Battery defaults follow the synthetic products when present.
    json b = j.value("battery", json::object());
    if (c.synth) {
      if (!b.contains("countries")) b["countries"] = c.synth->countries;
      std::vector<std::string> rain, temp;
      for (const auto& p : c.synth->products) {
        for (auto v : p.variables) {
          if (v == Variable::precip) rain.push_back(p.id);
          if (v == Variable::temp_mean) temp.push_back(p.id);
        }
      }
      if (!b.contains("rain_products")) b["rain_products"] = rain;
      if (!b.contains("temp_products")) b["temp_products"] = temp;
    }
    if (!b.contains("blinding_seed")) b["blinding_seed"] = derive_seed(seed, "blinding");
    c.battery = BatteryConfig::from_json(b);

    const json a = j.value("analysis", json::object());
    c.analysis.alpha = a.value("alpha", c.analysis.alpha);
    c.analysis.levels = a.value("levels", c.analysis.levels);
    const std::string rank_by = a.value("rank_by", "beta");
    if (rank_by != "beta" && rank_by != "abs_beta") fail(ErrorKind::config, "analysis.rank_by must be beta or abs_beta");
    c.analysis.rank_by_abs = rank_by == "abs_beta";
    if (a.contains("descriptive_metrics")) {
      c.analysis.descriptive_metrics.clear();
      for (const auto& x : a.at("descriptive_metrics")) c.analysis.descriptive_metrics.push_back(parse_metric(x.get<std::string>()));
    }
    if (!(c.analysis.alpha > 0 && c.analysis.alpha < 1)) fail(ErrorKind::config, "analysis.alpha must lie in (0, 1)");
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path(), seed);
}

json PipelineConfig::section(Stage s) const {
  switch (s) {
    case Stage::synth: return synth ? synth->to_json() : json();
    case Stage::ingest: return json::object();
    case Stage::extract: return {{"extraction", extraction == Extraction::nearest ? "nearest" : "bilinear"}};
    case Stage::metrics: return metric_options_to_json(metrics, extraction);
    case Stage::battery: return battery.to_json();
    case Stage::analyze: return analysis_to_json(analysis);
  }
  return json();
}

// ---- metric tables ---------------------------------------------------------

void write_metrics_wide(const fs::path& path, std::span<const MetricVector> rows) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "household_id,product_id,country,season_year";
  for (auto m : all_metrics()) out << ',' << to_string(m);
  out << '\n';
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.household_id) << ',' << csv::quote_if_needed(r.product_id) << ','
        << csv::quote_if_needed(r.country_id) << ',' << r.season_label_year;
    for (double v : r.values) out << ',' << csv::format_number(v);
    out << '\n';
  }
}

std::vector<MetricVector> read_metrics_wide(const fs::path& path) {
  const auto t = csv::Table::read(path);
  t.require_columns({"household_id", "product_id", "country", "season_year"});
  const auto h = t.column("household_id"), p = t.column("product_id"), c = t.column("country"),
             y = t.column("season_year");
  std::vector<std::pair<std::size_t, std::size_t>> cols;  // metric index, column
  for (auto m : all_metrics()) {
    if (auto col = t.find_column(to_string(m))) cols.emplace_back(static_cast<std::size_t>(m), *col);
  }
  std::vector<MetricVector> rows;
  rows.reserve(t.records().size());
  for (const auto& rec : t.records()) {
    MetricVector v;
    v.household_id = rec.fields[h];
    v.product_id = rec.fields[p];
    v.country_id = rec.fields[c];
    const auto year = csv::parse_int(rec.fields[y]);
    if (!year) fail(ErrorKind::data, path.string() + ":" + std::to_string(rec.line) + ": bad season_year");
    v.season_label_year = static_cast<int>(*year);
    for (const auto& [mi, col] : cols) {
      const auto x = csv::parse_double(rec.fields[col]);
      if (!x) fail(ErrorKind::data, path.string() + ":" + std::to_string(rec.line) + ": bad number");
      v.values[mi] = *x;
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

void write_metrics_long(const fs::path& path, std::span<const MetricVector> rows) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "household_id,product_id,country,season_year,metric_id,value\n";
  for (const auto& r : rows) {
    for (auto m : all_metrics()) {
      const double v = r[m];
      if (!std::isfinite(v)) continue;
      out << csv::quote_if_needed(r.household_id) << ',' << csv::quote_if_needed(r.product_id) << ','
          << csv::quote_if_needed(r.country_id) << ',' << r.season_label_year << ',' << to_string(m) << ','
          << csv::format_number(v) << '\n';
    }
  }
}

std::vector<PanelSummaryRow> summarize_panel_file(const fs::path& panel_path, const std::optional<fs::path>& csv_out) {
  const auto rows = read_panel(panel_path);
  auto summary = panel_summary(rows);
  if (csv_out) write_panel_summary(*csv_out, summary);
  return summary;
}

// ---- stage machinery -------------------------------------------------------

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string rel(const fs::path& p, const fs::path& root) {
  const auto r = p.lexically_relative(root);
  return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
}

struct FileHash {
  fs::path path;
  std::string sha256;
};

std::vector<FileHash> hash_files(std::vector<fs::path> files) {
  std::sort(files.begin(), files.end());
  std::vector<FileHash> out;
  for (auto& f : files) out.push_back({f, sha256_file(f)});
  return out;
}

// Regular files directly inside `dir` whose names end in one of `suffixes`.
std::vector<fs::path> files_in(const fs::path& dir, std::initializer_list<std::string_view> suffixes) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    for (auto s : suffixes) {
      if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
        out.push_back(e.path());
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

[[noreturn]] void missing(Stage stage, std::string_view needed_stage, const fs::path& what) {
  fail(ErrorKind::dependency, "stage '" + std::string(to_string(stage)) + "' needs the outputs of stage '" +
                                  std::string(needed_stage) + "': " + what.string() + " not found");
}

void require_file(Stage stage, std::string_view from, const fs::path& p) {
  if (!fs::is_regular_file(p)) missing(stage, from, p);
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
}

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

class Runner {
 public:
  Runner(const RunRequest& req, PipelineConfig cfg, OutputLayout out)
      : req_(req), cfg_(std::move(cfg)), out_(std::move(out)) {
    if (fs::exists(out_.manifest())) {
      try {
        manifest_ = read_json(out_.manifest());
      } catch (const Error&) {
        manifest_ = json::object();  // unreadable manifest: everything reruns
      }
    }
    if (!manifest_.is_object()) manifest_ = json::object();
  }

  RunReport run(const std::vector<Stage>& stages) {
    RunReport report;
    report.out_dir = out_.root;
    for (Stage s : stages) {
      report.stages.push_back(run_stage(s));
      if (s == Stage::battery || (s == Stage::analyze && battery_total_ == 0)) read_battery_summary();
    }
    report.battery_total = battery_total_;
    report.battery_failed = battery_failed_;
    write_manifest();
    if (battery_total_ > 0 && battery_failed_ == battery_total_ &&
        std::find(stages.begin(), stages.end(), Stage::battery) != stages.end()) {
      fail(ErrorKind::data, "every battery specification failed; see " + (out_.battery() / "failures.csv").string());
    }
    return report;
  }

 private:
  // Input files that must exist before `s` can run.
  std::vector<fs::path> inputs_of(Stage s) const {
    std::vector<fs::path> in;
    switch (s) {
      case Stage::synth: break;
      case Stage::ingest: {
        const fs::path dir = grids_dir();
        if (!fs::is_directory(dir)) missing(s, cfg_.synth ? "synth" : "ingest", dir);
        in = files_in(dir, {".hdr.json", ".f32"});
        if (in.empty()) missing(s, cfg_.synth ? "synth" : "ingest", dir / "*.hdr.json");
        break;
      }
      case Stage::extract: {
        in = files_in(out_.ingest(), {".hdr.json", ".f32"});
        if (in.empty()) missing(s, "ingest", out_.ingest());
        in.push_back(coordinates_path(s));
        break;
      }
      case Stage::metrics: {
        in = files_in(out_.extract(), {".sites.json", ".sites.f32"});
        if (in.empty()) missing(s, "extract", out_.extract());
        in.push_back(coordinates_path(s));
        in.push_back(panel_path(s));
        if (auto w = waves_path(s)) in.push_back(*w);
        if (auto c = calendars_path(s)) in.push_back(*c);
        break;
      }
      case Stage::battery: {
        const fs::path m = out_.metrics() / "metrics_wide.csv";
        require_file(s, "metrics", m);
        in = {m, panel_path(s)};
        if (auto w = waves_path(s)) in.push_back(*w);
        break;
      }
      case Stage::analyze: {
        for (const char* f : {"results.jsonl", "summary.json"}) {
          require_file(s, "battery", out_.battery() / f);
          in.push_back(out_.battery() / f);
        }
        const fs::path m = out_.metrics() / "metrics_wide.csv";
        require_file(s, "metrics", m);
        in.push_back(m);
        if (req_.unblind_map) {
          if (!fs::is_regular_file(*req_.unblind_map)) fail(ErrorKind::config, "blinding map " + req_.unblind_map->string() + " not found");
          in.push_back(*req_.unblind_map);
        }
        break;
      }
    }
    return in;
  }

  fs::path grids_dir() const { return cfg_.inputs.grids ? *cfg_.inputs.grids : out_.synth() / "grids"; }

  fs::path coordinates_path(Stage s) const {
    if (cfg_.inputs.coordinates) {
      if (!fs::is_regular_file(*cfg_.inputs.coordinates)) fail(ErrorKind::dependency, "coordinates file " + cfg_.inputs.coordinates->string() + " not found");
      return *cfg_.inputs.coordinates;
    }
    const fs::path p = out_.synth() / "coordinates.csv";
    require_file(s, "synth", p);
    return p;
  }

  fs::path panel_path(Stage s) const {
    if (cfg_.inputs.panel) {
      if (!fs::is_regular_file(*cfg_.inputs.panel)) fail(ErrorKind::dependency, "panel file " + cfg_.inputs.panel->string() + " not found");
      return *cfg_.inputs.panel;
    }
    const fs::path p = out_.synth() / "panel.csv";
    require_file(s, "synth", p);
    return p;
  }

  std::optional<fs::path> optional_input(const std::optional<fs::path>& configured, const char* synth_name) const {
    if (configured) {
      if (!fs::is_regular_file(*configured)) fail(ErrorKind::dependency, "input file " + configured->string() + " not found");
      return configured;
    }
    if (cfg_.synth && fs::is_regular_file(out_.synth() / synth_name)) return out_.synth() / synth_name;
    return std::nullopt;
  }
  std::optional<fs::path> waves_path(Stage) const { return optional_input(cfg_.inputs.waves, "waves.csv"); }
  std::optional<fs::path> calendars_path(Stage) const { return optional_input(cfg_.inputs.calendars, "calendars.json"); }

  std::string stage_key(Stage s, const std::vector<FileHash>& inputs) const {
    json k;
    k["stage"] = to_string(s);
    k["version"] = kToolVersion;
    k["section"] = cfg_.section(s);
    if (s == Stage::synth) k["seed"] = req_.seed;
    if (s == Stage::battery) k["blind"] = req_.blind;
    json in = json::array();
    for (const auto& f : inputs) in.push_back({f.path.filename().string(), f.sha256});
    k["inputs"] = in;
    return sha256_hex(k.dump());
  }

  bool up_to_date(Stage s, const std::string& key) const {
    if (req_.force || !manifest_.contains("stages")) return false;
    const auto& stages = manifest_.at("stages");
    const std::string name(to_string(s));
    if (!stages.contains(name)) return false;
    const auto& rec = stages.at(name);
    if (rec.value("key", "") != key) return false;
    for (const auto& o : rec.at("outputs")) {
      const fs::path p = out_.root / o.at("path").get<std::string>();
      if (!fs::is_regular_file(p) || sha256_file(p) != o.at("sha256").get<std::string>()) return false;
    }
    return true;
  }

  StageReport run_stage(Stage s) {
    const auto inputs = hash_files(inputs_of(s));
    const std::string key = stage_key(s, inputs);
    StageReport rep;
    rep.stage = s;
    if (up_to_date(s, key)) {
      rep.skipped = true;
      log() << to_string(s) << ": up to date\n";
      return rep;
    }
    log() << to_string(s) << ": running\n";
    std::vector<fs::path> outputs;
    switch (s) {
      case Stage::synth: outputs = do_synth(); break;
      case Stage::ingest: outputs = do_ingest(inputs); break;
      case Stage::extract: outputs = do_extract(); break;
      case Stage::metrics: outputs = do_metrics(); break;
      case Stage::battery: outputs = do_battery(inputs); break;
      case Stage::analyze: outputs = do_analyze(); break;
    }
    rep.outputs = outputs;
    json rec;
    rec["key"] = key;
    rec["completed"] = now_iso();
    json in = json::array();
    for (const auto& f : inputs) in.push_back({{"path", rel(f.path, out_.root)}, {"sha256", f.sha256}});
    rec["inputs"] = in;
    json outj = json::array();
    for (const auto& f : hash_files(outputs)) outj.push_back({{"path", rel(f.path, out_.root)}, {"sha256", f.sha256}});
    rec["outputs"] = outj;
    manifest_["stages"][std::string(to_string(s))] = rec;
    write_manifest();
    return rep;
  }

  void write_manifest() {
    const std::string t = now_iso();
    if (!manifest_.contains("created")) manifest_["created"] = t;
    manifest_["updated"] = t;
    manifest_["tool"] = "eobattery";
    manifest_["version"] = kToolVersion;
    manifest_["config"] = fs::absolute(req_.config_path).generic_string();
    manifest_["config_sha256"] = sha256_file(req_.config_path);
    manifest_["seed"] = req_.seed;
    manifest_["options"] = metric_options_to_json(cfg_.metrics, cfg_.extraction);
    manifest_["battery_sha256"] = cfg_.battery.sha256();
    write_json(out_.manifest(), manifest_);
  }

  std::ostream& log() const {
    static std::ostream null(nullptr);
    return req_.log ? *req_.log : null;
  }

  // ---- stages ----

  std::vector<fs::path> do_synth() {
    reset_dir(out_.synth());
    const SynthBench bench = generate(*cfg_.synth, req_.workers);
    return write_bench(bench, out_.synth());
  }

  std::vector<fs::path> do_ingest(const std::vector<FileHash>& inputs) {
    reset_dir(out_.ingest());
    std::vector<fs::path> outputs;
    std::map<std::string, std::map<Variable, GridDataset>> by_product;
    for (const auto& f : inputs) {
      if (f.path.string().ends_with(".f32")) continue;
      GridDataset g = normalize_units(read_grid(f.path));
      g.validate();
      auto& slot = by_product[g.product_id];
      if (slot.count(g.variable)) fail(ErrorKind::data, "duplicate " + std::string(to_string(g.variable)) + " grid for product " + g.product_id);
      slot.emplace(g.variable, std::move(g));
    }
    for (auto& [product, grids] : by_product) {
      if (!grids.count(Variable::temp_mean) && grids.count(Variable::temp_min) && grids.count(Variable::temp_max)) {
        grids.emplace(Variable::temp_mean, derive_mean_temperature(grids.at(Variable::temp_min), grids.at(Variable::temp_max)));
      }
      for (const auto& [v, g] : grids) {
        const std::string name = product + "." + std::string(to_string(v));
        write_grid(g, out_.ingest(), name);
        outputs.push_back(out_.ingest() / (name + ".hdr.json"));
        outputs.push_back(out_.ingest() / (name + ".f32"));
      }
      log() << "  " << product << ": " << grids.size() << " variables\n";
    }
    return outputs;
  }

  std::vector<fs::path> do_extract() {
    const auto coords = read_coordinates(coordinates_path(Stage::extract));
    reset_dir(out_.extract());
    std::vector<fs::path> outputs;
    for (const auto& hdr : files_in(out_.ingest(), {".hdr.json"})) {
      const GridDataset g = read_grid(hdr);
      const SiteStack stack = extract_sites(g, coords, cfg_.extraction);
      const std::string name = g.product_id + "." + std::string(to_string(g.variable));
      write_site_stack(stack, out_.extract(), name);
      outputs.push_back(out_.extract() / (name + ".sites.json"));
      outputs.push_back(out_.extract() / (name + ".sites.f32"));
      log() << "  " << name << ": " << stack.household_ids.size() << " households, " << stack.n_series << " series\n";
    }
    return outputs;
  }

  std::vector<fs::path> do_metrics() {
    const auto coords = read_coordinates(coordinates_path(Stage::metrics));
    const auto panel = read_panel(panel_path(Stage::metrics));
    WaveMap waves;
    if (auto w = waves_path(Stage::metrics)) waves = WaveMap::load(*w);
    CalendarSet calendars;
    if (auto c = calendars_path(Stage::metrics)) calendars = CalendarSet::load(*c);

    std::map<std::string, std::string> country_of;
    std::set<std::pair<std::string, int>> seasons;
    for (const auto& r : panel) {
      auto [it, inserted] = country_of.emplace(r.household_id, r.country_id);
      if (!inserted && it->second != r.country_id) {
        fail(ErrorKind::data, "household " + r.household_id + " appears under two countries");
      }
      seasons.insert({r.country_id, waves.season_for(r.country_id, r.year)});
    }
    std::vector<std::string> notes;
    std::vector<HouseholdSite> sites;
    for (const auto& c : coords) {
      auto it = country_of.find(c.household_id);
      if (it == country_of.end()) {
        notes.push_back("household " + c.household_id + " has coordinates but no panel rows; skipped");
        continue;
      }
      sites.push_back({c.household_id, it->second, c.coord});
    }
    std::set<std::string> located;
    for (const auto& s : sites) located.insert(s.household_id);
    for (const auto& [hh, country] : country_of) {
      if (!located.count(hh)) notes.push_back("household " + hh + " has no coordinates; its metrics are missing");
    }

    std::map<std::string, std::map<Variable, SiteStack>> stacks;
    for (const auto& hdr : files_in(out_.extract(), {".sites.json"})) {
      SiteStack st = read_site_stack(hdr);
      stacks[st.product_id].emplace(st.variable, std::move(st));
    }
    std::vector<MetricVector> all;
    const auto keep = [&](const std::string& country, int year) { return seasons.count({country, year}) > 0; };
    json products = json::object();
    for (const auto& [product, byvar] : stacks) {
      StackMetricInput in;
      auto get = [&](Variable v) -> const SiteStack* {
        auto it = byvar.find(v);
        return it == byvar.end() ? nullptr : &it->second;
      };
      in.precip = get(Variable::precip);
      in.temp_mean = get(Variable::temp_mean);
      in.temp_max = in.temp_mean ? get(Variable::temp_max) : nullptr;
      if (!in.precip && !in.temp_mean) {
        notes.push_back(product + ": neither precipitation nor mean temperature available; skipped");
        continue;
      }
      auto rows = compute_stack_metrics(in, sites, calendars, cfg_.metrics, keep, &notes, req_.workers);
      std::vector<std::string> vars;
      for (const auto& [v, st] : byvar) vars.emplace_back(to_string(v));
      products[product] = {{"variables", vars}, {"rows", rows.size()}};
      log() << "  " << product << ": " << rows.size() << " household-seasons\n";
      all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
    }
    reset_dir(out_.metrics());
    const fs::path wide = out_.metrics() / "metrics_wide.csv", longf = out_.metrics() / "metrics_long.csv",
                   meta = out_.metrics() / "metadata.json";
    write_metrics_wide(wide, all);
    write_metrics_long(longf, all);
    nlohmann::ordered_json m;
    m["options"] = metric_options_to_json(cfg_.metrics, cfg_.extraction);
    m["calendars"] = calendars.to_json();
    m["products"] = products;
    m["n_households"] = sites.size();
    m["n_rows"] = all.size();
    m["notes"] = notes;
    write_json(meta, m);
    return {wide, longf, meta};
  }

  std::vector<fs::path> do_battery(const std::vector<FileHash>& inputs) {
    const auto panel = read_panel(panel_path(Stage::battery));
    WaveMap waves;
    if (auto w = waves_path(Stage::battery)) waves = WaveMap::load(*w);
    const MetricTable table(read_metrics_wide(out_.metrics() / "metrics_wide.csv"));

    std::optional<BlindingMap> map;
    std::vector<fs::path> outputs;
    if (req_.blind) {
      map = blind(cfg_.battery, cfg_.battery.blinding_seed);
      map->save(out_.blindmap());
      outputs.push_back(out_.blindmap());
    }
    fs::create_directories(out_.battery());
    const fs::path checkpoint = out_.battery() / "checkpoint.jsonl";
    if (req_.force) fs::remove(checkpoint);

    RunOptions opts;
    opts.workers = req_.workers;
    opts.blinding = map ? &*map : nullptr;
    opts.checkpoint = checkpoint;
    std::string ih;
    for (const auto& f : inputs) ih += f.sha256;
    opts.input_hash = sha256_hex(ih);
    std::size_t last_pct = 0;
    opts.progress = [&](std::size_t done, std::size_t total) {
      const std::size_t pct = done * 10 / total;
      if (pct != last_pct || done == total) {
        last_pct = pct;
        log() << "  battery: " << done << "/" << total << "\n";
      }
    };
    RunStats stats;
    const ResultStore store = eob::run(cfg_.battery, panel, table, waves, opts, &stats);
    if (stats.reused > 0) log() << "  battery: reused " << stats.reused << " completed specs\n";

    const fs::path results = out_.battery() / "results.jsonl", failures = out_.battery() / "failures.csv",
                   summary = out_.battery() / "summary.json";
    store.write_jsonl(results);
    store.write_failures_csv(failures);
    nlohmann::ordered_json sj;
    sj["n_specs"] = store.size();
    sj["expected"] = expected_spec_count(cfg_.battery);
    sj["n_ok"] = store.size() - store.n_failed();
    sj["n_failed"] = store.n_failed();
    std::map<std::string, std::size_t> by_kind;
    for (const auto& e : store.entries()) {
      if (!e.ok()) by_kind[std::string(to_string(e.error_kind))]++;
    }
    sj["failures_by_kind"] = by_kind;
    sj["blinded"] = store.blinded();
    sj["battery_sha256"] = cfg_.battery.sha256();
    write_json(summary, sj);
    fs::remove(checkpoint);
    outputs.insert(outputs.end(), {results, failures, summary});
    return outputs;
  }

  std::vector<fs::path> do_analyze() {
    const json summary = read_json(out_.battery() / "summary.json");
    ResultStore store = ResultStore::read_jsonl(out_.battery() / "results.jsonl");
    store.set_blinded(summary.value("blinded", false));
    std::vector<fs::path> outputs;
    std::optional<BlindingMap> map;
    if (store.blinded()) {
      if (req_.unblind_map) {
        map = BlindingMap::load(*req_.unblind_map);
        store = unblind(store, *map, cfg_.battery);
        const fs::path p = out_.battery() / "results.unblinded.jsonl";
        store.write_jsonl(p);
        outputs.push_back(p);
        map.reset();
      } else if (fs::is_regular_file(out_.blindmap())) {
        // Descriptives carry product names; relabel them to keep the blind.
        map = BlindingMap::load(out_.blindmap());
      }
    } else if (req_.unblind_map) {
      fail(ErrorKind::config, "--unblind given but the battery results are not blinded");
    }

    reset_dir(out_.analysis());
    const auto& entries = store.entries();
    const HeuristicTable h = heuristics(entries, cfg_.analysis.levels);
    const fs::path hp = out_.analysis() / "heuristics.csv";
    write_heuristics_csv(h, hp);
    outputs.push_back(hp);
    for (const auto& w : h.warnings) log() << "  warning: " << w << "\n";

    std::vector<MetricId> metrics = cfg_.battery.rain_metrics;
    metrics.insert(metrics.end(), cfg_.battery.temp_metrics.begin(), cfg_.battery.temp_metrics.end());
    for (const auto& country : cfg_.battery.countries) {
      for (MetricId m : metrics) {
        const std::string stem = country + "." + std::string(to_string(m)) + ".json";
        SpecChart chart = spec_chart(entries, country, m, cfg_.analysis.alpha);
        chart.blinded = store.blinded();
        const fs::path cp = out_.analysis() / "specchart" / stem;
        write_json(cp, to_json(chart));
        outputs.push_back(cp);
        Bumpline b = bumpline(entries, country, m, cfg_.analysis.rank_by_abs);
        b.blinded = store.blinded();
        const fs::path bp = out_.analysis() / "bumpline" / stem;
        write_json(bp, to_json(b));
        outputs.push_back(bp);
      }
    }

    std::vector<MetricVector> mv = read_metrics_wide(out_.metrics() / "metrics_wide.csv");
    if (map) {
      for (auto& v : mv) v.product_id = map->label(v.product_id);
    }
    for (MetricId m : cfg_.analysis.descriptive_metrics) {
      const auto rows = descriptives(mv, m);
      const fs::path dp = out_.analysis() / "descriptives" / (std::string(to_string(m)) + ".csv");
      fs::create_directories(dp.parent_path());
      write_descriptives_csv(rows, dp);
      outputs.push_back(dp);
    }
    log() << "  analysis: " << outputs.size() << " files\n";
    return outputs;
  }

  void read_battery_summary() {
    const fs::path p = out_.battery() / "summary.json";
    if (!fs::is_regular_file(p)) return;
    const json s = read_json(p);
    battery_total_ = s.value("n_specs", std::size_t{0});
    battery_failed_ = s.value("n_failed", std::size_t{0});
  }

  const RunRequest& req_;
  PipelineConfig cfg_;
  OutputLayout out_;
  json manifest_ = json::object();
  std::size_t battery_total_ = 0;
  std::size_t battery_failed_ = 0;
};

}  // namespace

RunReport run_pipeline(const RunRequest& request) {
  if (request.workers == 0) fail(ErrorKind::config, "--workers must be positive");
  PipelineConfig cfg = PipelineConfig::load(request.config_path, request.seed);
  const std::vector<Stage> stages = parse_stage_selector(request.stage, cfg.synth.has_value());
  OutputLayout out{request.out_dir ? *request.out_dir : fs::absolute(request.config_path).parent_path() / "out"};
  fs::create_directories(out.root);
  Runner runner(request, std::move(cfg), out);
  return runner.run(stages);
}

}  // namespace eob
