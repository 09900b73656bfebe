#include "eob/robustness_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "eob/csv.hpp"
#include "eob/hashing.hpp"
#include "eob/random.hpp"

namespace eob {

using nlohmann::json;
using nlohmann::ordered_json;

// ---- configuration ---------------------------------------------------------

BatteryConfig BatteryConfig::full_design() {
  BatteryConfig c;
  c.countries = builtin_countries();
  c.rain_products = {"ARC2", "CHIRPS", "CPC", "ERA5", "MERRA-2", "TAMSAT"};
  c.temp_products = {"CPC", "ERA5", "MERRA-2"};
  c.rain_metrics.assign(rainfall_metrics_list().begin(), rainfall_metrics_list().end());
  c.temp_metrics.assign(temperature_metrics_list().begin(), temperature_metrics_list().end());
  return c;
}

BatteryConfig BatteryConfig::from_json(const json& j) {
  BatteryConfig c;
  try {
    c.countries = j.at("countries").get<std::vector<std::string>>();
    c.rain_products = j.value("rain_products", std::vector<std::string>{});
    c.temp_products = j.value("temp_products", std::vector<std::string>{});
    if (j.contains("rain_metrics")) {
      for (const auto& m : j.at("rain_metrics")) c.rain_metrics.push_back(parse_metric(m.get<std::string>()));
    } else {
      c.rain_metrics.assign(rainfall_metrics_list().begin(), rainfall_metrics_list().end());
    }
    if (j.contains("temp_metrics")) {
      for (const auto& m : j.at("temp_metrics")) c.temp_metrics.push_back(parse_metric(m.get<std::string>()));
    } else {
      c.temp_metrics.assign(temperature_metrics_list().begin(), temperature_metrics_list().end());
    }
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model(m.get<std::string>()));
    }
    if (j.contains("outcomes")) {
      c.outcomes.clear();
      for (const auto& o : j.at("outcomes")) c.outcomes.push_back(parse_outcome(o.get<std::string>()));
    }
    c.quadratic = j.value("quadratic", false);
    c.blinding_seed = j.value("blinding_seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("battery config: ") + e.what());
  }
  c.validate();
  return c;
}

json BatteryConfig::to_json() const {
  json j;
  j["countries"] = countries;
  j["rain_products"] = rain_products;
  j["temp_products"] = temp_products;
  auto names = [](const std::vector<MetricId>& ids) {
    std::vector<std::string> out;
    for (auto id : ids) out.emplace_back(to_string(id));
    return out;
  };
  j["rain_metrics"] = names(rain_metrics);
  j["temp_metrics"] = names(temp_metrics);
  std::vector<std::string> m, o;
  for (auto x : models) m.emplace_back(to_string(x));
  for (auto x : outcomes) o.emplace_back(to_string(x));
  j["models"] = m;
  j["outcomes"] = o;
  j["quadratic"] = quadratic;
  j["blinding_seed"] = blinding_seed;
  return j;
}

namespace {

template <typename T>
void require_unique(const std::vector<T>& v, const char* what) {
  std::set<T> s(v.begin(), v.end());
  if (s.size() != v.size()) fail(ErrorKind::config, std::string("battery config: duplicate ") + what);
}

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find('.') != std::string::npos || s.find(',') != std::string::npos) {
    fail(ErrorKind::config, std::string("battery config: ") + what + " '" + s + "' must be non-empty without '.' or ','");
  }
}

}  // namespace

void BatteryConfig::validate() const {
  if (countries.empty()) fail(ErrorKind::config, "battery config: no countries");
  if (models.empty()) fail(ErrorKind::config, "battery config: no models");
  if (outcomes.empty()) fail(ErrorKind::config, "battery config: no outcomes");
  for (const auto& c : countries) check_token(c, "country");
  for (const auto& p : rain_products) check_token(p, "product");
  for (const auto& p : temp_products) check_token(p, "product");
  require_unique(countries, "countries");
  require_unique(rain_products, "rain products");
  require_unique(temp_products, "temperature products");
  require_unique(rain_metrics, "rain metrics");
  require_unique(temp_metrics, "temperature metrics");
  require_unique(models, "models");
  require_unique(outcomes, "outcomes");
  for (auto m : rain_metrics) {
    if (!is_rainfall_metric(m)) {
      fail(ErrorKind::config, "battery config: temperature metric '" + std::string(to_string(m)) +
                                  "' cannot pair with rainfall products");
    }
  }
  for (auto m : temp_metrics) {
    if (is_rainfall_metric(m)) {
      fail(ErrorKind::config, "battery config: rainfall metric '" + std::string(to_string(m)) +
                                  "' cannot pair with temperature products");
    }
  }
  if (rain_metrics.size() * rain_products.size() + temp_metrics.size() * temp_products.size() == 0) {
    fail(ErrorKind::config, "battery config: no (metric, product) pairs");
  }
}

std::string BatteryConfig::sha256() const {
  json j = to_json();
  j.erase("blinding_seed");
  return sha256_hex(j.dump());
}

std::vector<RegressionSpec> enumerate(const BatteryConfig& config) {
  config.validate();
  std::vector<RegressionSpec> specs;
  specs.reserve(expected_spec_count(config));
  for (const auto& country : config.countries) {
    for (auto model : config.models) {
      for (auto outcome : config.outcomes) {
        auto add = [&](MetricId metric, const std::string& product) {
          for (bool quad : {false, true}) {
            if (quad && !config.quadratic) continue;
            specs.push_back(RegressionSpec{country, model, outcome, metric, product, quad});
          }
        };
        for (auto m : config.rain_metrics) {
          for (const auto& p : config.rain_products) add(m, p);
        }
        for (auto m : config.temp_metrics) {
          for (const auto& p : config.temp_products) add(m, p);
        }
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) keys.emplace_back(specs[i].id(), i);
  std::sort(keys.begin(), keys.end());
  std::vector<RegressionSpec> sorted;
  sorted.reserve(specs.size());
  for (const auto& [id, i] : keys) sorted.push_back(std::move(specs[i]));
  return sorted;
}

std::size_t expected_spec_count(const BatteryConfig& c) {
  return c.models.size() * c.outcomes.size() * count_data_versions(c) * (c.quadratic ? 2 : 1);
}

std::size_t count_data_versions(const BatteryConfig& c) {
  return c.countries.size() * (c.rain_metrics.size() * c.rain_products.size() +
                               c.temp_metrics.size() * c.temp_products.size());
}

// ---- blinding --------------------------------------------------------------

BlindingMap blind(const BatteryConfig& config, std::uint64_t seed) {
  std::set<std::string> unique(config.rain_products.begin(), config.rain_products.end());
  unique.insert(config.temp_products.begin(), config.temp_products.end());
  if (unique.empty()) fail(ErrorKind::config, "blinding needs at least one product");
  std::vector<std::string> order(unique.begin(), unique.end());
  Rng rng(derive_seed(seed, "blinding"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  BlindingMap map;
  map.seed_ = seed;
  map.config_sha256_ = config.sha256();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::string label = "EO-" + std::to_string(i + 1);
    map.label_of_[order[i]] = label;
    map.product_of_[label] = order[i];
  }
  return map;
}

const std::string& BlindingMap::label(const std::string& product) const {
  auto it = label_of_.find(product);
  if (it == label_of_.end()) fail(ErrorKind::integrity, "blinding map has no label for product '" + product + "'");
  return it->second;
}

const std::string& BlindingMap::product(const std::string& label) const {
  auto it = product_of_.find(label);
  if (it == product_of_.end()) fail(ErrorKind::integrity, "blinding map has no product for label '" + label + "'");
  return it->second;
}

json BlindingMap::to_json() const {
  json j;
  j["seed"] = seed_;
  j["config_sha256"] = config_sha256_;
  json entries = json::array();
  for (const auto& [label, product] : product_of_) entries.push_back({{"label", label}, {"product", product}});
  j["entries"] = entries;
  return j;
}

BlindingMap BlindingMap::from_json(const json& j) {
  BlindingMap m;
  try {
    m.seed_ = j.at("seed").get<std::uint64_t>();
    m.config_sha256_ = j.at("config_sha256").get<std::string>();
    for (const auto& e : j.at("entries")) {
      const auto label = e.at("label").get<std::string>();
      const auto product = e.at("product").get<std::string>();
      if (!m.label_of_.emplace(product, label).second || !m.product_of_.emplace(label, product).second) {
        fail(ErrorKind::integrity, "blinding map is not a bijection");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed blinding map: ") + e.what());
  }
  return m;
}

void BlindingMap::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

BlindingMap BlindingMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open blinding map " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::integrity, path.string() + ": " + e.what());
  }
}

// ---- result records --------------------------------------------------------

ordered_json to_json(const SpecOutcome& o) {
  ordered_json j;
  j["spec_id"] = o.spec.id();
  j["country"] = o.spec.country_id;
  j["model"] = to_string(o.spec.model);
  j["outcome"] = to_string(o.spec.outcome);
  j["metric"] = to_string(o.spec.metric);
  j["product"] = o.spec.product_id;
  j["quadratic"] = o.spec.quadratic;
  if (o.ok()) {
    const auto& r = *o.result;
    j["status"] = "ok";
    j["beta1"] = r.beta1;
    j["se_beta1"] = r.se_beta1;
    j["t_stat"] = r.t_stat;
    j["p_value"] = r.p_value;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["loglik"] = r.loglik;
    j["n_obs"] = r.n_obs;
    j["n_clusters"] = r.n_clusters;
    j["n_params"] = r.n_params;
    j["n_dropped"] = r.n_dropped;
    j["n_omitted"] = r.n_omitted;
  } else {
    j["status"] = "failed";
    j["error_kind"] = to_string(o.error_kind);
    j["error"] = o.error;
    j["n_dropped"] = o.n_dropped;
  }
  return j;
}

namespace {

ErrorKind parse_error_kind(const std::string& s) {
  for (auto k : {ErrorKind::config, ErrorKind::dependency, ErrorKind::data, ErrorKind::out_of_bounds,
                 ErrorKind::coverage, ErrorKind::alignment, ErrorKind::metric, ErrorKind::climatology,
                 ErrorKind::singularity, ErrorKind::inference, ErrorKind::integrity, ErrorKind::io}) {
    if (to_string(k) == s) return k;
  }
  return ErrorKind::data;
}

double num(const json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

SpecOutcome spec_outcome_from_json(const json& j) {
  SpecOutcome o;
  try {
    o.spec.country_id = j.at("country").get<std::string>();
    o.spec.model = parse_model(j.at("model").get<std::string>());
    o.spec.outcome = parse_outcome(j.at("outcome").get<std::string>());
    o.spec.metric = parse_metric(j.at("metric").get<std::string>());
    o.spec.product_id = j.at("product").get<std::string>();
    o.spec.quadratic = j.at("quadratic").get<bool>();
    o.n_dropped = j.at("n_dropped").get<std::size_t>();
    if (j.at("status").get<std::string>() == "ok") {
      RegressionResult r;
      r.spec = o.spec;
      r.beta1 = num(j, "beta1");
      r.se_beta1 = num(j, "se_beta1");
      r.t_stat = num(j, "t_stat");
      r.p_value = num(j, "p_value");
      r.ci_low = num(j, "ci_low");
      r.ci_high = num(j, "ci_high");
      r.loglik = num(j, "loglik");
      r.n_obs = j.at("n_obs").get<std::size_t>();
      r.n_clusters = j.at("n_clusters").get<std::size_t>();
      r.n_params = j.at("n_params").get<std::size_t>();
      r.n_dropped = o.n_dropped;
      r.n_omitted = j.at("n_omitted").get<std::size_t>();
      o.result = r;
    } else {
      o.error_kind = parse_error_kind(j.at("error_kind").get<std::string>());
      o.error = j.at("error").get<std::string>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("malformed result record: ") + e.what());
  }
  return o;
}

ResultStore::ResultStore(std::vector<SpecOutcome> entries) : entries_(std::move(entries)) {
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const SpecOutcome& a, const SpecOutcome& b) { return a.id() < b.id(); });
}

std::size_t ResultStore::n_failed() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return !e.ok(); }));
}

void ResultStore::write_jsonl(std::ostream& out) const {
  for (const auto& e : entries_) out << to_json(e).dump() << '\n';
}

void ResultStore::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  write_jsonl(out);
}

ResultStore ResultStore::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<SpecOutcome> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      entries.push_back(spec_outcome_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ResultStore(std::move(entries));
}

void ResultStore::write_failures_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "spec_id,error_kind,message\n";
  std::map<std::string, std::size_t> by_kind;
  for (const auto& e : entries_) {
    if (e.ok()) continue;
    by_kind[std::string(to_string(e.error_kind))]++;
    out << csv::quote_if_needed(e.id()) << ',' << to_string(e.error_kind) << ',' << csv::quote_if_needed(e.error)
        << '\n';
  }
  out << "# summary: " << entries_.size() << " specs, " << n_failed() << " failed";
  for (const auto& [kind, n] : by_kind) out << ", " << kind << "=" << n;
  out << '\n';
}

// ---- execution -------------------------------------------------------------

namespace {

std::string cache_key(const std::string& input_hash, const std::string& emitted_id) {
  return sha256_hex(input_hash + "|" + emitted_id);
}

}  // namespace

ResultStore run(const BatteryConfig& config, std::span<const PanelRow> panel, const MetricTable& metrics,
                const WaveMap& waves, const RunOptions& options, RunStats* stats) {
  const std::vector<RegressionSpec> specs = enumerate(config);

  // Panel partitioned by country; metrics aligned once per (country, product).
  std::map<std::string, std::vector<PanelRow>> by_country;
  for (const auto& r : panel) by_country[r.country_id].push_back(r);
  std::map<std::pair<std::string, std::string>, std::vector<const MetricVector*>> aligned;
  for (const auto& country : config.countries) {
    auto& rows = by_country[country];
    std::set<std::string> products(config.rain_products.begin(), config.rain_products.end());
    products.insert(config.temp_products.begin(), config.temp_products.end());
    for (const auto& p : products) aligned[{country, p}] = align_metrics(rows, metrics, p, waves);
  }

  std::vector<SpecOutcome> out(specs.size());
  std::vector<std::string> keys(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out[i].spec = specs[i];
    if (options.blinding) out[i].spec.product_id = options.blinding->label(specs[i].product_id);
    keys[i] = cache_key(options.input_hash, out[i].id());
  }

  // Reuse checkpointed cells whose key still matches.
  std::vector<char> done(specs.size(), 0);
  RunStats local;
  if (options.checkpoint && std::filesystem::exists(*options.checkpoint)) {
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < keys.size(); ++i) slot[keys[i]] = i;
    std::ifstream in(*options.checkpoint);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        break;  // torn final line from an interrupted run
      }
      auto it = slot.find(j.value("cache_key", ""));
      if (it == slot.end() || done[it->second]) continue;
      SpecOutcome o = spec_outcome_from_json(j.at("record"));
      if (o.id() != out[it->second].id()) continue;
      out[it->second] = std::move(o);
      done[it->second] = 1;
      ++local.reused;
    }
  }

  std::optional<std::ofstream> checkpoint;
  if (options.checkpoint) {
    if (options.checkpoint->has_parent_path()) std::filesystem::create_directories(options.checkpoint->parent_path());
    checkpoint.emplace(*options.checkpoint, std::ios::app | std::ios::binary);
  }
  std::mutex append_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> completed{local.reused};

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      if (done[i]) continue;
      const RegressionSpec& spec = specs[i];
      SpecOutcome& o = out[i];
      const auto& rows = by_country.at(spec.country_id);
      const auto& al = aligned.at({spec.country_id, spec.product_id});
      try {
        const RegressionSample sample = build_sample(spec, rows, al, &o.n_dropped);
        const Estimate e = estimate(spec.model, spec.quadratic, sample, options.estimator);
        RegressionResult r;
        r.spec = o.spec;
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
        r.n_dropped = o.n_dropped;
        r.n_omitted = e.n_omitted;
        o.result = r;
      } catch (const Error& e) {
        o.error_kind = e.kind();
        o.error = o.id() + ": " + e.what();
      } catch (const std::exception& e) {
        o.error_kind = ErrorKind::data;
        o.error = o.id() + ": " + e.what();
      }
      const std::size_t n_done = ++completed;
      if (checkpoint || options.progress) {
        std::lock_guard lock(append_mutex);
        if (checkpoint) {
          json rec;
          rec["cache_key"] = keys[i];
          rec["record"] = json::parse(to_json(o).dump());
          *checkpoint << rec.dump() << '\n';
          checkpoint->flush();
        }
        if (options.progress) options.progress(n_done, specs.size());
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, options.workers);
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(work);
  }
  local.executed = specs.size() - local.reused;
  if (stats) *stats = local;

  ResultStore store(std::move(out));
  store.set_blinded(options.blinding != nullptr);
  return store;
}

ResultStore unblind(const ResultStore& store, const BlindingMap& map, const BatteryConfig& config) {
  if (map.config_sha256() != config.sha256()) {
    fail(ErrorKind::integrity, "blinding map was issued for config " + map.config_sha256() +
                                   " but the battery config hashes to " + config.sha256());
  }
  std::vector<SpecOutcome> entries;
  entries.reserve(store.size());
  for (const auto& e : store.entries()) {
    SpecOutcome o = e;
    const std::string blinded_id = e.id();
    o.spec.product_id = map.product(e.spec.product_id);
    if (o.result) o.result->spec = o.spec;
    if (!o.ok() && o.error.rfind(blinded_id, 0) == 0) o.error = o.id() + o.error.substr(blinded_id.size());
    entries.push_back(std::move(o));
  }
  ResultStore out(std::move(entries));
  out.set_blinded(false);
  return out;
}

}  // namespace eob
