#include "cvarnet/config.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cvarnet::config {

namespace {

nlohmann::json data_json(const DataConfig& d) {
  return {{"assets", d.assets},
          {"reference_weeks", d.reference_weeks},
          {"reference_seed", d.reference_seed},
          {"horizon", d.horizon},
          {"stride", d.stride},
          {"min_hist", d.min_hist},
          {"train_fraction", d.train_fraction},
          {"copula_nu", d.fit.nu},
          {"loadings_ridge", d.fit.ridge_lambda}};
}

nlohmann::json grid_json(const GridOptions& g) {
  return {{"world_seeds", g.world_seeds}, {"model_seeds", g.model_seeds},
          {"workers", g.workers},         {"regimes", g.regimes},
          {"adaptive", g.adaptive}};
}

// Every key the defaults serialize is allowed; anything else is a typo.
void check_keys(const nlohmann::json& given, const nlohmann::json& allowed, const std::string& prefix) {
  if (!given.is_object()) fail(ErrorKind::config, "config key '" + prefix + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!allowed.contains(key)) fail(ErrorKind::config, "unknown config key '" + path + "'");
    if (allowed[key].is_object()) check_keys(value, allowed[key], path);
  }
}

template <class T>
T field(const nlohmann::json& j, const char* key, T fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::config, "config key '" + section + "." + key + "' has the wrong type");
  }
}

nlohmann::json section(const nlohmann::json& j, const char* key) {
  return j.contains(key) ? j.at(key) : nlohmann::json::object();
}

}  // namespace

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"schema_version", c.schema_version},
          {"world_seed", c.world_seed},
          {"model_seed", c.model_seed},
          {"data", data_json(c.data)},
          {"features", features::to_json(c.features)},
          {"label", alloc::to_json(c.label)},
          {"train", train::to_json(c.train)},
          {"architecture", train::to_json(c.architecture)},
          {"constraint", exec::to_json(c.constraint)},
          {"stress", stress::to_json(c.stress)},
          {"adaptive", wf::to_json(c.adaptive)},
          {"grid", grid_json(c.grid)}};
}

PipelineConfig from_json(const nlohmann::json& j) {
  PipelineConfig c;
  check_keys(j, to_json(c), "");
  c.schema_version = field(j, "schema_version", c.schema_version, "");
  if (c.schema_version != kSchemaVersion) {
    fail(ErrorKind::config, "config key 'schema_version' is " + std::to_string(c.schema_version) +
                                ", expected " + std::to_string(kSchemaVersion));
  }
  c.world_seed = field(j, "world_seed", c.world_seed, "");
  c.model_seed = field(j, "model_seed", c.model_seed, "");

  const auto d = section(j, "data");
  c.data.assets = field(d, "assets", c.data.assets, "data");
  c.data.reference_weeks = field(d, "reference_weeks", c.data.reference_weeks, "data");
  c.data.reference_seed = field(d, "reference_seed", c.data.reference_seed, "data");
  c.data.horizon = field(d, "horizon", c.data.horizon, "data");
  c.data.stride = field(d, "stride", c.data.stride, "data");
  c.data.min_hist = field(d, "min_hist", c.data.min_hist, "data");
  c.data.train_fraction = field(d, "train_fraction", c.data.train_fraction, "data");
  c.data.fit.nu = field(d, "copula_nu", c.data.fit.nu, "data");
  c.data.fit.ridge_lambda = field(d, "loadings_ridge", c.data.fit.ridge_lambda, "data");
  if (c.data.assets == 0 || c.data.stride == 0 || c.data.horizon <= c.data.min_hist) {
    fail(ErrorKind::config, "config section 'data': need assets > 0, stride > 0 and horizon > min_hist");
  }
  if (!(c.data.train_fraction > 0.0 && c.data.train_fraction < 1.0)) {
    fail(ErrorKind::config, "config key 'data.train_fraction' must lie in (0, 1)");
  }

  if (j.contains("features")) c.features = features::params_from_json(j["features"]);
  if (j.contains("label")) c.label = alloc::label_options_from_json(j["label"]);
  if (j.contains("train")) c.train = train::train_config_from_json(j["train"]);
  c.train.model_seed = c.model_seed;
  if (j.contains("architecture")) c.architecture = train::architecture_from_json(j["architecture"]);
  if (j.contains("constraint")) c.constraint = exec::constraint_from_json(j["constraint"]);
  if (j.contains("stress")) c.stress = stress::stress_from_json(j["stress"]);
  if (j.contains("adaptive")) c.adaptive = wf::adaptive_from_json(j["adaptive"]);

  const auto g = section(j, "grid");
  c.grid.world_seeds = field(g, "world_seeds", c.grid.world_seeds, "grid");
  c.grid.model_seeds = field(g, "model_seeds", c.grid.model_seeds, "grid");
  c.grid.workers = field(g, "workers", c.grid.workers, "grid");
  c.grid.regimes = field(g, "regimes", c.grid.regimes, "grid");
  c.grid.adaptive = field(g, "adaptive", c.grid.adaptive, "grid");
  if (c.grid.workers == 0) fail(ErrorKind::config, "config key 'grid.workers' must be at least 1");
  return c;
}

PipelineConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  return from_json(j);
}

PipelineConfig resolve(const std::optional<std::filesystem::path>& path) {
  if (path) return load(*path);
  if (const char* dir = std::getenv(kConfigDirEnv); dir && *dir) {
    const auto candidate = std::filesystem::path(dir) / kDefaultConfigName;
    if (std::filesystem::exists(candidate)) return load(candidate);
  }
  return {};
}

std::string hash_bytes(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string config_hash(const PipelineConfig& c) { return hash_bytes(to_json(c).dump()); }

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return hash_bytes(os.str());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [p, d] : m.inputs) inputs.push_back({{"path", p}, {"digest", d}});
  const nlohmann::json j{{"command", m.command},
                         {"config_hash", m.config_hash},
                         {"seeds", {{"world", m.world_seed}, {"model", m.model_seed}}},
                         {"versions", {{"cvarnet", kVersion}, {"schema", kSchemaVersion}}},
                         {"inputs", inputs},
                         {"outputs", m.outputs},
                         {"started", m.started},
                         {"finished", m.finished},
                         {"config", m.config}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace cvarnet::config
