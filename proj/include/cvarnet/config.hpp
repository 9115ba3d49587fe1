#pragma once

#include "cvarnet/allocators.hpp"
#include "cvarnet/execution.hpp"
#include "cvarnet/features.hpp"
#include "cvarnet/stress.hpp"
#include "cvarnet/synth_market.hpp"
#include "cvarnet/training.hpp"
#include "cvarnet/walk_forward.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::config {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kConfigDirEnv = "CVARNET_CONFIG_DIR";
inline constexpr const char* kDefaultConfigName = "cvarnet.json";

struct DataConfig {
  std::size_t assets = 8;
  std::size_t reference_weeks = 208;
  std::uint64_t reference_seed = 20150102;
  std::size_t horizon = 1400;
  std::size_t stride = 4;
  std::size_t min_hist = 104;
  double train_fraction = 0.6;
  synth::FitOptions fit;
};

struct GridOptions {
  std::vector<std::uint64_t> world_seeds{32, 42, 52};
  std::vector<std::uint64_t> model_seeds{0, 1, 2, 3, 4};
  std::size_t workers = 1;
  bool regimes = true;
  bool adaptive = false;  // students evaluated frozen unless set
};

struct PipelineConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t world_seed = 42;
  std::uint64_t model_seed = 0;
  DataConfig data;
  features::Params features;
  alloc::LabelOptions label;
  train::TrainConfig train;
  train::ArchitectureConfig architecture;
  exec::ConstraintSpec constraint;
  stress::StressSpec stress;
  wf::AdaptiveConfig adaptive;
  GridOptions grid;
};

nlohmann::json to_json(const PipelineConfig& c);

/// Rejects unknown keys (naming the full key path), wrong types and schema
/// versions other than the current one. Absent keys keep their defaults.
PipelineConfig from_json(const nlohmann::json& j);

PipelineConfig load(const std::filesystem::path& path);

/// Explicit path, else $CVARNET_CONFIG_DIR/cvarnet.json when present, else
/// defaults.
PipelineConfig resolve(const std::optional<std::filesystem::path>& path);

/// FNV-1a over the canonical (sorted-key) serialization.
std::string config_hash(const PipelineConfig& c);
std::string hash_bytes(const std::string& bytes);
std::string file_digest(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t world_seed = 0;
  std::uint64_t model_seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;
  nlohmann::json config;
};

std::string utc_timestamp();

void write_manifest(const std::filesystem::path& path, const RunManifest& m);

}  // namespace cvarnet::config
