#pragma once

#include "cvarnet/analytics.hpp"
#include "cvarnet/config.hpp"
#include "cvarnet/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::grid {

struct Failure {
  std::uint64_t world_seed = 0;
  std::optional<std::uint64_t> model_seed;  // empty when the whole world failed
  std::string model;
  ErrorKind kind = ErrorKind::numerical;
  std::string message;
};

struct WorldInfo {
  std::uint64_t seed = 0;
  std::size_t raw_dates = 0;
  std::size_t synthetic_pairs = 0;
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct Result {
  std::vector<analytics::EvalReport> reports;  // ordered by world, model seed, model, regime
  std::vector<Failure> failures;
  std::vector<WorldInfo> worlds;
  std::vector<std::filesystem::path> checkpoints;
};

struct Options {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> progress;
};

/// Per world: simulate from the fitted reference model, label, split; then
/// per model seed: train the four students and evaluate them with the four
/// baselines on the test split. Cells run on `config.grid.workers` threads.
Result run_grid(const config::PipelineConfig& config, const Options& options = {});

/// Bounded pool: runs fn(0..n-1) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Evaluation reports for one backtest: ALL plus the two regimes when asked.
std::vector<analytics::EvalReport> reports_for(const wf::BacktestTrack& track, const Vector& market,
                                               const analytics::EvalReport& base, bool regimes);

struct NamedCheckpoint {
  std::string name;
  nn::Checkpoint checkpoint;
};

struct UniverseResult {
  std::vector<analytics::EvalReport> reports;
  std::vector<std::pair<std::string, wf::BacktestTrack>> tracks;  // students then baselines
  data::ReturnPanel returns;                                      // after stress
};

/// Walk-forward over every post-warm-up week of an observed panel: C2A on the
/// training universe, D2A on a partially disjoint one. Features are rebuilt
/// from the panel, `config.stress` is applied first, baselines re-solve each
/// week. Reports carry `universe`, the config seeds and level.
UniverseResult evaluate_universe(const std::vector<NamedCheckpoint>& students, const pipeline::Market& market,
                                 const std::string& universe, const config::PipelineConfig& config,
                                 const wf::AdaptiveConfig& adaptive);

}  // namespace cvarnet::grid
