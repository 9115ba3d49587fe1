#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/metrics.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::analytics {

struct EvalReport {
  std::string model;
  std::uint64_t world_seed = 0;
  std::uint64_t model_seed = 0;
  std::string universe = "GRID";
  std::string level = "L1";
  std::string stress = "none";
  std::string regime = "ALL";
  std::optional<double> sharpe;
  double cvar95 = 0.0;
  double max_drawdown = 0.0;
  double mean_turnover = 0.0;
  double ann_return = 0.0;
  double ann_vol = 0.0;
  std::size_t weeks = 0;
  std::string flags;

  void fill(const metrics::Summary& s);
};

void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_reports_csv(const std::filesystem::path& path);

struct WinRate {
  std::vector<std::string> models;
  Matrix matrix;  // P(row Sharpe > column Sharpe), ties count one half
  std::size_t runs = 0;
};

/// Runs are keyed by everything except the model; each must contain every
/// model exactly once. An undefined Sharpe counts as zero.
WinRate win_rate_matrix(const std::vector<EvalReport>& reports, std::vector<std::string> models = {});

void write_win_rate_csv(const std::filesystem::path& path, const WinRate& w);

/// (L3 - L1) / L1; empty when L1 is zero.
std::optional<double> sensitivity_delta(double l1, double l3);

struct SensitivityRow {
  std::string model;
  std::string universe;
  double l1 = 0.0;
  double l3 = 0.0;
  std::optional<double> delta;
};

/// Mean Sharpe per (model, universe) at L1 and L3 over unstressed ALL-regime
/// reports.
std::vector<SensitivityRow> constraint_sensitivity(const std::vector<EvalReport>& reports);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

/// Mean and std of each metric per (universe, level, stress, regime, model).
nlohmann::json summary_json(const std::vector<EvalReport>& reports);

}  // namespace cvarnet::analytics
