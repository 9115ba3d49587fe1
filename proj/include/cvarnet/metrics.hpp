#pragma once

#include "cvarnet/core.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cvarnet::metrics {

inline constexpr double kWeeksPerYear = 52.0;

/// Sample mean over sample std times sqrt(52); empty when the std is 0 or
/// fewer than two points are given.
std::optional<double> sharpe_annualized(std::span<const double> weekly);

/// Running-peak drawdown of wealth compounded from 1.
double max_drawdown(std::span<const double> weekly);

/// Empirical CVaR of losses -r, reported with the loss sign (a negative
/// number means a loss).
double cvar_report(std::span<const double> weekly, double alpha = 0.95);

double mean_turnover(const std::vector<Vector>& weights, const Vector& initial);

double annualized_return(std::span<const double> weekly);
double annualized_vol(std::span<const double> weekly);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap of the Sharpe ratio.
std::optional<Interval> bootstrap_sharpe(std::span<const double> weekly, std::size_t resamples,
                                         double level, std::uint64_t seed);

struct Summary {
  std::optional<double> sharpe;
  double cvar95 = 0.0;
  double max_drawdown = 0.0;
  double mean_turnover = 0.0;
  double ann_return = 0.0;
  double ann_vol = 0.0;
  std::size_t weeks = 0;
};

Summary summarize(std::span<const double> weekly, std::span<const double> turnovers);

}  // namespace cvarnet::metrics
