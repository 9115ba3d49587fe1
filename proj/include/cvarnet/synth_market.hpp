#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/data_panel.hpp"
#include "cvarnet/rng.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <vector>

namespace cvarnet::synth {

/// f_t = c + A f_{t-1} + u_t,  u_t ~ N(0, Sigma_u).
struct Var1Model {
  Vector intercept;
  Matrix transition;
  Matrix innovation_cov;
  double spectral_radius = 0.0;

  bool stationary() const { return spectral_radius < 1.0; }
  /// (I - A)^{-1} c
  Vector unconditional_mean() const;
};

/// Least squares of f_t on [1, f_{t-1}]; rows of `series` are weeks.
Var1Model fit_var1(const Matrix& series);

/// Trajectory of `horizon` rows. The recursion starts from `initial` when
/// given, otherwise from the unconditional mean. Refuses radius >= 1.
Matrix simulate_var1(const Var1Model& model, std::size_t horizon, Rng& rng,
                     const std::optional<Vector>& initial = std::nullopt);

double spectral_radius(const Matrix& a);

/// rf_t = c + phi rf_{t-1} + e_t,  e_t ~ N(0, sigma^2).
struct Ar1Model {
  double intercept = 0.0;
  double phi = 0.0;
  double sigma = 0.0;

  double unconditional_mean() const { return intercept / (1.0 - phi); }
};

Ar1Model fit_ar1(std::span<const double> series);
Vector simulate_ar1(const Ar1Model& model, std::size_t horizon, Rng& rng,
                    std::optional<double> initial = std::nullopt);

/// Student-t copula with empirical marginals.
struct CopulaModel {
  Matrix corr;
  double nu = 6.0;
  std::vector<std::vector<double>> marginals;  // sorted standardized residuals per asset
};

/// Kendall's tau-b.
double kendall_tau(std::span<const double> x, std::span<const double> y);
/// Clips eigenvalues at 1e-10 and rescales to unit diagonal.
Matrix nearest_correlation(const Matrix& c);
/// Linear interpolation between sorted samples, clamped at the extremes.
double empirical_quantile(std::span<const double> sorted, double u);

/// Correlation from Kendall's tau via sin(pi tau / 2); rows of `residuals`
/// are weeks.
CopulaModel fit_copula(const Matrix& residuals, double nu = 6.0);
Matrix sample_copula(const CopulaModel& model, std::size_t horizon, Rng& rng);

/// Static factor loadings r^ex = alpha + beta f + eps.
struct LoadingsModel {
  Vector alpha;
  Matrix beta;  // N x 6
  Vector residual_std;
};

struct LoadingsFit {
  LoadingsModel model;
  Matrix standardized_residuals;  // T x N
};

LoadingsFit fit_loadings(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                         double ridge_lambda);

/// Total returns alpha + beta f_t + eps_t + rf_t for every week.
data::ReturnPanel reconstruct_returns(const LoadingsModel& loadings, const Matrix& factors,
                                      const Matrix& residuals, const Vector& rf,
                                      std::vector<Date> dates, std::vector<std::string> assets);

/// Everything needed to simulate a market.
struct MarketModel {
  std::vector<std::string> assets;
  Var1Model factors;
  Ar1Model rf;
  LoadingsModel loadings;
  CopulaModel copula;
};

struct FitOptions {
  double nu = 6.0;
  double ridge_lambda = 5.0;
};

MarketModel fit_market(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                       const FitOptions& options = {});

struct World {
  data::ReturnPanel returns;
  data::FactorPanel factors;
};

/// Simulates `horizon` weeks. Each component draws from its own stream of
/// `world_seed`, so a world is a pure function of (model, horizon, seed).
World generate_world(const MarketModel& model, std::size_t horizon, std::uint64_t world_seed,
                     Date first_week = Date::from_ymd(2000, 1, 7));

/// Feature dates min_hist, min_hist + stride, ... strictly below horizon.
std::vector<std::size_t> stride_dates(std::size_t horizon, std::size_t min_hist,
                                      std::size_t stride);

struct CorrelationReport {
  Matrix difference;           // real - synthetic
  double abs_quantile90 = 0.0;  // 90th percentile of off-diagonal |difference|
  double max_abs = 0.0;
  double fraction_within = 0.0;  // share of off-diagonal entries within the band
};

CorrelationReport compare_correlations(const Matrix& real, const Matrix& synthetic,
                                       double band = 0.15);
Matrix pearson_correlation(const Matrix& x);

nlohmann::json to_json(const MarketModel& m);
MarketModel market_from_json(const nlohmann::json& j);

}  // namespace cvarnet::synth
