#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/data_panel.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cvarnet::features {

inline constexpr std::size_t kFeatureCount = 16;
inline constexpr std::size_t kMinHistory = 104;

// Column order inside one asset's row.
enum Column : std::size_t {
  mu_blend = 0,
  sigma_mu,
  realized_vol,
  pc1,
  pc2,
  pc3,
  z12_1,
  z6m,
  z1m,
  drawdown,
  prev_weight,
  cap,
  mkt_ret_4w,
  mkt_ret_12w,
  mkt_vol_12w,
  mkt_drawdown,
};

struct Block {
  std::string_view name;
  std::size_t first;
  std::size_t count;
};

inline constexpr std::array<Block, 6> kBlocks{{{"forecast", 0, 3},
                                               {"pca", 3, 3},
                                               {"momentum", 6, 3},
                                               {"drawdown", 9, 1},
                                               {"position", 10, 2},
                                               {"regime", 12, 4}}};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "mu_blend", "sigma_mu", "realized_vol", "pc1",        "pc2",         "pc3",
    "z12_1",    "z6m",      "z1m",          "drawdown",   "prev_weight", "cap",
    "mkt_ret_4w", "mkt_ret_12w", "mkt_vol_12w", "mkt_drawdown"};

struct SkipDate {
  std::string reason;
};

template <class T>
using OrSkip = std::variant<T, SkipDate>;

struct Params {
  std::size_t ridge_lookback = 52;
  double ridge_lambda = 5.0;
  std::size_t min_obs = 30;
  std::size_t factor_mean_window = 13;
  double blend_ridge = 0.7;
  double blend_momentum = 0.3;
  std::size_t vol_window = 26;
  std::size_t pca_window = 104;
  std::size_t drawdown_window = 52;
  std::size_t warmup = kMinHistory;
  // Asset column used as the market proxy; equal-weight mean when unset.
  std::optional<std::size_t> market_column;
};

nlohmann::json to_json(const Params& p);
Params params_from_json(const nlohmann::json& j);

struct RidgeForecast {
  Vector mu_ex_hat;
  Vector sigma_mu;
  Matrix beta_hat;  // N x 6
};

/// Per-asset ridge of excess returns on factors over rows (t - lookback, t].
/// The forecast is beta' times the trailing factor mean.
OrSkip<RidgeForecast> rolling_ridge(const data::ReturnPanel& returns,
                                    const data::FactorPanel& factors, std::size_t t,
                                    std::size_t lookback = 52, double lambda = 5.0,
                                    std::size_t min_obs = 30, std::size_t mean_window = 13);

struct Momentum {
  Vector mom_12_1;
  Vector z12_1;
  Vector z6m;
  Vector z1m;
};

/// Cross-sectional z-score with the sample std; all zeros when the std is 0.
Vector zscore(const Vector& x);

/// Compounded return of rows [first, last] of column i.
double cumulative_return(const Matrix& simple, std::size_t col, std::size_t first,
                         std::size_t last);

OrSkip<Momentum> momentum_features(const data::ReturnPanel& returns, std::size_t t);

/// Top three eigenvectors of the trailing window covariance as columns.
/// Columns beyond N are zero.
OrSkip<Matrix> pca_loadings(const data::ReturnPanel& returns, std::size_t t,
                            std::size_t window = 104);

/// (peak - current) / peak of wealth compounded from 1 over the trailing window.
double path_drawdown(std::span<const double> returns);

OrSkip<Vector> drawdown_feature(const data::ReturnPanel& returns, std::size_t t,
                                std::size_t window = 52);

struct Regime {
  double ret_4w = 0.0;
  double ret_12w = 0.0;
  double vol_12w = 0.0;
  double drawdown_52w = 0.0;
};

/// Market proxy series: a designated column or the equal-weight mean.
Vector market_series(const data::ReturnPanel& returns, std::optional<std::size_t> market_column);

OrSkip<Regime> market_regime_features(const data::ReturnPanel& returns, std::size_t t,
                                      std::optional<std::size_t> market_column = std::nullopt);

struct FeatureMatrix {
  Date date;
  std::size_t index = 0;  // row of the aligned calendar
  Matrix per_asset;       // N x 16

  Vector flattened() const;
};

Vector flatten(const Matrix& per_asset);
Matrix unflatten(const Vector& flat, std::size_t assets);

struct Blocks {
  RidgeForecast forecast;
  Vector realized_vol;
  Matrix pca;
  Momentum momentum;
  Vector drawdown;
  Vector prev_weights;
  double cap = 1.0;
  Regime regime;
  double rf = 0.0;
};

/// Throws Error(numerical) naming the first non-finite (asset, column).
FeatureMatrix assemble_features(Date date, std::size_t index, const Blocks& blocks,
                                const Params& params = {});

/// All blocks at row t using only rows <= t.
OrSkip<FeatureMatrix> build_features(const data::ReturnPanel& returns,
                                     const data::FactorPanel& factors, std::size_t t,
                                     const Vector& prev_weights, double cap,
                                     const Params& params = {});

std::vector<std::string> column_headers(const std::vector<std::string>& assets);

void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureMatrix>& rows,
                       const std::vector<std::string>& assets);

struct FeatureFile {
  std::vector<std::string> assets;
  std::vector<FeatureMatrix> rows;
};

FeatureFile read_feature_csv(const std::filesystem::path& path);

nlohmann::json schema_json(std::size_t assets, const Params& params);

}  // namespace cvarnet::features
