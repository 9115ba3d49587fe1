#include "cvarnet/features.hpp"

#include "cvarnet/csv.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <cmath>

namespace cvarnet::features {

namespace {

using Idx = Eigen::Index;

Idx ix(std::size_t i) { return static_cast<Idx>(i); }

std::string skip_reason(std::size_t t, std::size_t need, const char* what) {
  return std::string(what) + " needs " + std::to_string(need) + " rows of history at row " +
         std::to_string(t);
}

}  // namespace

nlohmann::json to_json(const Params& p) {
  nlohmann::json j{{"ridge_lookback", p.ridge_lookback},
                   {"ridge_lambda", p.ridge_lambda},
                   {"min_obs", p.min_obs},
                   {"factor_mean_window", p.factor_mean_window},
                   {"blend_ridge", p.blend_ridge},
                   {"blend_momentum", p.blend_momentum},
                   {"vol_window", p.vol_window},
                   {"pca_window", p.pca_window},
                   {"drawdown_window", p.drawdown_window},
                   {"warmup", p.warmup}};
  j["market_column"] = p.market_column ? nlohmann::json(*p.market_column) : nlohmann::json(nullptr);
  return j;
}

Params params_from_json(const nlohmann::json& j) {
  Params p;
  try {
    p.ridge_lookback = j.value("ridge_lookback", p.ridge_lookback);
    p.ridge_lambda = j.value("ridge_lambda", p.ridge_lambda);
    p.min_obs = j.value("min_obs", p.min_obs);
    p.factor_mean_window = j.value("factor_mean_window", p.factor_mean_window);
    p.blend_ridge = j.value("blend_ridge", p.blend_ridge);
    p.blend_momentum = j.value("blend_momentum", p.blend_momentum);
    p.vol_window = j.value("vol_window", p.vol_window);
    p.pca_window = j.value("pca_window", p.pca_window);
    p.drawdown_window = j.value("drawdown_window", p.drawdown_window);
    p.warmup = j.value("warmup", p.warmup);
    if (j.contains("market_column") && !j["market_column"].is_null()) {
      p.market_column = j["market_column"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("features: ") + e.what());
  }
  return p;
}

OrSkip<RidgeForecast> rolling_ridge(const data::ReturnPanel& returns,
                                    const data::FactorPanel& factors, std::size_t t,
                                    std::size_t lookback, double lambda, std::size_t min_obs,
                                    std::size_t mean_window) {
  if (t >= returns.weeks() || t >= factors.weeks()) {
    fail(ErrorKind::data, "rolling_ridge: row " + std::to_string(t) + " outside the panels");
  }
  const std::size_t first = t + 1 >= lookback ? t + 1 - lookback : 0;
  const std::size_t n = t + 1 - first;
  if (n < min_obs) return SkipDate{skip_reason(t, min_obs, "ridge")};
  if (t + 1 < mean_window) return SkipDate{skip_reason(t, mean_window, "factor mean")};

  const Matrix x = factors.factors.middleRows(ix(first), ix(n));
  const Vector fbar =
      factors.factors.middleRows(ix(t + 1 - mean_window), ix(mean_window)).colwise().mean().transpose();
  const auto N = returns.simple.cols();
  RidgeForecast out;
  out.mu_ex_hat.resize(N);
  out.sigma_mu.resize(N);
  out.beta_hat.resize(N, x.cols());
  const Vector rf = returns.rf.segment(ix(first), ix(n));
  for (Idx i = 0; i < N; ++i) {
    const Vector y = returns.simple.col(i).segment(ix(first), ix(n)) - rf;
    const auto fit = stats::ridge_regression(x, y, lambda);
    out.beta_hat.row(i) = fit.beta.transpose();
    out.mu_ex_hat(i) = fit.beta.dot(fbar);
    out.sigma_mu(i) = fit.residual_std;
  }
  return out;
}

Vector zscore(const Vector& x) {
  const double sd = stats::sample_std(x);
  if (!(sd > 0.0)) return Vector::Zero(x.size());
  return (x.array() - x.mean()) / sd;
}

double cumulative_return(const Matrix& simple, std::size_t col, std::size_t first,
                         std::size_t last) {
  double w = 1.0;
  for (std::size_t r = first; r <= last; ++r) w *= 1.0 + simple(ix(r), ix(col));
  return w - 1.0;
}

OrSkip<Momentum> momentum_features(const data::ReturnPanel& returns, std::size_t t) {
  if (t < 52) return SkipDate{skip_reason(t, 53, "momentum")};
  const auto N = returns.asset_count();
  Momentum m;
  m.mom_12_1.resize(ix(N));
  Vector m6(ix(N)), m1(ix(N));
  for (std::size_t i = 0; i < N; ++i) {
    m.mom_12_1(ix(i)) = cumulative_return(returns.simple, i, t - 52, t - 5);
    m6(ix(i)) = cumulative_return(returns.simple, i, t - 25, t);
    m1(ix(i)) = cumulative_return(returns.simple, i, t - 3, t);
  }
  m.z12_1 = zscore(m.mom_12_1);
  m.z6m = zscore(m6);
  m.z1m = zscore(m1);
  return m;
}

OrSkip<Matrix> pca_loadings(const data::ReturnPanel& returns, std::size_t t, std::size_t window) {
  if (t + 1 < window) return SkipDate{skip_reason(t, window, "pca")};
  const Matrix x = returns.simple.middleRows(ix(t + 1 - window), ix(window));
  const Matrix cov = stats::sample_covariance(x);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "pca: eigensolver failed");
  const Idx N = cov.rows();
  Matrix out = Matrix::Zero(N, 3);
  for (Idx k = 0; k < std::min<Idx>(3, N); ++k) {
    Vector v = es.eigenvectors().col(N - 1 - k);
    Idx arg = 0;
    for (Idx i = 1; i < N; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < 0.0) v = -v;
    out.col(k) = v;
  }
  return out;
}

double path_drawdown(std::span<const double> returns) {
  double wealth = 1.0;
  double peak = 1.0;
  for (double r : returns) {
    wealth *= 1.0 + r;
    peak = std::max(peak, wealth);
  }
  return (peak - wealth) / peak;
}

OrSkip<Vector> drawdown_feature(const data::ReturnPanel& returns, std::size_t t,
                                std::size_t window) {
  if (t + 1 < window) return SkipDate{skip_reason(t, window, "drawdown")};
  const auto N = returns.asset_count();
  Vector out(ix(N));
  std::vector<double> col(window);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < window; ++k) col[k] = returns.simple(ix(t + 1 - window + k), ix(i));
    out(ix(i)) = path_drawdown(col);
  }
  return out;
}

Vector market_series(const data::ReturnPanel& returns, std::optional<std::size_t> market_column) {
  if (market_column) {
    if (*market_column >= returns.asset_count()) {
      fail(ErrorKind::config, "market column " + std::to_string(*market_column) + " out of range");
    }
    return returns.simple.col(ix(*market_column));
  }
  return returns.simple.rowwise().mean();
}

OrSkip<Regime> market_regime_features(const data::ReturnPanel& returns, std::size_t t,
                                      std::optional<std::size_t> market_column) {
  if (t + 1 < 52) return SkipDate{skip_reason(t, 52, "market regime")};
  const Vector m = market_series(returns, market_column).head(ix(t + 1));
  Regime r;
  auto compound = [&](std::size_t len) {
    double w = 1.0;
    for (std::size_t k = t + 1 - len; k <= t; ++k) w *= 1.0 + m(ix(k));
    return w - 1.0;
  };
  r.ret_4w = compound(4);
  r.ret_12w = compound(12);
  r.vol_12w = stats::sample_std(std::span<const double>(m.data() + (t + 1 - 12), 12));
  r.drawdown_52w = path_drawdown(std::span<const double>(m.data() + (t + 1 - 52), 52));
  return r;
}

Vector flatten(const Matrix& per_asset) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = per_asset;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

Matrix unflatten(const Vector& flat, std::size_t assets) {
  if (assets == 0 || static_cast<std::size_t>(flat.size()) != assets * kFeatureCount) {
    fail(ErrorKind::data, "unflatten: length " + std::to_string(flat.size()) +
                              " does not match " + std::to_string(assets) + " assets");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), ix(assets), ix(kFeatureCount));
}

Vector FeatureMatrix::flattened() const { return flatten(per_asset); }

FeatureMatrix assemble_features(Date date, std::size_t index, const Blocks& b,
                                const Params& params) {
  const Idx N = b.forecast.mu_ex_hat.size();
  if (b.forecast.sigma_mu.size() != N || b.realized_vol.size() != N || b.pca.rows() != N ||
      b.pca.cols() != 3 || b.momentum.z12_1.size() != N || b.momentum.z6m.size() != N ||
      b.momentum.z1m.size() != N || b.drawdown.size() != N || b.prev_weights.size() != N) {
    fail(ErrorKind::data, "assemble_features: block shapes disagree");
  }
  const double s = stats::sample_std(b.forecast.mu_ex_hat);
  FeatureMatrix fm;
  fm.date = date;
  fm.index = index;
  fm.per_asset.resize(N, ix(kFeatureCount));
  for (Idx i = 0; i < N; ++i) {
    auto row = fm.per_asset.row(i);
    row(mu_blend) = params.blend_ridge * b.forecast.mu_ex_hat(i) +
                    params.blend_momentum * s * b.momentum.z12_1(i) + b.rf;
    row(sigma_mu) = b.forecast.sigma_mu(i);
    row(realized_vol) = b.realized_vol(i);
    row(pc1) = b.pca(i, 0);
    row(pc2) = b.pca(i, 1);
    row(pc3) = b.pca(i, 2);
    row(z12_1) = b.momentum.z12_1(i);
    row(z6m) = b.momentum.z6m(i);
    row(z1m) = b.momentum.z1m(i);
    row(drawdown) = b.drawdown(i);
    row(prev_weight) = b.prev_weights(i);
    row(cap) = b.cap;
    row(mkt_ret_4w) = b.regime.ret_4w;
    row(mkt_ret_12w) = b.regime.ret_12w;
    row(mkt_vol_12w) = b.regime.vol_12w;
    row(mkt_drawdown) = b.regime.drawdown_52w;
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      if (!std::isfinite(row(ix(c)))) {
        fail(ErrorKind::numerical, "non-finite feature at asset " + std::to_string(i) +
                                       ", column " + std::string(kFeatureNames[c]) + " on " +
                                       date.iso());
      }
    }
  }
  return fm;
}

OrSkip<FeatureMatrix> build_features(const data::ReturnPanel& returns,
                                     const data::FactorPanel& factors, std::size_t t,
                                     const Vector& prev_weights, double cap,
                                     const Params& params) {
  if (t < params.warmup) {
    return SkipDate{"row " + std::to_string(t) + " is inside the warm-up of " +
                    std::to_string(params.warmup) + " weeks"};
  }
  Blocks b;
  auto take = [](auto&& v, auto& dst) -> std::optional<SkipDate> {
    if (auto* s = std::get_if<SkipDate>(&v)) return *s;
    dst = std::move(std::get<0>(v));
    return std::nullopt;
  };
  if (auto s = take(rolling_ridge(returns, factors, t, params.ridge_lookback, params.ridge_lambda,
                                  params.min_obs, params.factor_mean_window),
                    b.forecast)) {
    return *s;
  }
  if (auto s = take(momentum_features(returns, t), b.momentum)) return *s;
  if (auto s = take(pca_loadings(returns, t, params.pca_window), b.pca)) return *s;
  if (auto s = take(drawdown_feature(returns, t, params.drawdown_window), b.drawdown)) return *s;
  if (auto s = take(market_regime_features(returns, t, params.market_column), b.regime)) return *s;
  if (t + 1 < params.vol_window) return SkipDate{skip_reason(t, params.vol_window, "volatility")};

  const auto N = returns.asset_count();
  b.realized_vol.resize(ix(N));
  for (std::size_t i = 0; i < N; ++i) {
    b.realized_vol(ix(i)) =
        stats::sample_std(Vector(returns.simple.col(ix(i)).segment(ix(t + 1 - params.vol_window),
                                                                    ix(params.vol_window))));
  }
  if (static_cast<std::size_t>(prev_weights.size()) != N) {
    fail(ErrorKind::data, "build_features: previous weights have the wrong length");
  }
  b.prev_weights = prev_weights;
  b.cap = cap;
  b.rf = returns.rf(ix(t));
  return assemble_features(returns.dates[t], t, b, params);
}

std::vector<std::string> column_headers(const std::vector<std::string>& assets) {
  std::vector<std::string> h;
  h.reserve(assets.size() * kFeatureCount);
  for (const auto& a : assets) {
    for (const auto& blk : kBlocks) {
      for (std::size_t c = blk.first; c < blk.first + blk.count; ++c) {
        h.push_back(std::string(blk.name) + "." + std::string(kFeatureNames[c]) + "." + a);
      }
    }
  }
  return h;
}

void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureMatrix>& rows,
                       const std::vector<std::string>& assets) {
  csv::Table t;
  t.header = {"date", "row"};
  for (auto& h : column_headers(assets)) t.header.push_back(std::move(h));
  for (const auto& fm : rows) {
    std::vector<std::string> line{fm.date.iso(), std::to_string(fm.index)};
    const Vector flat = fm.flattened();
    for (Idx k = 0; k < flat.size(); ++k) line.push_back(csv::format(flat(k)));
    t.rows.push_back(std::move(line));
  }
  csv::write(path, t);
}

FeatureFile read_feature_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  if (t.header.size() < 2 || t.header[0] != "date" || t.header[1] != "row" ||
      (t.header.size() - 2) % kFeatureCount != 0) {
    fail(ErrorKind::data, path.string() + ": not a feature file");
  }
  FeatureFile f;
  const std::size_t N = (t.header.size() - 2) / kFeatureCount;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& h = t.header[2 + i * kFeatureCount];
    const auto dot = h.rfind('.');
    f.assets.push_back(dot == std::string::npos ? h : h.substr(dot + 1));
  }
  if (column_headers(f.assets) != std::vector<std::string>(t.header.begin() + 2, t.header.end())) {
    fail(ErrorKind::data, path.string() + ": feature columns out of order");
  }
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) fail(ErrorKind::data, path.string() + ": ragged row");
    Vector flat(ix(N * kFeatureCount));
    for (std::size_t k = 0; k < N * kFeatureCount; ++k) {
      const auto v = csv::parse_cell(row[k + 2], path.string());
      if (!v) fail(ErrorKind::data, path.string() + ": empty feature cell on " + row[0]);
      flat(ix(k)) = *v;
    }
    FeatureMatrix fm;
    fm.date = Date::parse(row[0]);
    fm.index = std::stoul(row[1]);
    fm.per_asset = unflatten(flat, N);
    f.rows.push_back(std::move(fm));
  }
  return f;
}

nlohmann::json schema_json(std::size_t assets, const Params& params) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : kBlocks) {
    std::vector<std::string> names;
    for (std::size_t c = b.first; c < b.first + b.count; ++c) names.emplace_back(kFeatureNames[c]);
    blocks.push_back({{"name", b.name}, {"first", b.first}, {"columns", names}});
  }
  return {{"assets", assets},
          {"features_per_asset", kFeatureCount},
          {"input_dim", assets * kFeatureCount},
          {"layout", "row-major by asset"},
          {"blocks", blocks},
          {"params", to_json(params)}};
}

}  // namespace cvarnet::features
