#include "cvarnet/synth_market.hpp"

#include "cvarnet/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cvarnet::synth {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

nlohmann::json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Vector Var1Model::unconditional_mean() const {
  const auto k = transition.rows();
  return (Matrix::Identity(k, k) - transition).lu().solve(intercept);
}

double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Var1Model fit_var1(const Matrix& series) {
  const auto T = series.rows();
  const auto k = series.cols();
  if (T < 30) fail(ErrorKind::data, "VAR(1) fit needs at least 30 rows");
  const auto n = T - 1;
  Matrix design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = series.topRows(n);
  const Matrix target = series.bottomRows(n);

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k + 1) fail(ErrorKind::numerical, "VAR(1) design matrix is singular");
  const Matrix coef = qr.solve(target);  // (k+1) x k

  Var1Model m;
  m.intercept = coef.row(0).transpose();
  m.transition = coef.bottomRows(k).transpose();
  const Matrix resid = target - design * coef;
  const double dof = static_cast<double>(std::max<Eigen::Index>(n - k - 1, 1));
  m.innovation_cov = resid.transpose() * resid / dof;
  m.innovation_cov = 0.5 * (m.innovation_cov + m.innovation_cov.transpose());
  m.spectral_radius = spectral_radius(m.transition);
  return m;
}

Matrix simulate_var1(const Var1Model& model, std::size_t horizon, Rng& rng,
                     const std::optional<Vector>& initial) {
  if (!model.stationary()) {
    fail(ErrorKind::numerical, "refusing to simulate non-stationary VAR(1) (spectral radius " +
                                   std::to_string(model.spectral_radius) + ")");
  }
  const auto k = model.intercept.size();
  const Matrix chol = stats::psd_factor(model.innovation_cov);
  Vector state = initial ? *initial : model.unconditional_mean();
  Matrix out(static_cast<Eigen::Index>(horizon), k);
  Vector z(k);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.normal();
    state = model.intercept + model.transition * state + chol * z;
    out.row(static_cast<Eigen::Index>(t)) = state.transpose();
  }
  return out;
}

Ar1Model fit_ar1(std::span<const double> series) {
  if (series.size() < 3) fail(ErrorKind::data, "AR(1) fit needs at least 3 observations");
  const std::size_t n = series.size() - 1;
  const auto lag = series.first(n);
  const auto cur = series.subspan(1);
  const double mx = stats::mean(lag);
  const double my = stats::mean(cur);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lag[i] - mx) * (lag[i] - mx);
    sxy += (lag[i] - mx) * (cur[i] - my);
  }
  Ar1Model m;
  if (sxx <= 1e-30) {
    m.phi = 0.0;
    m.intercept = my;
  } else {
    m.phi = sxy / sxx;
    m.intercept = my - m.phi * mx;
  }
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = cur[i] - m.intercept - m.phi * lag[i];
    ssr += e * e;
  }
  m.sigma = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2)) : 0.0;
  return m;
}

Vector simulate_ar1(const Ar1Model& model, std::size_t horizon, Rng& rng,
                    std::optional<double> initial) {
  if (!(std::abs(model.phi) < 1.0)) {
    fail(ErrorKind::numerical, "refusing to simulate non-stationary AR(1) (phi = " +
                                   std::to_string(model.phi) + ")");
  }
  double x = initial.value_or(model.unconditional_mean());
  Vector out(static_cast<Eigen::Index>(horizon));
  for (std::size_t t = 0; t < horizon; ++t) {
    x = model.intercept + model.phi * x + model.sigma * rng.normal();
    out(static_cast<Eigen::Index>(t)) = x;
  }
  return out;
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double base = static_cast<double>(concordant + discordant);
  const double denom = std::sqrt((base + static_cast<double>(ties_x)) * (base + static_cast<double>(ties_y)));
  return denom > 0.0 ? static_cast<double>(concordant - discordant) / denom : 0.0;
}

Matrix nearest_correlation(const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (c + c.transpose()));
  const Vector clipped = es.eigenvalues().cwiseMax(1e-10);
  Matrix psd = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  const Vector inv_sd = psd.diagonal().cwiseSqrt().cwiseInverse();
  psd = inv_sd.asDiagonal() * psd * inv_sd.asDiagonal();
  psd = 0.5 * (psd + psd.transpose());
  psd.diagonal().setOnes();
  return psd;
}

double empirical_quantile(std::span<const double> sorted, double u) {
  if (sorted.empty()) fail(ErrorKind::data, "empty marginal sample");
  if (sorted.size() == 1) return sorted[0];
  const double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

CopulaModel fit_copula(const Matrix& residuals, double nu) {
  if (!(nu > 2.0)) fail(ErrorKind::config, "copula degrees of freedom must exceed 2");
  const auto T = residuals.rows();
  const auto N = residuals.cols();
  if (T < 2) fail(ErrorKind::data, "copula fit needs at least two rows");
  CopulaModel m;
  m.nu = nu;
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    cols[static_cast<std::size_t>(i)].assign(residuals.col(i).data(), residuals.col(i).data() + T);
  }
  Matrix tau_corr = Matrix::Identity(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const double tau = kendall_tau(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
      const double rho = std::sin(std::numbers::pi * tau / 2.0);
      tau_corr(i, j) = tau_corr(j, i) = rho;
    }
  }
  m.corr = nearest_correlation(tau_corr);
  Eigen::LLT<Matrix> llt(m.corr);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::numerical, "copula correlation is not positive definite after projection");
  }
  for (auto& c : cols) std::sort(c.begin(), c.end());
  m.marginals = std::move(cols);
  return m;
}

Matrix sample_copula(const CopulaModel& model, std::size_t horizon, Rng& rng) {
  const auto N = model.corr.rows();
  Eigen::LLT<Matrix> llt(model.corr);
  if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "copula correlation not PD");
  const Matrix L = llt.matrixL();
  const boost::math::students_t tdist(model.nu);
  Matrix out(static_cast<Eigen::Index>(horizon), N);
  Vector n(N);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) n(i) = rng.normal();
    const Vector z = L * n;
    const double g = rng.chi_square(model.nu) / model.nu;
    const double scale = 1.0 / std::sqrt(g);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double u = boost::math::cdf(tdist, z(i) * scale);
      out(static_cast<Eigen::Index>(t), i) =
          empirical_quantile(model.marginals[static_cast<std::size_t>(i)], u);
    }
  }
  return out;
}

LoadingsFit fit_loadings(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                         double ridge_lambda) {
  if (returns.weeks() != factors.weeks()) {
    fail(ErrorKind::data, "loadings fit needs aligned return and factor panels");
  }
  const auto T = static_cast<Eigen::Index>(returns.weeks());
  const auto N = static_cast<Eigen::Index>(returns.asset_count());
  LoadingsFit out;
  out.model.alpha.resize(N);
  out.model.beta.resize(N, factors.factors.cols());
  out.model.residual_std.resize(N);
  out.standardized_residuals.resize(T, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector excess = returns.simple.col(i) - returns.rf;
    const auto fit = stats::ridge_regression(factors.factors, excess, ridge_lambda);
    out.model.alpha(i) = fit.alpha;
    out.model.beta.row(i) = fit.beta.transpose();
    out.model.residual_std(i) = fit.residual_std;
    if (fit.residual_std > 0.0) {
      out.standardized_residuals.col(i) = fit.residuals / fit.residual_std;
    } else {
      out.standardized_residuals.col(i).setZero();
    }
  }
  return out;
}

data::ReturnPanel reconstruct_returns(const LoadingsModel& loadings, const Matrix& factors,
                                      const Matrix& residuals, const Vector& rf,
                                      std::vector<Date> dates, std::vector<std::string> assets) {
  const auto T = factors.rows();
  const auto N = loadings.alpha.size();
  if (loadings.beta.rows() != N || loadings.beta.cols() != factors.cols() ||
      residuals.rows() != T || residuals.cols() != N || rf.size() != T ||
      static_cast<Eigen::Index>(dates.size()) != T ||
      static_cast<Eigen::Index>(assets.size()) != N) {
    fail(ErrorKind::data, "reconstruct_returns: shape mismatch");
  }
  Matrix excess = factors * loadings.beta.transpose() + residuals;
  excess.rowwise() += loadings.alpha.transpose();
  Matrix total = excess.colwise() + rf;
  return data::ReturnPanel::from_simple(std::move(dates), std::move(assets), std::move(total), rf);
}

MarketModel fit_market(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                       const FitOptions& options) {
  MarketModel m;
  m.assets = returns.assets;
  m.factors = fit_var1(factors.factors);
  m.rf = fit_ar1(std::span<const double>(returns.rf.data(), static_cast<std::size_t>(returns.rf.size())));
  auto lf = fit_loadings(returns, factors, options.ridge_lambda);
  m.loadings = std::move(lf.model);
  m.copula = fit_copula(lf.standardized_residuals, options.nu);
  return m;
}

World generate_world(const MarketModel& model, std::size_t horizon, std::uint64_t world_seed,
                     Date first_week) {
  Rng factor_rng(world_seed, "synth/factors");
  Rng rf_rng(world_seed, "synth/rf");
  Rng resid_rng(world_seed, "synth/residuals");
  const Matrix f = simulate_var1(model.factors, horizon, factor_rng);
  const Vector rf = simulate_ar1(model.rf, horizon, rf_rng);
  Matrix eps = sample_copula(model.copula, horizon, resid_rng);
  eps = eps * model.loadings.residual_std.asDiagonal();

  std::vector<Date> dates;
  dates.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    dates.push_back(first_week.plus_days(static_cast<std::int32_t>(7 * t)));
  }
  World w;
  w.returns = reconstruct_returns(model.loadings, f, eps, rf, dates, model.assets);
  w.factors.dates = std::move(dates);
  w.factors.factors = f;
  w.factors.rf = rf;
  return w;
}

std::vector<std::size_t> stride_dates(std::size_t horizon, std::size_t min_hist,
                                      std::size_t stride) {
  if (stride == 0) fail(ErrorKind::config, "stride must be positive");
  std::vector<std::size_t> out;
  for (std::size_t t = min_hist; t < horizon; t += stride) out.push_back(t);
  return out;
}

Matrix pearson_correlation(const Matrix& x) {
  const Matrix cov = stats::sample_covariance(x);
  const Vector inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
}

CorrelationReport compare_correlations(const Matrix& real, const Matrix& synthetic, double band) {
  if (real.rows() != synthetic.rows() || real.cols() != synthetic.cols()) {
    fail(ErrorKind::data, "correlation matrices differ in shape");
  }
  CorrelationReport rep;
  rep.difference = real - synthetic;
  std::vector<double> off;
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    for (Eigen::Index j = 0; j < real.cols(); ++j) {
      if (i != j) off.push_back(std::abs(rep.difference(i, j)));
    }
  }
  if (off.empty()) {
    rep.fraction_within = 1.0;
    return rep;
  }
  std::sort(off.begin(), off.end());
  rep.max_abs = off.back();
  rep.abs_quantile90 = empirical_quantile(off, 0.9);
  const auto within = std::count_if(off.begin(), off.end(), [&](double d) { return d <= band; });
  rep.fraction_within = static_cast<double>(within) / static_cast<double>(off.size());
  return rep;
}

nlohmann::json to_json(const MarketModel& m) {
  nlohmann::json j;
  j["assets"] = m.assets;
  j["var1"] = {{"intercept", vector_json(m.factors.intercept)},
               {"transition", matrix_json(m.factors.transition)},
               {"innovation_cov", matrix_json(m.factors.innovation_cov)},
               {"spectral_radius", m.factors.spectral_radius}};
  j["ar1"] = {{"intercept", m.rf.intercept}, {"phi", m.rf.phi}, {"sigma", m.rf.sigma}};
  j["loadings"] = {{"alpha", vector_json(m.loadings.alpha)},
                   {"beta", matrix_json(m.loadings.beta)},
                   {"residual_std", vector_json(m.loadings.residual_std)}};
  j["copula"] = {{"corr", matrix_json(m.copula.corr)},
                 {"nu", m.copula.nu},
                 {"marginals", m.copula.marginals}};
  return j;
}

MarketModel market_from_json(const nlohmann::json& j) {
  try {
    MarketModel m;
    m.assets = j.at("assets").get<std::vector<std::string>>();
    const auto& v = j.at("var1");
    m.factors.intercept = vector_from_json(v.at("intercept"));
    m.factors.transition = matrix_from_json(v.at("transition"));
    m.factors.innovation_cov = matrix_from_json(v.at("innovation_cov"));
    m.factors.spectral_radius = spectral_radius(m.factors.transition);
    const auto& a = j.at("ar1");
    m.rf = {a.at("intercept").get<double>(), a.at("phi").get<double>(), a.at("sigma").get<double>()};
    const auto& l = j.at("loadings");
    m.loadings.alpha = vector_from_json(l.at("alpha"));
    m.loadings.beta = matrix_from_json(l.at("beta"));
    m.loadings.residual_std = vector_from_json(l.at("residual_std"));
    const auto& c = j.at("copula");
    m.copula.corr = matrix_from_json(c.at("corr"));
    m.copula.nu = c.at("nu").get<double>();
    m.copula.marginals = c.at("marginals").get<std::vector<std::vector<double>>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed market model JSON: ") + e.what());
  }
}

}  // namespace cvarnet::synth
