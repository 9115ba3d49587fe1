#pragma once

#include "cvarnet/core.hpp"

#include <cmath>
#include <span>

namespace cvarnet::stats {

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Unbiased (n - 1) standard deviation; 0 for fewer than two points.
inline double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double sample_std(const Vector& x) {
  return sample_std(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

/// Unbiased covariance of the columns of `x` (rows are observations).
inline Matrix sample_covariance(const Matrix& x) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

/// Symmetric square-root factor L with L L^T = a for PSD `a`; negative
/// eigenvalues from rounding are clipped to zero.
inline Matrix psd_factor(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

struct RidgeFit {
  double alpha = 0.0;
  Vector beta;
  Vector residuals;
  double residual_std = 0.0;  // unbiased (n - 1)
};

/// min ||y - alpha - X beta||^2 + lambda ||beta||^2 with the intercept left
/// unpenalized, solved in closed form on centered data.
inline RidgeFit ridge_regression(const Matrix& x, const Vector& y, double lambda) {
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = y.mean();
  const Matrix xc = x.rowwise() - xbar;
  const Vector yc = y.array() - ybar;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  RidgeFit fit;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    fail(ErrorKind::numerical, "ridge normal equations are singular");
  }
  fit.beta = ldlt.solve(xc.transpose() * yc);
  fit.alpha = ybar - xbar.dot(fit.beta);
  fit.residuals = (y - x * fit.beta).array() - fit.alpha;
  fit.residual_std = n > 1 ? sample_std(fit.residuals) : 0.0;
  return fit;
}

}  // namespace cvarnet::stats
