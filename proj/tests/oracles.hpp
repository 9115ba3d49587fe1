#pragma once

// Independent reference implementations. Deliberately naive: loops, long
// double and exhaustive search rather than the library's algorithms.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Tail count with alpha given in thousandths so the ceiling is exact.
inline std::size_t tail_count(std::size_t S, double alpha) {
  const long long a = std::llround(alpha * 1000.0);
  const long long num = (1000 - a) * static_cast<long long>(S);
  const long long k = (num + 999) / 1000;
  return static_cast<std::size_t>(std::max<long long>(1, k));
}

// Mean of the K largest losses.
inline double cvar_worst_k(std::vector<double> losses, double alpha) {
  const std::size_t K = tail_count(losses.size(), alpha);
  std::vector<long double> l(losses.begin(), losses.end());
  for (std::size_t i = 0; i < l.size(); ++i) {
    for (std::size_t j = i + 1; j < l.size(); ++j) {
      if (l[j] > l[i]) std::swap(l[i], l[j]);
    }
  }
  long double s = 0;
  for (std::size_t i = 0; i < K; ++i) s += l[i];
  return static_cast<double>(s / K);
}

// min over l of l + sum (L - l)_+ / ((1 - alpha) S); the minimum sits on a
// sample point so scanning them is exact.
inline double ru_objective(const std::vector<double>& losses, double alpha) {
  const double S = static_cast<double>(losses.size());
  double best = std::numeric_limits<double>::infinity();
  for (double l : losses) {
    long double s = 0;
    for (double L : losses) s += L > l ? L - l : 0.0;
    best = std::min(best, static_cast<double>(l + s / ((1.0 - alpha) * S)));
  }
  return best;
}

inline std::vector<double> portfolio_losses(const Matrix& R, const Vector& w) {
  std::vector<double> out(static_cast<std::size_t>(R.rows()));
  for (Eigen::Index s = 0; s < R.rows(); ++s) {
    long double r = 0;
    for (Eigen::Index i = 0; i < R.cols(); ++i) r += static_cast<long double>(R(s, i)) * w(i);
    out[static_cast<std::size_t>(s)] = -static_cast<double>(r);
  }
  return out;
}

// Calls fn on every simplex point whose coordinates are multiples of 1/m.
inline void for_each_simplex_point(int N, int m, const std::function<void(const Vector&)>& fn) {
  std::vector<int> c(static_cast<std::size_t>(N), 0);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == N - 1) {
      c[static_cast<std::size_t>(i)] = left;
      Vector w(N);
      for (int k = 0; k < N; ++k) w(k) = static_cast<double>(c[static_cast<std::size_t>(k)]) / m;
      fn(w);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      c[static_cast<std::size_t>(i)] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, m);
}

struct GridMin {
  double value = std::numeric_limits<double>::infinity();
  Vector argmin;
};

inline GridMin grid_min(int N, double step, const std::function<double(const Vector&)>& f) {
  GridMin g;
  for_each_simplex_point(N, static_cast<int>(std::lround(1.0 / step)), [&](const Vector& w) {
    const double v = f(w);
    if (v < g.value) {
      g.value = v;
      g.argmin = w;
    }
  });
  return g;
}

inline double sharpe(const std::vector<double>& r) {
  long double m = 0;
  for (double x : r) m += x;
  m /= r.size();
  long double ss = 0;
  for (double x : r) ss += (x - m) * (x - m);
  const long double sd = std::sqrt(ss / (r.size() - 1));
  return static_cast<double>(m / sd * std::sqrt(52.0L));
}

// O(T^2): for every t, the peak is re-scanned from the start.
inline double max_drawdown(const std::vector<double>& r) {
  std::vector<long double> W{1.0L};
  for (double x : r) W.push_back(W.back() * (1.0L + x));
  long double mdd = 0;
  for (std::size_t t = 0; t < W.size(); ++t) {
    long double peak = 0;
    for (std::size_t s = 0; s <= t; ++s) peak = std::max(peak, W[s]);
    mdd = std::max(mdd, (peak - W[t]) / peak);
  }
  return static_cast<double>(mdd);
}

inline double turnover(const Vector& a, const Vector& b) {
  long double s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a(i)) - b(i));
  return static_cast<double>(s / 2);
}

// Gaussian elimination with partial pivoting.
inline Vector solve(Matrix A, Vector b) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::fabs(A(i, k)) > std::fabs(A(p, k))) p = i;
    }
    A.row(k).swap(A.row(p));
    std::swap(b(k), b(p));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      for (Eigen::Index j = k; j < n; ++j) A(i, j) -= f * A(k, j);
      b(i) -= f * b(k);
    }
  }
  Vector x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s -= A(i, j) * x(j);
    x(i) = s / A(i, i);
  }
  return x;
}

struct Eigen2 {
  Vector values;   // descending
  Matrix vectors;  // columns
};

// Cyclic Jacobi rotations for a symmetric matrix.
inline Eigen2 jacobi_eigen(Matrix A) {
  const Eigen::Index n = A.rows();
  Matrix V = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::fabs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return A(a, a) > A(b, b); });
  Eigen2 e{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    e.values(k) = A(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k)]);
    e.vectors.col(k) = V.col(idx[static_cast<std::size_t>(k)]);
  }
  return e;
}

// Central differences of f at x along the listed coordinates.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, Vector x,
                               const std::vector<Eigen::Index>& coords, double h = 1e-5) {
  Vector g(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Eigen::Index i = coords[k];
    const double xi = x(i);
    x(i) = xi + h;
    const double fp = f(x);
    x(i) = xi - h;
    const double fm = f(x);
    x(i) = xi;
    g(static_cast<Eigen::Index>(k)) = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace oracle
