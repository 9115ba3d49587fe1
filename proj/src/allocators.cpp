#include "cvarnet/allocators.hpp"

#include "cvarnet/csv.hpp"
#include "cvarnet/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cvarnet::alloc {

namespace {

using Idx = Eigen::Index;

std::size_t tail_count(std::size_t s, double alpha) {
  const double k = std::ceil((1.0 - alpha) * static_cast<double>(s) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, s);
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::config, "alpha must lie in (0, 1)");
}

void check_sigma(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    fail(ErrorKind::data, "covariance must be a non-empty square matrix");
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-8)) fail(ErrorKind::domain, "covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, sigma.diagonal().maxCoeff())) {
    fail(ErrorKind::domain, "covariance is not positive semidefinite");
  }
}

double max_eigenvalue(const Matrix& sigma) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

// Accelerated projected gradient on the simplex for a smooth objective.
Vector fista(const std::function<Vector(const Vector&)>& grad, double lipschitz, Vector w,
             std::size_t iterations) {
  if (!(lipschitz > 0.0)) return w;
  const double step = 1.0 / lipschitz;
  Vector y = w;
  double t = 1.0;
  for (std::size_t k = 0; k < iterations; ++k) {
    const Vector next = project_simplex(y - step * grad(y));
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / tn) * (next - w);
    if ((next - w).lpNorm<Eigen::Infinity>() < 1e-15) {
      w = next;
      break;
    }
    w = next;
    t = tn;
  }
  return w;
}

}  // namespace

Vector project_simplex(const Vector& v) {
  const Idx n = v.size();
  if (n == 0) fail(ErrorKind::data, "cannot project an empty vector");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Idx j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0);
}

Vector clean_weights(const Vector& w) {
  Vector out = w.cwiseMax(0.0);
  const double s = out.sum();
  if (!(s > 0.0)) fail(ErrorKind::numerical, "weight vector has no positive mass");
  return out / s;
}

double empirical_cvar(std::span<const double> losses, double alpha) {
  if (losses.empty()) fail(ErrorKind::data, "empirical_cvar of an empty sample");
  check_alpha(alpha);
  const std::size_t k = tail_count(losses.size(), alpha);
  std::vector<double> sorted(losses.begin(), losses.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  std::sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += sorted[i];
  return s / static_cast<double>(k);
}

double empirical_cvar(const Vector& losses, double alpha) {
  return empirical_cvar(std::span<const double>(losses.data(), static_cast<std::size_t>(losses.size())),
                        alpha);
}

CvarValue cvar_objective(const Matrix& scenarios, const Vector& w, double alpha) {
  check_alpha(alpha);
  const Vector loss = -(scenarios * w);
  const auto S = static_cast<std::size_t>(loss.size());
  std::vector<double> l(loss.data(), loss.data() + S);
  std::sort(l.begin(), l.end(), std::greater<>());
  const double scale = 1.0 / ((1.0 - alpha) * static_cast<double>(S));
  // F(l_j) = l_j + scale * sum_{i<j} (l_i - l_j); piecewise linear, so the
  // minimum sits on a sample.
  CvarValue best{std::numeric_limits<double>::infinity(), 0.0};
  double prefix = 0.0;
  for (std::size_t j = 0; j < S; ++j) {
    const double f = l[j] + scale * (prefix - static_cast<double>(j) * l[j]);
    if (f < best.objective) best = {f, l[j]};
    prefix += l[j];
  }
  return best;
}

TeacherResult solve_cvar_teacher(const Matrix& scenarios, double alpha,
                                 const TeacherOptions& options) {
  check_alpha(alpha);
  const Idx S = scenarios.rows();
  const Idx N = scenarios.cols();
  if (N == 0 || S == 0) fail(ErrorKind::data, "teacher needs a non-empty scenario set");
  if (static_cast<double>(S) < std::ceil(1.0 / (1.0 - alpha) - 1e-9)) {
    fail(ErrorKind::data, "teacher needs at least ceil(1 / (1 - alpha)) scenarios");
  }
  if (!scenarios.allFinite()) fail(ErrorKind::numerical, "non-finite scenario");
  const double scale = 1.0 / ((1.0 - alpha) * static_cast<double>(S));

  Vector w = Vector::Constant(N, 1.0 / static_cast<double>(N));
  Vector best_w = w;
  double best_f = cvar_objective(scenarios, w, alpha).objective;
  Vector avg = Vector::Zero(N);
  std::size_t averaged = 0;
  const std::size_t half = options.iterations / 2;
  double last_step_norm = 0.0;

  for (std::size_t k = 1; k <= options.iterations; ++k) {
    const Vector loss = -(scenarios * w);
    const double var = cvar_objective(scenarios, w, alpha).var;
    Vector g = Vector::Zero(N);
    for (Idx s = 0; s < S; ++s) {
      if (loss(s) > var) g -= scenarios.row(s).transpose();
    }
    g *= scale;
    const double gn = g.norm();
    if (gn > 0.0) {
      const Vector next = project_simplex(w - (options.step0 / std::sqrt(static_cast<double>(k))) * g / gn);
      last_step_norm = (next - w).norm();
      w = next;
    } else {
      last_step_norm = 0.0;
    }
    const double f = cvar_objective(scenarios, w, alpha).objective;
    if (f < best_f) {
      best_f = f;
      best_w = w;
    }
    if (k > half) {
      avg += w;
      ++averaged;
    }
  }

  TeacherResult r;
  r.weights = best_w;
  r.objective = best_f;
  if (averaged > 0) {
    const Vector a = project_simplex(avg / static_cast<double>(averaged));
    const double fa = cvar_objective(scenarios, a, alpha).objective;
    if (fa <= r.objective) {
      r.weights = a;
      r.objective = fa;
    }
  }
  // Corners are feasible candidates too.
  for (Idx i = 0; i < N; ++i) {
    const Vector e = Vector::Unit(N, i);
    const double fe = cvar_objective(scenarios, e, alpha).objective;
    if (fe < r.objective - 1e-15) {
      r.weights = e;
      r.objective = fe;
    }
  }
  r.weights = clean_weights(r.weights);
  const auto final_value = cvar_objective(scenarios, r.weights, alpha);
  r.objective = final_value.objective;
  r.var = final_value.var;
  r.converged = last_step_norm < 10.0 * options.step0 / std::sqrt(static_cast<double>(std::max<std::size_t>(options.iterations, 1)));
  return r;
}

Vector solve_min_variance(const Matrix& sigma) {
  check_sigma(sigma);
  const Idx N = sigma.rows();
  const double L = 2.0 * max_eigenvalue(sigma);
  Vector w = Vector::Constant(N, 1.0 / static_cast<double>(N));
  w = fista([&](const Vector& x) -> Vector { return 2.0 * sigma * x; }, L, w, 20000);
  return clean_weights(w);
}

Vector solve_mean_variance(const Vector& mu, const Matrix& sigma, double target_return) {
  check_sigma(sigma);
  const Idx N = sigma.rows();
  if (mu.size() != N) fail(ErrorKind::data, "mean-variance: mu and sigma disagree in size");
  Idx best = 0;
  const double max_mu = mu.maxCoeff(&best);
  if (target_return > max_mu + 1e-12) {
    fail(ErrorKind::infeasible, "target return " + csv::format(target_return) +
                                    " exceeds the maximum achievable " + csv::format(max_mu));
  }
  if (target_return >= max_mu) return Vector::Unit(N, best);

  Vector w = solve_min_variance(sigma);
  const double lam_max = max_eigenvalue(sigma);
  const double mu_sq = mu.squaredNorm();
  double rho = 10.0 * std::max(lam_max, 1e-12) / std::max(mu_sq, 1e-300);
  for (int round = 0; round < 40 && mu.dot(w) < target_return - 1e-12; ++round) {
    const double L = 2.0 * (lam_max + rho * mu_sq);
    w = fista(
        [&](const Vector& x) -> Vector {
          const double gap = target_return - mu.dot(x);
          Vector g = 2.0 * sigma * x;
          if (gap > 0.0) g -= 2.0 * rho * gap * mu;
          return g;
        },
        L, w, 5000);
    rho *= 10.0;
  }
  const double achieved = mu.dot(w);
  if (achieved < target_return) {
    // Mix toward the best corner just enough to meet the target.
    const double theta = (target_return - achieved) / (max_mu - achieved);
    w = (1.0 - theta) * w + theta * Vector::Unit(N, best);
  }
  return clean_weights(w);
}

Vector solve_risk_parity(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    fail(ErrorKind::data, "covariance must be a non-empty square matrix");
  }
  Vector inv(sigma.rows());
  for (Idx i = 0; i < sigma.rows(); ++i) {
    if (!(sigma(i, i) > 0.0)) {
      fail(ErrorKind::domain, "risk parity: asset " + std::to_string(i) + " has zero variance");
    }
    inv(i) = 1.0 / std::sqrt(sigma(i, i));
  }
  return inv / inv.sum();
}

Matrix scenario_window(const Matrix& returns, std::size_t t, std::size_t window) {
  if (window == 0 || t + 1 < window || t >= static_cast<std::size_t>(returns.rows())) {
    fail(ErrorKind::data, "scenario window of " + std::to_string(window) + " rows ending at row " +
                              std::to_string(t) + " is unavailable");
  }
  return returns.middleRows(static_cast<Idx>(t + 1 - window), static_cast<Idx>(window));
}

nlohmann::json to_json(const LabelOptions& o) {
  return {{"window", o.window},
          {"alpha", o.alpha},
          {"solver", "projected_subgradient"},
          {"step0", o.teacher.step0},
          {"iterations", o.teacher.iterations}};
}

LabelOptions label_options_from_json(const nlohmann::json& j) {
  LabelOptions o;
  try {
    o.window = j.value("window", o.window);
    o.alpha = j.value("alpha", o.alpha);
    o.teacher.step0 = j.value("step0", o.teacher.step0);
    o.teacher.iterations = j.value("iterations", o.teacher.iterations);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("label options: ") + e.what());
  }
  return o;
}

std::vector<std::pair<std::size_t, Vector>> label_dates(const std::vector<std::size_t>& indices,
                                                        const Matrix& returns,
                                                        const LabelOptions& options) {
  std::vector<std::pair<std::size_t, Vector>> out;
  for (std::size_t t : indices) {
    if (t + 1 < options.window || t >= static_cast<std::size_t>(returns.rows())) continue;
    const auto r = solve_cvar_teacher(scenario_window(returns, t, options.window), options.alpha,
                                      options.teacher);
    out.emplace_back(t, r.weights);
  }
  return out;
}

void write_pairs(const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path, const std::vector<LabeledPair>& pairs,
                 const std::vector<std::string>& assets) {
  csv::Table f, l;
  f.header = {"date", "row"};
  for (auto& h : features::column_headers(assets)) f.header.push_back(std::move(h));
  l.header = {"date", "row"};
  l.header.insert(l.header.end(), assets.begin(), assets.end());
  for (const auto& p : pairs) {
    std::vector<std::string> fr{p.date.iso(), std::to_string(p.index)};
    for (Idx k = 0; k < p.features.size(); ++k) fr.push_back(csv::format(p.features(k)));
    std::vector<std::string> lr{p.date.iso(), std::to_string(p.index)};
    for (Idx k = 0; k < p.weights.size(); ++k) lr.push_back(csv::format(p.weights(k)));
    f.rows.push_back(std::move(fr));
    l.rows.push_back(std::move(lr));
  }
  csv::write(features_path, f);
  csv::write(labels_path, l);
}

PairFile read_pairs(const std::filesystem::path& features_path,
                    const std::filesystem::path& labels_path) {
  const auto ff = features::read_feature_csv(features_path);
  const auto lt = csv::read(labels_path);
  if (lt.header.size() < 3 || lt.header[0] != "date" || lt.header[1] != "row") {
    fail(ErrorKind::data, labels_path.string() + ": not a label file");
  }
  PairFile out;
  out.assets.assign(lt.header.begin() + 2, lt.header.end());
  if (out.assets != ff.assets) fail(ErrorKind::data, "feature and label files disagree on assets");
  if (lt.rows.size() != ff.rows.size()) fail(ErrorKind::data, "feature and label files differ in length");
  for (std::size_t r = 0; r < lt.rows.size(); ++r) {
    const auto& row = lt.rows[r];
    if (row.size() != lt.header.size()) fail(ErrorKind::data, labels_path.string() + ": ragged row");
    if (row[0] != ff.rows[r].date.iso()) {
      fail(ErrorKind::data, "feature and label dates differ at " + row[0]);
    }
    LabeledPair p;
    p.date = ff.rows[r].date;
    p.index = ff.rows[r].index;
    p.features = ff.rows[r].flattened();
    p.weights.resize(static_cast<Idx>(out.assets.size()));
    for (std::size_t i = 0; i < out.assets.size(); ++i) {
      const auto v = csv::parse_cell(row[i + 2], labels_path.string());
      if (!v) fail(ErrorKind::data, labels_path.string() + ": empty weight on " + row[0]);
      p.weights(static_cast<Idx>(i)) = *v;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace cvarnet::alloc
