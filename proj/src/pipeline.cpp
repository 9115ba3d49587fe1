#include "cvarnet/pipeline.hpp"

#include "cvarnet/rng.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace cvarnet::pipeline {

namespace {

using Idx = Eigen::Index;

struct Style {
  const char* name;
  double alpha;
  std::array<double, 6> beta;
  double resid;
  int group;  // 0 equity, 1 defensive, 2 real asset
};

// Mkt-RF, SMB, HML, RMW, CMA, Mom
constexpr std::array<Style, 8> kStyles{{
    {"US_LARGE", 0.0002, {1.00, -0.15, 0.05, 0.10, 0.00, 0.00}, 0.010, 0},
    {"US_SMALL", 0.0001, {1.10, 0.70, 0.15, -0.10, 0.05, 0.00}, 0.014, 0},
    {"US_VALUE", 0.0001, {0.95, 0.10, 0.55, 0.15, 0.25, -0.10}, 0.011, 0},
    {"US_GROWTH", 0.0003, {1.05, -0.10, -0.45, 0.05, -0.20, 0.15}, 0.012, 0},
    {"TREASURY", 0.0000, {-0.08, 0.00, 0.02, 0.00, 0.05, 0.00}, 0.006, 1},
    {"GOLD", 0.0001, {0.08, 0.00, 0.05, 0.00, 0.00, 0.05}, 0.019, 2},
    {"COMMODITY", 0.0000, {0.45, 0.10, 0.30, 0.00, 0.00, 0.10}, 0.028, 2},
    {"EM_EQUITY", 0.0002, {1.15, 0.20, 0.20, -0.05, 0.00, 0.05}, 0.022, 0},
}};

synth::MarketModel reference_model(std::size_t assets, std::uint64_t seed) {
  synth::MarketModel m;
  const Idx N = static_cast<Idx>(assets);

  Vector target_mean(6);
  target_mean << 0.0013, 0.0002, 0.0001, 0.0005, 0.0003, 0.0009;
  Matrix A = Matrix::Zero(6, 6);
  A.diagonal() << 0.06, 0.10, 0.12, 0.14, 0.10, 0.04;
  A(1, 0) = 0.05;
  A(2, 5) = -0.06;
  A(5, 2) = -0.05;
  A(4, 2) = 0.08;
  Vector sd(6);
  sd << 0.022, 0.011, 0.012, 0.008, 0.008, 0.017;
  Matrix corr = Matrix::Identity(6, 6);
  auto setc = [&](int i, int j, double v) { corr(i, j) = corr(j, i) = v; };
  setc(0, 1, 0.25);
  setc(0, 2, 0.05);
  setc(0, 5, -0.20);
  setc(2, 4, 0.55);
  setc(2, 5, -0.35);
  setc(3, 4, 0.20);
  setc(1, 3, -0.25);
  m.factors.transition = A;
  m.factors.intercept = (Matrix::Identity(6, 6) - A) * target_mean;
  m.factors.innovation_cov = sd.asDiagonal() * corr * sd.asDiagonal();
  m.factors.spectral_radius = synth::spectral_radius(A);

  m.rf = {0.0004 * (1.0 - 0.97), 0.97, 0.00003};

  m.loadings.alpha.resize(N);
  m.loadings.beta.resize(N, 6);
  m.loadings.residual_std.resize(N);
  std::vector<int> group(assets);
  for (std::size_t i = 0; i < assets; ++i) {
    const auto& s = kStyles[i % kStyles.size()];
    const std::size_t round = i / kStyles.size();
    m.assets.push_back(round == 0 ? std::string(s.name) : std::string(s.name) + "_" + std::to_string(round + 1));
    const double tilt = 1.0 + 0.1 * static_cast<double>(round);
    m.loadings.alpha(static_cast<Idx>(i)) = s.alpha;
    for (int f = 0; f < 6; ++f) m.loadings.beta(static_cast<Idx>(i), f) = s.beta[static_cast<std::size_t>(f)] * tilt;
    m.loadings.residual_std(static_cast<Idx>(i)) = s.resid;
    group[i] = s.group;
  }

  Matrix rc = Matrix::Identity(N, N);
  for (Idx i = 0; i < N; ++i) {
    for (Idx j = 0; j < i; ++j) {
      const int gi = group[static_cast<std::size_t>(i)], gj = group[static_cast<std::size_t>(j)];
      const double v = gi == gj ? (gi == 0 ? 0.30 : 0.20) : 0.05;
      rc(i, j) = rc(j, i) = v;
    }
  }
  m.copula.corr = synth::nearest_correlation(rc);
  m.copula.nu = 5.0;
  // Unit-variance t(5) marginals.
  Rng rng(seed, "reference/marginals");
  const double scale = std::sqrt(3.0 / 5.0);
  for (Idx i = 0; i < N; ++i) {
    std::vector<double> draws(2000);
    for (auto& d : draws) d = scale * rng.normal() / std::sqrt(rng.chi_square(5.0) / 5.0);
    std::sort(draws.begin(), draws.end());
    m.copula.marginals.push_back(std::move(draws));
  }
  return m;
}

}  // namespace

Market reference_market(std::size_t assets, std::size_t weeks, std::uint64_t seed) {
  if (assets == 0) fail(ErrorKind::config, "reference market needs at least one asset");
  const auto model = reference_model(assets, seed);
  auto world = synth::generate_world(model, weeks, seed, Date::from_ymd(2015, 1, 2));
  return {std::move(world.returns), std::move(world.factors)};
}

Market transfer_market(std::size_t assets, std::size_t weeks, std::uint64_t seed, double overlap) {
  if (assets == 0) fail(ErrorKind::config, "transfer market needs at least one asset");
  if (!(overlap >= 0.0 && overlap <= 1.0)) fail(ErrorKind::config, "overlap must lie in [0, 1]");
  auto m = reference_model(assets, seed);
  const Idx N = static_cast<Idx>(assets);
  const Idx keep = static_cast<Idx>(std::llround(overlap * static_cast<double>(assets)));
  Rng rng(seed, "transfer/loadings");
  Rng marg(seed, "transfer/marginals");
  const double scale = std::sqrt(3.0 / 5.0);
  for (Idx i = keep; i < N; ++i) {
    m.assets[static_cast<std::size_t>(i)] = "SECTOR_" + std::to_string(i - keep + 1);
    m.loadings.alpha(i) = 0.0002 * rng.normal();
    m.loadings.beta(i, 0) = 0.6 + 0.8 * rng.uniform();
    for (int f = 1; f < 6; ++f) m.loadings.beta(i, f) = 0.3 * rng.normal();
    m.loadings.residual_std(i) = 0.012 + 0.018 * rng.uniform();
    std::vector<double> draws(2000);
    for (auto& d : draws) d = scale * marg.normal() / std::sqrt(marg.chi_square(5.0) / 5.0);
    std::sort(draws.begin(), draws.end());
    m.copula.marginals[static_cast<std::size_t>(i)] = std::move(draws);
  }
  // Sector residuals share an industry block.
  Matrix rc = m.copula.corr;
  for (Idx i = keep; i < N; ++i) {
    for (Idx j = 0; j < N; ++j) {
      if (i == j) continue;
      rc(i, j) = rc(j, i) = j >= keep ? 0.35 : 0.10;
    }
  }
  m.copula.corr = synth::nearest_correlation(rc);
  auto world = synth::generate_world(m, weeks, seed, Date::from_ymd(2015, 1, 2));
  return {std::move(world.returns), std::move(world.factors)};
}

std::vector<std::size_t> all_dates(std::size_t weeks, std::size_t min_hist) {
  std::vector<std::size_t> out;
  for (std::size_t t = min_hist; t < weeks; ++t) out.push_back(t);
  return out;
}

void link_previous_labels(std::vector<alloc::LabeledPair>& pairs) {
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Idx N = pairs[k].weights.size();
    const Vector prev = k == 0 ? Vector::Constant(N, 1.0 / static_cast<double>(N)) : pairs[k - 1].weights;
    for (Idx i = 0; i < N; ++i) pairs[k].features(i * static_cast<Idx>(features::kFeatureCount) + features::prev_weight) = prev(i);
  }
}

std::vector<features::FeatureMatrix> feature_rows(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                                                  const std::vector<std::size_t>& indices,
                                                  const features::Params& params, double cap) {
  const Idx N = static_cast<Idx>(returns.asset_count());
  const Vector uniform = Vector::Constant(N, 1.0 / static_cast<double>(N));
  std::vector<features::FeatureMatrix> out;
  for (std::size_t t : indices) {
    auto fm = features::build_features(returns, factors, t, uniform, cap, params);
    if (auto* m = std::get_if<features::FeatureMatrix>(&fm)) out.push_back(std::move(*m));
  }
  return out;
}

std::vector<alloc::LabeledPair> label_features(const std::vector<features::FeatureMatrix>& rows,
                                               const Matrix& returns, const alloc::LabelOptions& label) {
  std::vector<std::size_t> indices;
  std::map<std::size_t, const features::FeatureMatrix*> by_row;
  for (const auto& r : rows) {
    indices.push_back(r.index);
    by_row[r.index] = &r;
  }
  std::vector<alloc::LabeledPair> pairs;
  for (auto& [t, w] : alloc::label_dates(indices, returns, label)) {
    const auto* fm = by_row.at(t);
    pairs.push_back({fm->date, t, fm->flattened(), w});
  }
  link_previous_labels(pairs);
  return pairs;
}

LabeledSet build_labeled(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                         const std::vector<std::size_t>& indices, const alloc::LabelOptions& label,
                         const features::Params& params, double cap) {
  LabeledSet out;
  out.pairs = label_features(feature_rows(returns, factors, indices, params, cap), returns.simple, label);
  out.raw_dates = out.pairs.size();
  out.windows = windows_for(out.pairs, returns.simple, label.window);
  return out;
}

std::vector<train::UnlabeledItem> windows_for(const std::vector<alloc::LabeledPair>& pairs, const Matrix& returns,
                                              std::size_t window) {
  std::vector<train::UnlabeledItem> out;
  for (const auto& p : pairs) out.push_back({p.features, alloc::scenario_window(returns, p.index, window)});
  return out;
}

train::Dataset make_dataset(const std::vector<alloc::LabeledPair>& train_pairs,
                            const LabeledSet& unlabeled_pool) {
  return {train_pairs, unlabeled_pool.windows};
}

std::string baseline_name(Baseline b) {
  switch (b) {
    case Baseline::teacher: return "Teacher";
    case Baseline::mean_variance: return "Mean-Var";
    case Baseline::min_variance: return "Min-Var";
    case Baseline::risk_parity: return "Risk-Parity";
  }
  return "?";
}

Vector baseline_weights(Baseline b, const Vector& x, const Matrix& window,
                        const alloc::LabelOptions& label) {
  if (b == Baseline::teacher) return alloc::solve_cvar_teacher(window, label.alpha, label.teacher).weights;
  const Matrix sigma = stats::sample_covariance(window);
  switch (b) {
    case Baseline::mean_variance: {
      const Idx N = window.cols();
      Vector mu(N);
      for (Idx i = 0; i < N; ++i) mu(i) = x(i * static_cast<Idx>(features::kFeatureCount) + features::mu_blend);
      return alloc::solve_mean_variance(mu, sigma, mu.mean());
    }
    case Baseline::min_variance: return alloc::solve_min_variance(sigma);
    default: return alloc::solve_risk_parity(sigma);
  }
}

std::vector<wf::Decision> decisions_from(const std::vector<alloc::LabeledPair>& pairs) {
  std::vector<wf::Decision> d;
  d.reserve(pairs.size());
  for (const auto& p : pairs) d.push_back({p.index, p.features});
  return d;
}

EvalInputs eval_inputs(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                       const std::vector<std::size_t>& rows, const alloc::LabelOptions& label,
                       const features::Params& params, double cap) {
  EvalInputs in;
  const Idx N = static_cast<Idx>(returns.asset_count());
  const Vector uniform = Vector::Constant(N, 1.0 / static_cast<double>(N));
  for (std::size_t t : rows) {
    if (t + 1 < label.window) continue;
    auto fm = features::build_features(returns, factors, t, uniform, cap, params);
    if (auto* m = std::get_if<features::FeatureMatrix>(&fm)) {
      in.decisions.push_back({t, m->flattened()});
      in.windows.push_back(alloc::scenario_window(returns.simple, t, label.window));
    }
  }
  return in;
}

wf::BacktestTrack evaluate_student(const nn::Checkpoint& checkpoint, const data::ReturnPanel& returns,
                                   const EvalInputs& inputs, const exec::ConstraintSpec& spec,
                                   const wf::AdaptiveConfig& adaptive) {
  return wf::adaptive_walk_forward(checkpoint, returns.simple, returns.dates, inputs.decisions, spec, adaptive);
}

wf::BacktestTrack evaluate_baseline(Baseline b, const data::ReturnPanel& returns, const EvalInputs& inputs,
                                    const alloc::LabelOptions& label, const exec::ConstraintSpec& spec) {
  std::vector<std::size_t> rows;
  std::vector<Vector> targets;
  for (std::size_t k = 0; k < inputs.decisions.size(); ++k) {
    rows.push_back(inputs.decisions[k].row);
    targets.push_back(baseline_weights(b, inputs.decisions[k].features, inputs.windows[k], label));
  }
  const wf::Policy policy = [&](std::size_t k, const Vector&) { return targets[k]; };
  return wf::backtest(rows, returns.simple, returns.dates, policy, spec);
}

}  // namespace cvarnet::pipeline
