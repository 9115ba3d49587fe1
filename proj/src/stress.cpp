#include "cvarnet/stress.hpp"

#include "cvarnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cvarnet::stress {

namespace {
using Idx = Eigen::Index;
}

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::none: return "none";
    case Kind::vol_bursts: return "vol_bursts";
    case Kind::jumps: return "jumps";
    case Kind::whipsaw: return "whipsaw";
    case Kind::corr_spike: return "corr_spike";
    case Kind::combo: return "combo";
  }
  return "?";
}

Kind kind_from_name(const std::string& s) {
  for (auto k : {Kind::none, Kind::vol_bursts, Kind::jumps, Kind::whipsaw, Kind::corr_spike, Kind::combo}) {
    if (kind_name(k) == s) return k;
  }
  fail(ErrorKind::config, "unknown stress kind " + s);
}

void StressSpec::validate() const {
  if (!(sigma_s >= 1.0)) fail(ErrorKind::config, "sigma_s must be at least 1");
  if (burst_len < 1) fail(ErrorKind::config, "burst length must be at least 1");
  if (!(p_jump >= 0.0 && p_jump <= 1.0)) fail(ErrorKind::config, "p_jump must lie in [0, 1]");
  if (!(mu_jump > 0.0)) fail(ErrorKind::config, "mu_jump must be positive");
  if (!(p_neg >= 0.0 && p_neg <= 1.0)) fail(ErrorKind::config, "p_neg must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::config, "gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::config, "lambda must lie in [0, 1]");
}

nlohmann::json to_json(const StressSpec& s) {
  return {{"kind", kind_name(s.kind)}, {"sigma_s", s.sigma_s}, {"n_bursts", s.n_bursts},
          {"burst_len", s.burst_len},  {"p_jump", s.p_jump},   {"mu_jump", s.mu_jump},
          {"p_neg", s.p_neg},          {"gamma", s.gamma},     {"lambda", s.lambda},
          {"seed", s.seed}};
}

StressSpec stress_from_json(const nlohmann::json& j) {
  StressSpec s;
  try {
    s.kind = kind_from_name(j.value("kind", std::string("none")));
    s.sigma_s = j.value("sigma_s", s.sigma_s);
    s.n_bursts = j.value("n_bursts", s.n_bursts);
    s.burst_len = j.value("burst_len", s.burst_len);
    s.p_jump = j.value("p_jump", s.p_jump);
    s.mu_jump = j.value("mu_jump", s.mu_jump);
    s.p_neg = j.value("p_neg", s.p_neg);
    s.gamma = j.value("gamma", s.gamma);
    s.lambda = j.value("lambda", s.lambda);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("stress spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::size_t> place_bursts(std::size_t T, std::size_t n, std::size_t len,
                                      std::uint64_t seed) {
  if (n == 0) return {};
  if (len == 0 || n * len > T) {
    fail(ErrorKind::config, "cannot place " + std::to_string(n) + " bursts of " +
                                std::to_string(len) + " weeks in " + std::to_string(T));
  }
  // Placements of n blocks biject with n-subsets of [0, T - n*len + n).
  const std::size_t slots = T - n * len + n;
  Rng rng(seed, "stress/bursts");
  std::set<std::size_t> chosen;
  for (std::size_t j = slots - n; j < slots; ++j) {  // Floyd's sampling
    const std::size_t r = static_cast<std::size_t>(rng.below(j + 1));
    if (!chosen.insert(r).second) chosen.insert(j);
  }
  std::vector<std::size_t> starts;
  std::size_t k = 0;
  for (std::size_t y : chosen) starts.push_back(y + k++ * (len - 1));
  return starts;
}

Matrix stress_vol_bursts(const Matrix& x, double sigma_s, std::size_t n_bursts,
                         std::size_t burst_len, std::uint64_t seed) {
  if (n_bursts == 0 || sigma_s == 1.0) return x;
  const auto starts = place_bursts(static_cast<std::size_t>(x.rows()), n_bursts, burst_len, seed);
  Matrix out = x;
  for (std::size_t s : starts) {
    for (std::size_t t = s; t < s + burst_len; ++t) {
      const Idx r = static_cast<Idx>(t);
      const double mean = x.row(r).mean();
      for (Idx i = 0; i < x.cols(); ++i) out(r, i) = mean + (x(r, i) - mean) * sigma_s;
    }
  }
  return out;
}

Matrix stress_jumps(const Matrix& x, double p_jump, double mu_jump, double p_neg,
                    std::uint64_t seed, JumpTrace* trace) {
  if (p_jump == 0.0) return x;
  Matrix out = x;
  Rng market(seed, "stress/jumps/market");
  Rng idio(seed, "stress/jumps/idio");
  const double sd = mu_jump / 2.0;
  for (Idx t = 0; t < x.rows(); ++t) {
    const double u = market.uniform();
    const double size = std::abs(mu_jump + sd * market.normal());
    const double sign = market.uniform() < p_neg ? -1.0 : 1.0;
    if (u < p_jump) {
      out.row(t).array() += sign * size;
      if (trace) {
        trace->market_weeks.push_back(static_cast<std::size_t>(t));
        trace->market_sizes.push_back(sign * size);
      }
    }
    for (Idx i = 0; i < x.cols(); ++i) {
      const double v = idio.uniform();
      const double eta = sd * idio.normal();
      if (v < p_jump / 3.0) {
        out(t, i) += eta;
        if (trace) ++trace->idiosyncratic;
      }
    }
  }
  return out;
}

Matrix stress_whipsaw(const Matrix& x, double gamma) {
  if (gamma == 0.0) return x;
  Matrix out = x;
  for (Idx t = 0; t < x.rows(); ++t) {
    const double mean = x.row(t).mean();
    const double a = (t % 2 == 0) ? 1.0 : -1.0;
    for (Idx i = 0; i < x.cols(); ++i) {
      const double eps = x(t, i) - mean;
      out(t, i) = x(t, i) + gamma * (a * std::abs(mean) - mean) - 0.3 * gamma * eps;
    }
  }
  return out;
}

Matrix stress_corr_spike(const Matrix& x, double lambda) {
  if (lambda == 0.0) return x;
  Matrix out = x;
  for (Idx t = 0; t < x.rows(); ++t) {
    const double mean = x.row(t).mean();
    for (Idx i = 0; i < x.cols(); ++i) out(t, i) = (1.0 - lambda) * x(t, i) + lambda * mean;
  }
  return out;
}

Matrix stress_combo(const Matrix& x, const StressSpec& spec) {
  const Rng root(spec.seed, "stress/combo");
  const Matrix a = stress_corr_spike(x, spec.lambda);
  const Matrix b = stress_vol_bursts(a, spec.sigma_s, spec.n_bursts, spec.burst_len, root.split("bursts").key());
  return stress_jumps(b, spec.p_jump, spec.mu_jump, spec.p_neg, root.split("jumps").key());
}

Matrix apply(const Matrix& x, const StressSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case Kind::none: return x;
    case Kind::vol_bursts: return stress_vol_bursts(x, spec.sigma_s, spec.n_bursts, spec.burst_len, spec.seed);
    case Kind::jumps: return stress_jumps(x, spec.p_jump, spec.mu_jump, spec.p_neg, spec.seed);
    case Kind::whipsaw: return stress_whipsaw(x, spec.gamma);
    case Kind::corr_spike: return stress_corr_spike(x, spec.lambda);
    case Kind::combo: return stress_combo(x, spec);
  }
  return x;
}

}  // namespace cvarnet::stress
