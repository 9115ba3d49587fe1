#include "cvarnet/metrics.hpp"

#include "cvarnet/allocators.hpp"
#include "cvarnet/execution.hpp"
#include "cvarnet/rng.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <cmath>

namespace cvarnet::metrics {

std::optional<double> sharpe_annualized(std::span<const double> weekly) {
  if (weekly.size() < 2) return std::nullopt;
  if (std::all_of(weekly.begin(), weekly.end(), [&](double r) { return r == weekly.front(); })) return std::nullopt;
  const double sd = stats::sample_std(weekly);
  if (!(sd > 0.0)) return std::nullopt;
  return stats::mean(weekly) / sd * std::sqrt(kWeeksPerYear);
}

double max_drawdown(std::span<const double> weekly) {
  double wealth = 1.0, peak = 1.0, mdd = 0.0;
  for (std::size_t t = 0; t < weekly.size(); ++t) {
    if (!(weekly[t] > -1.0)) {
      fail(ErrorKind::domain, "return of " + std::to_string(weekly[t]) + " at week " +
                                  std::to_string(t) + " wipes out wealth");
    }
    wealth *= 1.0 + weekly[t];
    peak = std::max(peak, wealth);
    mdd = std::max(mdd, (peak - wealth) / peak);
  }
  return mdd;
}

double cvar_report(std::span<const double> weekly, double alpha) {
  std::vector<double> losses(weekly.size());
  std::transform(weekly.begin(), weekly.end(), losses.begin(), [](double r) { return -r; });
  return -alloc::empirical_cvar(losses, alpha);
}

double mean_turnover(const std::vector<Vector>& weights, const Vector& initial) {
  if (weights.empty()) return 0.0;
  double s = 0.0;
  const Vector* prev = &initial;
  for (const auto& w : weights) {
    s += exec::turnover(*prev, w);
    prev = &w;
  }
  return s / static_cast<double>(weights.size());
}

double annualized_return(std::span<const double> weekly) { return stats::mean(weekly) * kWeeksPerYear; }

double annualized_vol(std::span<const double> weekly) {
  return stats::sample_std(weekly) * std::sqrt(kWeeksPerYear);
}

std::optional<Interval> bootstrap_sharpe(std::span<const double> weekly, std::size_t resamples,
                                         double level, std::uint64_t seed) {
  if (weekly.size() < 2 || resamples == 0) return std::nullopt;
  Rng rng(seed, "metrics/bootstrap");
  std::vector<double> draws;
  std::vector<double> sample(weekly.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& v : sample) v = weekly[rng.below(weekly.size())];
    if (auto s = sharpe_annualized(sample)) draws.push_back(*s);
  }
  if (draws.size() < 2) return std::nullopt;
  std::sort(draws.begin(), draws.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(draws.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, draws.size() - 1);
    return draws[lo] + (pos - static_cast<double>(lo)) * (draws[hi] - draws[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return Interval{q(tail), q(1.0 - tail)};
}

Summary summarize(std::span<const double> weekly, std::span<const double> turnovers) {
  Summary s;
  s.weeks = weekly.size();
  if (weekly.empty()) return s;
  s.sharpe = sharpe_annualized(weekly);
  s.cvar95 = cvar_report(weekly, 0.95);
  s.max_drawdown = max_drawdown(weekly);
  s.mean_turnover = stats::mean(turnovers);
  s.ann_return = annualized_return(weekly);
  s.ann_vol = annualized_vol(weekly);
  return s;
}

}  // namespace cvarnet::metrics
