#include "cvarnet/walk_forward.hpp"

#include "cvarnet/features.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <cmath>

namespace cvarnet::wf {

namespace {
using Idx = Eigen::Index;
}

BacktestTrack BacktestTrack::subset(const std::vector<std::size_t>& positions) const {
  BacktestTrack s;
  s.initial = initial;
  for (std::size_t p : positions) {
    s.decision_rows.push_back(decision_rows[p]);
    s.dates.push_back(dates[p]);
    s.net_returns.push_back(net_returns[p]);
    s.targets.push_back(targets[p]);
    s.weights.push_back(weights[p]);
    s.turnover.push_back(turnover[p]);
    s.costs.push_back(costs[p]);
    s.rebalanced.push_back(rebalanced[p]);
  }
  return s;
}

metrics::Summary BacktestTrack::summary() const { return metrics::summarize(net_returns, turnover); }

BacktestTrack backtest(const std::vector<std::size_t>& rows, const Matrix& returns,
                       const std::vector<Date>& dates, const Policy& policy,
                       const exec::ConstraintSpec& spec) {
  spec.validate();
  const auto T = static_cast<std::size_t>(returns.rows());
  const Idx N = returns.cols();
  if (dates.size() != T) fail(ErrorKind::data, "backtest: dates and returns differ in length");
  BacktestTrack tr;
  tr.initial = Vector::Constant(N, 1.0 / static_cast<double>(N));
  Vector prev = tr.initial;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t t = rows[k];
    if (t + 1 >= T) fail(ErrorKind::data, "decision row " + std::to_string(t) + " has no next-week return");
    if (k > 0 && rows[k] <= rows[k - 1]) fail(ErrorKind::data, "decision rows must increase");
    const Vector target = policy(k, prev);
    if (target.size() != N) fail(ErrorKind::data, "policy returned the wrong number of weights");
    const auto e = exec::execute(prev, target, spec);
    const Vector realized = returns.row(static_cast<Idx>(t + 1)).transpose();
    tr.decision_rows.push_back(t);
    tr.dates.push_back(dates[t + 1]);
    tr.net_returns.push_back(exec::net_return(e.weights, realized, e.cost));
    tr.targets.push_back(target);
    tr.weights.push_back(e.weights);
    tr.turnover.push_back(e.turnover);
    tr.costs.push_back(e.cost);
    tr.rebalanced.push_back(e.turnover > 0.0);
    prev = e.weights;
  }
  return tr;
}

std::optional<Vector> rolling_normalize(const std::vector<Vector>& history, const Vector& x,
                                        std::size_t window, double eps) {
  const std::size_t n = std::min(window, history.size());
  if (n < 2) return std::nullopt;
  const std::size_t first = history.size() - n;
  Vector mean = Vector::Zero(x.size());
  for (std::size_t s = first; s < history.size(); ++s) mean += history[s];
  mean /= static_cast<double>(n);
  Vector var = Vector::Zero(x.size());
  for (std::size_t s = first; s < history.size(); ++s) var += (history[s] - mean).cwiseAbs2();
  const Vector sd = (var / static_cast<double>(n - 1)).cwiseSqrt();
  return (x - mean).cwiseQuotient((sd.array() + eps).matrix());
}

FinetuneLoss finetune_loss(const nn::Network& net, const std::vector<Vector>& inputs,
                           const std::vector<Vector>& realized, double lambda_to) {
  const std::size_t W = inputs.size();
  if (W == 0 || realized.size() != W) fail(ErrorKind::data, "fine-tune window is empty or misaligned");
  std::vector<nn::Tape> tapes(W);
  std::vector<Vector> w(W);
  for (std::size_t s = 0; s < W; ++s) w[s] = net.forward(inputs[s], tapes[s], nullptr);
  auto sign = [](double v) { return double((v > 0) - (v < 0)); };
  FinetuneLoss out;
  out.grad = Vector::Zero(net.params().size());
  for (std::size_t s = 0; s < W; ++s) {
    out.value -= w[s].dot(realized[s]) / static_cast<double>(W);
    Vector up = -realized[s] / static_cast<double>(W);
    if (lambda_to > 0.0 && W > 1) {
      const double c = lambda_to / static_cast<double>(W - 1);
      if (s > 0) {
        out.value += c * (w[s] - w[s - 1]).lpNorm<1>();
        up += c * (w[s] - w[s - 1]).unaryExpr(sign);
      }
      if (s + 1 < W) up -= c * (w[s + 1] - w[s]).unaryExpr(sign);
    }
    out.grad += net.backward(tapes[s], up);
  }
  return out;
}

AdaptiveConfig AdaptiveConfig::frozen(std::uint64_t seed) {
  AdaptiveConfig c;
  c.rolling_norm = false;
  c.finetune_every = 0;
  c.finetune_epochs = 0;
  c.seed = seed;
  return c;
}

nlohmann::json to_json(const AdaptiveConfig& c) {
  return {{"rolling_norm", c.rolling_norm},       {"norm_window", c.norm_window},
          {"finetune_every", c.finetune_every},   {"finetune_window", c.finetune_window},
          {"lambda_to", c.lambda_to},             {"finetune_lr", c.finetune_lr},
          {"finetune_epochs", c.finetune_epochs}, {"mc_samples", c.mc_samples},
          {"seed", c.seed},                       {"clip_norm", c.clip_norm}};
}

AdaptiveConfig adaptive_from_json(const nlohmann::json& j) {
  AdaptiveConfig c;
  try {
    c.rolling_norm = j.value("rolling_norm", c.rolling_norm);
    c.norm_window = j.value("norm_window", c.norm_window);
    c.finetune_every = j.value("finetune_every", c.finetune_every);
    c.finetune_window = j.value("finetune_window", c.finetune_window);
    c.lambda_to = j.value("lambda_to", c.lambda_to);
    c.finetune_lr = j.value("finetune_lr", c.finetune_lr);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.seed = j.value("seed", c.seed);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("adaptive config: ") + e.what());
  }
  if (c.lambda_to < 0.0 || c.finetune_lr < 0.0 || c.mc_samples == 0) {
    fail(ErrorKind::config, "adaptive config: invalid lambda_to, finetune_lr or mc_samples");
  }
  return c;
}

BacktestTrack adaptive_walk_forward(const nn::Checkpoint& checkpoint, const Matrix& returns,
                                    const std::vector<Date>& dates,
                                    const std::vector<Decision>& decisions,
                                    const exec::ConstraintSpec& spec,
                                    const AdaptiveConfig& adaptive,
                                    const FinetuneObserver& observer) {
  const Idx N = returns.cols();
  const std::size_t F = features::kFeatureCount;
  if (static_cast<std::size_t>(N) != checkpoint.spec.output ||
      static_cast<std::size_t>(N) * F != checkpoint.spec.input) {
    fail(ErrorKind::data, "checkpoint does not match the evaluation universe");
  }
  nn::Network net = checkpoint.network();
  const bool bayes = checkpoint.spec.bayesian();
  std::vector<Vector> raw_hist, inputs;
  std::vector<std::size_t> rows;
  for (const auto& d : decisions) rows.push_back(d.row);
  std::size_t finetunes = 0, fallbacks = 0, skipped = 0;
  const double cap = spec.w_max;

  auto finetune = [&](std::size_t k) {
    net.set_params(checkpoint.params);
    if (observer) observer(k, net.params());
    const std::size_t lo = k > adaptive.finetune_window ? k - adaptive.finetune_window : 0;
    const std::size_t W = k - lo;
    if (W < 2) return;
    std::vector<Vector> realized;
    for (std::size_t s = lo; s < k; ++s) {
      realized.push_back(returns.row(static_cast<Idx>(rows[s] + 1)).transpose());
    }
    std::vector<Vector> window(inputs.begin() + static_cast<std::ptrdiff_t>(lo), inputs.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t e = 0; e < adaptive.finetune_epochs; ++e) {
      Vector g = finetune_loss(net, window, realized, adaptive.lambda_to).grad;
      const double norm = g.norm();
      if (!std::isfinite(norm)) {
        net.set_params(checkpoint.params);
        ++skipped;
        return;
      }
      if (adaptive.clip_norm > 0.0 && norm > adaptive.clip_norm) g *= adaptive.clip_norm / norm;
      net.mutable_params() -= adaptive.finetune_lr * g;
    }
    if (!net.params().allFinite()) {
      net.set_params(checkpoint.params);
      ++skipped;
      return;
    }
    ++finetunes;
  };

  const Policy policy = [&](std::size_t k, const Vector& prev) -> Vector {
    if (adaptive.finetune_every > 0 && adaptive.finetune_epochs > 0 && k > 0 &&
        k % adaptive.finetune_every == 0) {
      finetune(k);
    }
    Vector x = decisions[k].features;
    if (static_cast<std::size_t>(x.size()) != static_cast<std::size_t>(N) * F) {
      fail(ErrorKind::data, "decision features have the wrong length");
    }
    for (Idx i = 0; i < N; ++i) {
      x(i * static_cast<Idx>(F) + features::prev_weight) = prev(i);
      x(i * static_cast<Idx>(F) + features::cap) = cap;
    }
    std::optional<Vector> xn;
    if (adaptive.rolling_norm) xn = rolling_normalize(raw_hist, x, adaptive.norm_window);
    if (!xn) {
      if (adaptive.rolling_norm) ++fallbacks;
      xn = checkpoint.normalize(x);
    }
    raw_hist.push_back(x);
    inputs.push_back(*xn);
    if (bayes) return nn::mc_average(net, *xn, adaptive.mc_samples, adaptive.seed, k).mean;
    return net.forward(*xn);
  };

  BacktestTrack tr = backtest(rows, returns, dates, policy, spec);
  tr.finetunes = finetunes;
  if (fallbacks) tr.flags.push_back("normalization_fallback:" + std::to_string(fallbacks));
  if (skipped) tr.flags.push_back("finetune_skipped:" + std::to_string(skipped));
  return tr;
}

RegimeSplit regime_split(const BacktestTrack& track, const Vector& market, std::size_t window) {
  RegimeSplit out;
  const std::size_t n = track.size();
  if (n == 0) return out;
  std::vector<double> vol(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t t = track.decision_rows[p];
    if (t >= static_cast<std::size_t>(market.size())) fail(ErrorKind::data, "market series too short");
    const std::size_t len = std::min(window, t + 1);
    vol[p] = len >= 2 ? stats::sample_std(std::span<const double>(market.data() + (t + 1 - len), len)) : 0.0;
  }
  std::vector<double> sorted = vol;
  std::sort(sorted.begin(), sorted.end());
  out.threshold = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  for (std::size_t p = 0; p < n; ++p) (vol[p] > out.threshold ? out.high : out.low).push_back(p);
  return out;
}

}  // namespace cvarnet::wf
