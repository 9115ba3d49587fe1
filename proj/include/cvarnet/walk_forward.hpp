#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/date.hpp"
#include "cvarnet/execution.hpp"
#include "cvarnet/metrics.hpp"
#include "cvarnet/nn.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::wf {

struct BacktestTrack {
  std::vector<std::size_t> decision_rows;  // weights chosen at row t earn row t + 1
  std::vector<Date> dates;                 // dates of the earning rows
  std::vector<double> net_returns;
  std::vector<Vector> targets;
  std::vector<Vector> weights;  // executed
  std::vector<double> turnover;
  std::vector<double> costs;
  std::vector<bool> rebalanced;
  Vector initial;
  std::size_t finetunes = 0;
  std::vector<std::string> flags;

  std::size_t size() const { return net_returns.size(); }
  BacktestTrack subset(const std::vector<std::size_t>& positions) const;
  metrics::Summary summary() const;
};

/// Target weights for decision k given the previously executed weights.
using Policy = std::function<Vector(std::size_t k, const Vector& prev_exec)>;

/// Runs `policy` over decision rows, executing under `spec`. Rows without a
/// following return row are rejected.
BacktestTrack backtest(const std::vector<std::size_t>& rows, const Matrix& returns,
                       const std::vector<Date>& dates, const Policy& policy,
                       const exec::ConstraintSpec& spec);

/// Past-only z-score over the last `window` entries of `history`; empty when
/// fewer than two are available.
std::optional<Vector> rolling_normalize(const std::vector<Vector>& history, const Vector& x,
                                        std::size_t window, double eps = 1e-8);

struct AdaptiveConfig {
  bool rolling_norm = true;
  std::size_t norm_window = 52;
  std::size_t finetune_every = 8;
  std::size_t finetune_window = 26;
  double lambda_to = 0.1;
  double finetune_lr = 1e-4;
  std::size_t finetune_epochs = 20;
  std::size_t mc_samples = 20;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;

  /// Train-time standardization and no fine-tuning.
  static AdaptiveConfig frozen(std::uint64_t seed = 0);
};

nlohmann::json to_json(const AdaptiveConfig& c);
AdaptiveConfig adaptive_from_json(const nlohmann::json& j);

struct FinetuneLoss {
  double value = 0.0;
  Vector grad;
};

/// -mean(w_s . r_{s+1}) + lambda_to * mean |w_s - w_{s-1}|_1 over the window,
/// with deterministic forward passes.
FinetuneLoss finetune_loss(const nn::Network& net, const std::vector<Vector>& inputs,
                           const std::vector<Vector>& realized, double lambda_to);

struct Decision {
  std::size_t row = 0;
  Vector features;  // raw flattened features at `row`
};

/// Called with the parameters at the start of each fine-tune, right after the
/// reset.
using FinetuneObserver = std::function<void(std::size_t step, const Vector& params)>;

/// Student inference with optional rolling normalization and periodic
/// fine-tune-and-reset. The previous-weight and cap feature columns are
/// overwritten with the executed weights and the level's cap.
BacktestTrack adaptive_walk_forward(const nn::Checkpoint& checkpoint, const Matrix& returns,
                                    const std::vector<Date>& dates,
                                    const std::vector<Decision>& decisions,
                                    const exec::ConstraintSpec& spec,
                                    const AdaptiveConfig& adaptive,
                                    const FinetuneObserver& observer = {});

struct RegimeSplit {
  std::vector<std::size_t> high;  // positions into the track
  std::vector<std::size_t> low;
  double threshold = 0.0;
};

/// HIGHVOL when trailing market vol at the decision row exceeds its median
/// over the track.
RegimeSplit regime_split(const BacktestTrack& track, const Vector& market, std::size_t window = 12);

}  // namespace cvarnet::wf
