#pragma once

#include "cvarnet/allocators.hpp"
#include "cvarnet/data_panel.hpp"
#include "cvarnet/features.hpp"
#include "cvarnet/synth_market.hpp"
#include "cvarnet/training.hpp"
#include "cvarnet/walk_forward.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cvarnet::pipeline {

struct Market {
  data::ReturnPanel returns;
  data::FactorPanel factors;
};

/// A fixed multi-asset market with equity, bond, commodity and currency
/// style loadings and fat-tailed residuals. Plays the role of observed data.
Market reference_market(std::size_t assets = 8, std::size_t weeks = 208,
                        std::uint64_t seed = 20150102);

/// Same calendar and factor path as reference_market(assets, weeks, seed);
/// the first round(overlap * assets) assets keep their reference styles and
/// the rest are replaced by sector-like equities with new loadings.
Market transfer_market(std::size_t assets = 8, std::size_t weeks = 208,
                       std::uint64_t seed = 20150102, double overlap = 0.4);

struct LabeledSet {
  std::vector<alloc::LabeledPair> pairs;
  std::vector<train::UnlabeledItem> windows;  // one per pair, same order
  std::size_t raw_dates = 0;                  // dates with a teacher label
};

/// Features at `indices` with a uniform previous-weight placeholder; warm-up
/// dates are dropped.
std::vector<features::FeatureMatrix> feature_rows(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                                                  const std::vector<std::size_t>& indices,
                                                  const features::Params& params, double cap = 1.0);

/// Sets each pair's previous-weight column to the label of the pair before it
/// (uniform for the first).
void link_previous_labels(std::vector<alloc::LabeledPair>& pairs);

/// Teacher labels at the feature rows, then linked previous labels.
std::vector<alloc::LabeledPair> label_features(const std::vector<features::FeatureMatrix>& rows,
                                               const Matrix& returns, const alloc::LabelOptions& label);

LabeledSet build_labeled(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                         const std::vector<std::size_t>& indices, const alloc::LabelOptions& label,
                         const features::Params& params, double cap = 1.0);

std::vector<train::UnlabeledItem> windows_for(const std::vector<alloc::LabeledPair>& pairs, const Matrix& returns,
                                              std::size_t window);

/// Every row from the warm-up to the end of the panel.
std::vector<std::size_t> all_dates(std::size_t weeks, std::size_t min_hist);

train::Dataset make_dataset(const std::vector<alloc::LabeledPair>& train_pairs,
                            const LabeledSet& unlabeled_pool);

enum class Baseline { teacher, mean_variance, min_variance, risk_parity };

std::string baseline_name(Baseline b);
inline constexpr Baseline kBaselines[] = {Baseline::teacher, Baseline::mean_variance,
                                          Baseline::min_variance, Baseline::risk_parity};

/// Baseline allocation from a decision's raw features and its scenario
/// window: the CVaR teacher, or a covariance rule on the same window.
/// Mean-variance uses the blended forecast column with the cross-sectional
/// mean as target.
Vector baseline_weights(Baseline b, const Vector& features, const Matrix& window,
                        const alloc::LabelOptions& label);

std::vector<wf::Decision> decisions_from(const std::vector<alloc::LabeledPair>& pairs);

struct EvalInputs {
  std::vector<wf::Decision> decisions;  // rows without features are dropped
  std::vector<Matrix> windows;
};

/// Features and scenario windows recomputed from `returns` at `rows`, so a
/// stressed panel is seen consistently by students and baselines.
EvalInputs eval_inputs(const data::ReturnPanel& returns, const data::FactorPanel& factors,
                       const std::vector<std::size_t>& rows, const alloc::LabelOptions& label,
                       const features::Params& params, double cap);

wf::BacktestTrack evaluate_student(const nn::Checkpoint& checkpoint, const data::ReturnPanel& returns,
                                   const EvalInputs& inputs, const exec::ConstraintSpec& spec,
                                   const wf::AdaptiveConfig& adaptive);

wf::BacktestTrack evaluate_baseline(Baseline b, const data::ReturnPanel& returns, const EvalInputs& inputs,
                                    const alloc::LabelOptions& label, const exec::ConstraintSpec& spec);

}  // namespace cvarnet::pipeline
