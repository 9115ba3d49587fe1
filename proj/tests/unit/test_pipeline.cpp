#include "cvarnet/pipeline.hpp"
#include "cvarnet/synth_market.hpp"

#include <gtest/gtest.h>

using namespace cvarnet;

namespace {

const pipeline::LabeledSet& reference_set() {
  static const auto set = [] {
    const auto m = pipeline::reference_market();
    return pipeline::build_labeled(m.returns, m.factors, pipeline::all_dates(m.returns.weeks(), 104), {}, {});
  }();
  return set;
}

}  // namespace

TEST(Pipeline, ReferenceMarketLabels) {
  const auto& set = reference_set();
  EXPECT_EQ(set.raw_dates, 104u);
  EXPECT_EQ(set.pairs.size(), 104u);
  EXPECT_EQ(set.windows.size(), set.pairs.size());
  for (const auto& p : set.pairs) {
    EXPECT_NEAR(p.weights.sum(), 1.0, 1e-9);
    EXPECT_EQ(p.features.size(), 8 * 16);
  }
  // The previous-weight column carries the prior label.
  for (std::size_t k = 1; k < set.pairs.size(); ++k)
    for (Eigen::Index i = 0; i < 8; ++i)
      EXPECT_EQ(set.pairs[k].features(i * 16 + features::prev_weight), set.pairs[k - 1].weights(i));
}

TEST(Pipeline, SandwichWarmupFallsAndAnchoringRecovers) {
  const auto& set = reference_set();
  const auto d = pipeline::make_dataset(set.pairs, set);
  train::TrainConfig c;
  const auto r = train::train_student(train::StudentKind::dnn_sandwich, d, 8, {}, c);
  double s0_first = -1, s0_last = 0, s2_last = 0;
  for (const auto& p : r.curve) {
    if (p.stage == "S0" && s0_first < 0) s0_first = p.mse;
    if (p.stage == "S0") s0_last = p.mse;
    if (p.stage == "S2") s2_last = p.mse;
  }
  EXPECT_LE(s0_last, 0.1 * s0_first) << s0_first << " -> " << s0_last;
  EXPECT_LE(s2_last, 1.1 * s0_last) << s0_last << " vs " << s2_last;
}

TEST(Pipeline, BaselinesProduceSimplexWeights) {
  const auto& set = reference_set();
  const auto& p = set.pairs.back();
  for (auto b : pipeline::kBaselines) {
    const Vector w = pipeline::baseline_weights(b, p.features, set.windows.back().window, {});
    EXPECT_NEAR(w.sum(), 1.0, 1e-9) << pipeline::baseline_name(b);
    EXPECT_GE(w.minCoeff(), -1e-12);
  }
  EXPECT_EQ(pipeline::baseline_weights(pipeline::Baseline::teacher, p.features, set.windows.back().window, {}),
            p.weights);
}

TEST(Pipeline, TransferMarketSharesFactorsButNotAssets) {
  const auto ref = pipeline::reference_market();
  const auto tr = pipeline::transfer_market();
  EXPECT_EQ(tr.factors.factors, ref.factors.factors);
  EXPECT_EQ(tr.returns.rf, ref.returns.rf);
  ASSERT_EQ(tr.returns.asset_count(), 8u);
  // round(0.4 * 8) = 3 styles kept
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(tr.returns.assets[i], ref.returns.assets[i]);
  for (std::size_t i = 3; i < 8; ++i) EXPECT_EQ(tr.returns.assets[i], "SECTOR_" + std::to_string(i - 2));
  EXPECT_NE(tr.returns.simple, ref.returns.simple);
  EXPECT_EQ(pipeline::transfer_market().returns.simple, tr.returns.simple);

  const auto all = pipeline::transfer_market(8, 208, 20150102, 1.0);
  EXPECT_EQ(all.returns.assets, ref.returns.assets);
  EXPECT_THROW(pipeline::transfer_market(8, 208, 1, 1.5), Error);
}
