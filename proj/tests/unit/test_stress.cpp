#include "cvarnet/rng.hpp"
#include "cvarnet/stress.hpp"

#include <gtest/gtest.h>

using namespace cvarnet;
using namespace cvarnet::stress;

namespace {

Matrix panel(Eigen::Index T, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed, "panel");
  Matrix x(T, N);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 0.002 + 0.02 * rng.normal();
  return x;
}

Matrix row(double a, double b) { return (Matrix(1, 2) << a, b).finished(); }

}  // namespace

TEST(VolBursts, IdentityCasesAndArithmetic) {
  const Matrix x = panel(100, 4, 1);
  EXPECT_EQ(stress_vol_bursts(x, 2.0, 0, 8, 3), x);
  EXPECT_EQ(stress_vol_bursts(x, 1.0, 3, 8, 3), x);
  const Matrix one = stress_vol_bursts(row(0.01, 0.03), 2.0, 1, 1, 0);
  EXPECT_NEAR(one(0, 0), 0.00, 1e-15);
  EXPECT_NEAR(one(0, 1), 0.04, 1e-15);
}

TEST(VolBursts, PlacementIsDisjointAndCoversAllStarts) {
  std::vector<int> hits(20, 0);
  for (std::uint64_t s = 0; s < 4000; ++s) {
    const auto starts = place_bursts(20, 3, 4, s);
    ASSERT_EQ(starts.size(), 3u);
    for (std::size_t k = 1; k < 3; ++k) EXPECT_GE(starts[k], starts[k - 1] + 4);
    EXPECT_LE(starts.back() + 4, 20u);
    ++hits[starts[0]];
  }
  EXPECT_GT(hits[0], 0);
  EXPECT_GT(hits[8], 0);
  EXPECT_EQ(hits[9], 0);
  EXPECT_THROW(place_bursts(10, 3, 4, 0), Error);
}

TEST(Jumps, IdentityAndSignForcing) {
  const Matrix x = panel(500, 3, 2);
  EXPECT_EQ(stress_jumps(x, 0.0, 0.08, 0.8, 4), x);

  JumpTrace trace;
  const Matrix y = stress_jumps(x, 0.03, 0.08, 1.0, 5, &trace);
  ASSERT_FALSE(trace.market_weeks.empty());
  for (double s : trace.market_sizes) EXPECT_LT(s, 0.0);
  // Without idiosyncratic draws the whole row shifts by the market jump.
  const Matrix z = stress_jumps(Matrix::Zero(500, 3), 0.03, 0.08, 1.0, 5);
  for (std::size_t k = 0; k < trace.market_weeks.size(); ++k) {
    const auto t = static_cast<Eigen::Index>(trace.market_weeks[k]);
    int down = 0;
    for (Eigen::Index i = 0; i < 3; ++i) down += y(t, i) < x(t, i);
    EXPECT_GE(down, 2);
    EXPECT_LT(z.row(t).mean(), 0.0);
  }
}

TEST(Jumps, FrequencyOverLongHorizon) {
  JumpTrace trace;
  stress_jumps(Matrix::Zero(100000, 1), 0.03, 0.08, 0.8, 6, &trace);
  EXPECT_NEAR(trace.market_weeks.size() / 1e5, 0.03, 0.01);
  std::size_t neg = 0;
  for (double s : trace.market_sizes) neg += s < 0;
  EXPECT_NEAR(double(neg) / trace.market_sizes.size(), 0.8, 0.03);
}

TEST(Whipsaw, HandEvaluation) {
  EXPECT_EQ(stress_whipsaw(panel(10, 3, 3), 0.0), panel(10, 3, 3));
  Matrix single(2, 1);
  single << 0.02, 0.02;
  const Matrix s = stress_whipsaw(single, 0.7);
  EXPECT_NEAR(s(0, 0), 0.02, 1e-15);
  EXPECT_NEAR(s(1, 0), -0.008, 1e-15);

  Matrix two(2, 2);
  two << 0.01, 0.03, 0.01, 0.03;
  const Matrix w = stress_whipsaw(two, 1.0);
  EXPECT_NEAR(w(0, 0), 0.013, 1e-15);
  EXPECT_NEAR(w(0, 1), 0.027, 1e-15);
  EXPECT_NEAR(w(1, 0), -0.027, 1e-15);
  EXPECT_NEAR(w(1, 1), -0.013, 1e-15);
}

TEST(CorrSpike, Arithmetic) {
  const Matrix x = panel(10, 3, 4);
  EXPECT_EQ(stress_corr_spike(x, 0.0), x);
  const Matrix full = stress_corr_spike(x, 1.0);
  for (Eigen::Index t = 0; t < 10; ++t)
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(full(t, i), x.row(t).mean(), 1e-16);
  const Matrix r = stress_corr_spike(row(0.01, 0.03), 0.7);
  EXPECT_NEAR(r(0, 0), 0.017, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.023, 1e-15);
}

TEST(Combo, IdentityDeterminismAndOrder) {
  const Matrix x = panel(200, 4, 5);
  StressSpec id;
  id.kind = Kind::combo;
  id.lambda = 0.0;
  id.sigma_s = 1.0;
  id.p_jump = 0.0;
  EXPECT_EQ(stress_combo(x, id), x);

  StressSpec s;
  s.kind = Kind::combo;
  s.seed = 11;
  EXPECT_EQ(apply(x, s), apply(x, s));

  const Rng root(s.seed, "stress/combo");
  const Matrix rev = stress_corr_spike(
      stress_vol_bursts(stress_jumps(x, s.p_jump, s.mu_jump, s.p_neg, root.split("jumps").key()), s.sigma_s,
                        s.n_bursts, s.burst_len, root.split("bursts").key()),
      s.lambda);
  EXPECT_GT((stress_combo(x, s) - rev).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Spec, NamesAndValidation) {
  for (auto k : {Kind::none, Kind::vol_bursts, Kind::jumps, Kind::whipsaw, Kind::corr_spike, Kind::combo})
    EXPECT_EQ(kind_from_name(kind_name(k)), k);
  StressSpec bad;
  bad.p_neg = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(kind_from_name("earthquake"), Error);
}
