#include "cvarnet/training.hpp"

#include "../oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cvarnet;
using namespace cvarnet::train;

namespace {

constexpr std::size_t kAssets = 3;

Dataset toy_dataset(std::size_t labeled, std::size_t unlabeled, std::uint64_t seed) {
  Rng rng(seed, "toy");
  Dataset d;
  for (std::size_t k = 0; k < labeled; ++k) {
    alloc::LabeledPair p;
    p.date = Date::from_ymd(2001, 1, 5).plus_days(static_cast<int>(7 * k));
    p.index = 104 + k;
    p.features = Vector(static_cast<Eigen::Index>(kAssets * 16));
    for (Eigen::Index i = 0; i < p.features.size(); ++i) p.features(i) = rng.normal();
    p.weights = Vector(static_cast<Eigen::Index>(kAssets));
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights(i) = rng.uniform();
    p.weights /= p.weights.sum();
    d.labeled.push_back(p);
  }
  for (std::size_t k = 0; k < unlabeled; ++k) {
    UnlabeledItem u;
    u.features = Vector(static_cast<Eigen::Index>(kAssets * 16));
    for (Eigen::Index i = 0; i < u.features.size(); ++i) u.features(i) = rng.normal();
    u.window = Matrix(40, static_cast<Eigen::Index>(kAssets));
    for (Eigen::Index i = 0; i < u.window.size(); ++i) u.window.data()[i] = 0.03 * rng.normal();
    d.unlabeled.push_back(u);
  }
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs_s0 = 20;
  c.cycles = 2;
  c.epochs_sup = 5;
  c.epochs_unsup = 5;
  c.epochs_s2 = 10;
  return c;
}

nn::Network fresh(StudentKind kind, std::uint64_t seed) {
  ArchitectureConfig arch;
  arch.hidden = {8, 6};
  return nn::Network::initialized(student_spec(kind, kAssets, arch), seed);
}

std::vector<alloc::LabeledPair> pairs(std::size_t n) {
  std::vector<alloc::LabeledPair> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    v[k].index = k;
    v[k].features = Vector::Constant(1, double(k));
    v[k].weights = Vector::Constant(1, 1.0);
  }
  return v;
}

}  // namespace

TEST(Losses, Supervised) {
  const std::vector<Vector> a{(Vector(2) << 1, 0).finished()}, b{(Vector(2) << 0, 1).finished()};
  EXPECT_EQ(supervised_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(supervised_loss(a, b), 2.0);

  Rng rng(1, "mse");
  std::vector<Vector> p(7, Vector(4)), t(7, Vector(4));
  long double s = 0;
  for (int k = 0; k < 7; ++k)
    for (int i = 0; i < 4; ++i) {
      p[k](i) = rng.uniform();
      t[k](i) = rng.uniform();
      s += (static_cast<long double>(p[k](i)) - t[k](i)) * (static_cast<long double>(p[k](i)) - t[k](i));
    }
  EXPECT_NEAR(supervised_loss(p, t), static_cast<double>(s / 7), 1e-12);
  EXPECT_EQ(bnn_supervised_loss(p, t, 3.0, 0.0), supervised_loss(p, t));
  EXPECT_EQ(bnn_supervised_loss(p, t, 0.0, 0.1), supervised_loss(p, t));
  EXPECT_NEAR(bnn_supervised_loss(a, std::vector<Vector>{(Vector(2) << 0.5, 0.5).finished()}, 2.0, 0.1), 0.7, 1e-15);
}

TEST(Losses, Unsupervised) {
  Rng rng(2, "unsup");
  Matrix window(104, 36);
  for (Eigen::Index i = 0; i < window.size(); ++i) window.data()[i] = 0.03 * rng.normal();
  const Vector u = Vector::Constant(36, 1.0 / 36);
  EXPECT_NEAR(unsupervised_loss(u, window, 0.0, 1.0).total, std::log(1.0 / 36), 1e-12);
  EXPECT_NEAR(unsupervised_loss(u, window, 0.0, 1.0).total, -3.5835, 1e-4);
  EXPECT_EQ(unsupervised_loss(Vector::Unit(36, 4), window, 0.0, 1.0).total, 0.0);

  Vector w(36);
  for (Eigen::Index i = 0; i < 36; ++i) w(i) = rng.uniform();
  w /= w.sum();
  const auto t = unsupervised_loss(w, window, 1.0, 0.05);
  long double ent = 0;
  for (Eigen::Index i = 0; i < 36; ++i) ent += static_cast<long double>(w(i)) * std::log(static_cast<long double>(w(i)));
  const double cvar = oracle::cvar_worst_k(oracle::portfolio_losses(window, w), 0.95);
  EXPECT_NEAR(t.total, cvar + 0.05 * static_cast<double>(ent), 1e-12);

  std::vector<Eigen::Index> all(36);
  for (std::size_t k = 0; k < 36; ++k) all[k] = static_cast<Eigen::Index>(k);
  const Vector fd = oracle::numeric_gradient(
      [&](const Vector& x) { return unsupervised_loss(x, window, 1.0, 0.05).total; }, w, all, 1e-7);
  EXPECT_LT((t.grad - fd).norm() / fd.norm(), 1e-5);
}

TEST(Losses, EntropyGradientAtUniform) {
  const Matrix window = Matrix::Zero(20, 5);
  const Vector u = Vector::Constant(5, 0.2);
  const auto t = unsupervised_loss(u, window, 0.0, 1.0);
  const double expect = std::log(0.2) + 1.0;
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(t.grad(i), expect, 1e-14);
  std::vector<Eigen::Index> all{0, 1, 2, 3, 4};
  const Vector fd = oracle::numeric_gradient(
      [&](const Vector& x) { return unsupervised_loss(x, window, 0.0, 1.0).total; }, u, all);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(fd(i), expect, 1e-8);
}

TEST(TrainSupervised, MemorizesOnePair) {
  auto d = toy_dataset(1, 0, 3);
  auto c = small_config();
  const auto r = train_supervised(fresh(StudentKind::dnn_sup, 1), d.labeled, c, 2000);
  EXPECT_LT(r.curve.back().mse, 1e-3);
}

TEST(TrainSupervised, ZeroLearningRateIsNoOp) {
  auto d = toy_dataset(5, 0, 4);
  auto c = small_config();
  c.learning_rate = 0.0;
  const auto net = fresh(StudentKind::bnn_sup, 2);
  EXPECT_EQ(train_supervised(net, d.labeled, c).checkpoint.params, net.params());
}

TEST(TrainSupervised, Deterministic) {
  auto d = toy_dataset(12, 0, 5);
  auto c = small_config();
  c.batch_size = 4;
  const auto a = train_supervised(fresh(StudentKind::bnn_sup, 3), d.labeled, c);
  const auto b = train_supervised(fresh(StudentKind::bnn_sup, 3), d.labeled, c);
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
  EXPECT_EQ(a.steps, expected_steps(c, 12, 0, false));
}

TEST(TrainSandwich, NoCyclesReducesToSupervised) {
  auto d = toy_dataset(10, 6, 6);
  auto c = small_config();
  c.cycles = 0;
  for (auto kind : {StudentKind::dnn_sandwich, StudentKind::bnn_sandwich}) {
    const auto s = train_sandwich(fresh(kind, 4), d, c);
    const auto p = train_supervised(fresh(kind, 4), d.labeled, c);
    EXPECT_EQ(s.checkpoint.params, p.checkpoint.params) << student_name(kind);
  }
}

TEST(TrainSandwich, ZeroUnsupervisedWeightsMatchSupervisedAB) {
  auto d = toy_dataset(10, 6, 7);
  auto c = small_config();
  c.lambda_cvar = 0.0;
  c.lambda_div = 0.0;
  const std::size_t total = c.epochs_s0 + c.cycles * c.epochs_sup + c.epochs_s2;
  for (auto kind : {StudentKind::dnn_sandwich, StudentKind::bnn_sandwich}) {
    const auto s = train_sandwich(fresh(kind, 5), d, c);
    const auto p = train_supervised(fresh(kind, 5), d.labeled, c, total);
    EXPECT_EQ(s.checkpoint.params, p.checkpoint.params) << student_name(kind);
    EXPECT_EQ(s.steps, expected_steps(c, 10, 6, true));
  }
}

TEST(Split, CountsAndDeterminism) {
  const auto s = split_dataset(pairs(104), pairs(323), 42);
  EXPECT_EQ(s.train.size(), 256u);
  EXPECT_EQ(s.val.size(), 85u);
  EXPECT_EQ(s.test.size(), 86u);
  const auto again = split_dataset(pairs(104), pairs(323), 42);
  for (std::size_t k = 0; k < s.test.size(); ++k) EXPECT_EQ(s.test[k].index, again.test[k].index);

  const auto none = split_dataset(pairs(20), {}, 1);
  EXPECT_EQ(none.train.size(), 20u);
  EXPECT_TRUE(none.val.empty());
  EXPECT_TRUE(none.test.empty());
  EXPECT_FALSE(none.warnings.empty());
}

TEST(Standardizer, ZeroVarianceColumnsKeepUnitScale) {
  const auto s = fit_standardizer({(Vector(2) << 1, 5).finished(), (Vector(2) << 3, 5).finished()});
  EXPECT_EQ(s.mean(0), 2.0);
  EXPECT_EQ(s.std(1), 1.0);
  EXPECT_NEAR(s.std(0), std::sqrt(2.0), 1e-15);
}
