#pragma once

#include "cvarnet/allocators.hpp"
#include "cvarnet/core.hpp"
#include "cvarnet/nn.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::train {

struct TrainConfig {
  std::optional<double> beta;  // KL weight; 1 / (labeled count) when unset
  double lambda_cvar = 1.0;
  double lambda_div = 0.05;
  std::size_t epochs_s0 = 200;
  std::size_t cycles = 5;
  std::size_t epochs_sup = 50;
  std::size_t epochs_unsup = 50;
  std::size_t epochs_s2 = 100;
  double learning_rate = 0.05;
  std::size_t batch_size = 0;  // 0 = full batch
  double clip_norm = 5.0;
  double alpha = 0.95;
  std::uint64_t model_seed = 0;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct UnlabeledItem {
  Vector features;
  Matrix window;  // W x N scenario returns
};

struct Dataset {
  std::vector<alloc::LabeledPair> labeled;
  std::vector<UnlabeledItem> unlabeled;
};

double supervised_loss(const std::vector<Vector>& predicted, const std::vector<Vector>& teacher);
double bnn_supervised_loss(const std::vector<Vector>& predicted, const std::vector<Vector>& teacher,
                           double kl_total, double beta);

struct UnsupervisedTerms {
  double cvar = 0.0;
  double div = 0.0;  // sum w log w
  double total = 0.0;
  Vector grad;       // d total / d w
};

/// lambda_cvar * CVaR_alpha(-R w) + lambda_div * sum w log w.
UnsupervisedTerms unsupervised_loss(const Vector& w, const Matrix& window, double lambda_cvar,
                                    double lambda_div, double alpha = 0.95);

/// Global z-score; zero-variance columns get std 1.
struct Standardizer {
  Vector mean;
  Vector std;
};
Standardizer fit_standardizer(const std::vector<Vector>& rows);

struct CurvePoint {
  std::string stage;  // S0, S1-sup, S1-unsup, S2, SUP
  std::size_t cycle = 0;
  std::size_t epoch = 0;
  double mse = 0.0;
  double kl = 0.0;
  double cvar = 0.0;
  double div = 0.0;
  double total = 0.0;
};

struct TrainResult {
  nn::Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
  std::size_t steps = 0;
};

/// Gradient steps implied by the schedule and batch counts.
std::size_t expected_steps(const TrainConfig& c, std::size_t labeled, std::size_t unlabeled,
                           bool sandwich);

/// Supervised imitation for epochs_s0 + epochs_s2 epochs (plus cycles *
/// epochs_sup when `total_epochs` is given explicitly).
TrainResult train_supervised(nn::Network net, const std::vector<alloc::LabeledPair>& labeled,
                             const TrainConfig& config,
                             std::optional<std::size_t> total_epochs = std::nullopt);

/// S0 warm-up, `cycles` x (supervised, unsupervised), S2 anchoring.
TrainResult train_sandwich(nn::Network net, const Dataset& dataset, const TrainConfig& config);

enum class StudentKind { dnn_sup, bnn_sup, dnn_sandwich, bnn_sandwich };

std::string student_name(StudentKind k);
StudentKind student_from_name(const std::string& name);
bool is_bayesian(StudentKind k);
bool is_sandwich(StudentKind k);

struct ArchitectureConfig {
  std::vector<std::size_t> hidden{64, 32};
  std::size_t variational_layers = 2;
  double prior_sigma = 1.0;
};

nlohmann::json to_json(const ArchitectureConfig& a);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

nn::NetworkSpec student_spec(StudentKind kind, std::size_t assets, const ArchitectureConfig& arch);

/// Builds and trains one student from seed.
TrainResult train_student(StudentKind kind, const Dataset& dataset, std::size_t assets,
                          const ArchitectureConfig& arch, const TrainConfig& config);

struct Split {
  std::vector<alloc::LabeledPair> train;
  std::vector<alloc::LabeledPair> val;
  std::vector<alloc::LabeledPair> test;
  std::vector<std::string> warnings;
};

/// All real pairs go to train; synthetic pairs fill train to floor(frac *
/// total) by seeded shuffle, then split the rest evenly (val gets the floor).
Split split_dataset(const std::vector<alloc::LabeledPair>& real,
                    const std::vector<alloc::LabeledPair>& synthetic, std::uint64_t seed,
                    double train_fraction = 0.6);

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

}  // namespace cvarnet::train
