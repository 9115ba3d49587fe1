#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvarnet::nn {

/// Max-subtracted softmax.
Vector softmax(const Vector& logits);

double softplus(double x);
double sigmoid(double x);

/// sigma = softplus(rho) + kSigmaFloor
inline constexpr double kSigmaFloor = 1e-10;
double rho_for_sigma(double sigma);

struct NetworkSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;
  // Number of trailing affine maps that are variational (0 = deterministic).
  std::size_t variational_layers = 0;
  double prior_sigma = 1.0;
  double init_sigma_ratio = 0.05;
  std::string activation = "tanh";

  std::size_t layer_count() const { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t l) const { return l == 0 ? input : hidden[l - 1]; }
  std::size_t fan_out(std::size_t l) const { return l == hidden.size() ? output : hidden[l]; }
  bool is_variational(std::size_t l) const { return l + variational_layers >= layer_count(); }
  bool bayesian() const { return variational_layers > 0; }
  void validate() const;
};

nlohmann::json to_json(const NetworkSpec& s);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// Where each layer lives inside the flat parameter vector. Matrices are
/// row-major (out x in). Deterministic layers use only `weight` and `bias`;
/// variational layers store means there and rho in the other two slots.
struct LayerOffsets {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t rho_weight = 0;
  std::size_t rho_bias = 0;
};

/// Intermediates of one forward pass.
struct Tape {
  std::uint64_t version = 0;
  bool sampled = false;
  std::vector<Vector> inputs;       // input to each layer
  std::vector<Vector> activations;  // post-activation output of each hidden layer
  std::vector<Matrix> weights;      // weights used, per layer
  std::vector<Matrix> eps_weight;   // noise per variational layer (empty otherwise)
  std::vector<Vector> eps_bias;
  Vector output;                    // softmax output
};

class Network {
 public:
  explicit Network(NetworkSpec spec);

  /// Fan-in uniform init; variational rho set so sigma = ratio * prior.
  static Network initialized(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  const Vector& params() const { return params_; }
  void set_params(const Vector& p);
  /// Mutable access invalidates outstanding tapes.
  Vector& mutable_params() {
    ++version_;
    return params_;
  }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
  const LayerOffsets& offsets(std::size_t l) const { return offsets_[l]; }
  std::uint64_t version() const { return version_; }

  /// Mean-parameter pass.
  Vector forward(const Vector& x) const;
  /// Deterministic when `rng` is null; otherwise W = mu + sigma * eps.
  Vector forward(const Vector& x, Tape& tape, Rng* rng = nullptr) const;
  /// Gradient of a scalar loss w.r.t. all parameters given dL/d(output).
  Vector backward(const Tape& tape, const Vector& upstream) const;

  double kl() const;
  Vector kl_gradient() const;

 private:
  NetworkSpec spec_;
  std::vector<LayerOffsets> offsets_;
  Vector params_;
  std::uint64_t version_ = 1;
};

double kl_gaussian(double mu, double sigma, double prior_sigma);

struct McResult {
  Vector mean;
  Vector dispersion;  // per-asset cross-sample std
};

/// Average of M sampled softmax outputs.
McResult mc_average(const Network& net, const Vector& x, std::size_t samples, std::uint64_t seed,
                    std::uint64_t stream = 0);

struct Checkpoint {
  NetworkSpec spec;
  Vector params;
  Vector feature_mean;
  Vector feature_std;
  nlohmann::json provenance = nlohmann::json::object();

  Network network() const;
  /// (x - mean) / std
  Vector normalize(const Vector& x) const;
};

/// "CVNCKPT1\n", u64 header length, JSON header, then little-endian f64
/// [params | feature_mean | feature_std].
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cvarnet::nn
