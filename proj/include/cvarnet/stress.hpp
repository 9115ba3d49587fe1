#pragma once

#include "cvarnet/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cvarnet::stress {

enum class Kind { none, vol_bursts, jumps, whipsaw, corr_spike, combo };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& s);

struct StressSpec {
  Kind kind = Kind::none;
  double sigma_s = 2.0;
  std::size_t n_bursts = 3;
  std::size_t burst_len = 8;
  double p_jump = 0.03;
  double mu_jump = 0.08;
  double p_neg = 0.80;
  double gamma = 0.7;
  double lambda = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const StressSpec& s);
StressSpec stress_from_json(const nlohmann::json& j);

/// Sorted start rows of `n` non-overlapping windows of length `len` in [0, T),
/// uniform over all placements.
std::vector<std::size_t> place_bursts(std::size_t T, std::size_t n, std::size_t len,
                                      std::uint64_t seed);

Matrix stress_vol_bursts(const Matrix& x, double sigma_s, std::size_t n_bursts,
                         std::size_t burst_len, std::uint64_t seed);

struct JumpTrace {
  std::vector<std::size_t> market_weeks;
  std::vector<double> market_sizes;  // signed
  std::size_t idiosyncratic = 0;
};

Matrix stress_jumps(const Matrix& x, double p_jump, double mu_jump, double p_neg,
                    std::uint64_t seed, JumpTrace* trace = nullptr);

/// Sign sequence a_t = (-1)^t with t counted from row 0.
Matrix stress_whipsaw(const Matrix& x, double gamma);
Matrix stress_corr_spike(const Matrix& x, double lambda);
/// corr_spike, then vol_bursts, then jumps, each on its own sub-stream.
Matrix stress_combo(const Matrix& x, const StressSpec& spec);

Matrix apply(const Matrix& x, const StressSpec& spec);

}  // namespace cvarnet::stress
