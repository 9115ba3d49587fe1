#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/date.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cvarnet::alloc {

/// Euclidean projection onto the probability simplex (sort-based).
Vector project_simplex(const Vector& v);

/// Clamps tiny negatives to zero and rescales to sum one.
Vector clean_weights(const Vector& w);

/// Mean of the K = ceil((1 - alpha) S) largest losses.
double empirical_cvar(std::span<const double> losses, double alpha);
double empirical_cvar(const Vector& losses, double alpha);

struct CvarValue {
  double objective = 0.0;  // min over l of l + sum (L - l)_+ / ((1 - alpha) S)
  double var = 0.0;        // the minimizing l
};

/// Rockafellar-Uryasev objective of losses -R w, minimized exactly over l.
CvarValue cvar_objective(const Matrix& scenarios, const Vector& w, double alpha);

struct TeacherOptions {
  double step0 = 0.1;
  std::size_t iterations = 5000;
};

struct TeacherResult {
  Vector weights;
  double objective = 0.0;
  double var = 0.0;
  bool converged = true;
};

/// Projected subgradient on the simplex with normalized steps step0 / sqrt(k),
/// averaging the second half of the iterates.
TeacherResult solve_cvar_teacher(const Matrix& scenarios, double alpha = 0.95,
                                 const TeacherOptions& options = {});

/// min w' S w subject to mu' w >= target on the simplex.
Vector solve_mean_variance(const Vector& mu, const Matrix& sigma, double target_return);
Vector solve_min_variance(const Matrix& sigma);
/// Inverse-volatility weights.
Vector solve_risk_parity(const Matrix& sigma);

struct LabeledPair {
  Date date;
  std::size_t index = 0;  // row of the panel the window ends on
  Vector features;
  Vector weights;
};

/// Rows [t - window + 1, t] of `returns`; requires t + 1 >= window.
Matrix scenario_window(const Matrix& returns, std::size_t t, std::size_t window);

struct LabelOptions {
  std::size_t window = 104;
  double alpha = 0.95;
  TeacherOptions teacher;
};

nlohmann::json to_json(const LabelOptions& o);
LabelOptions label_options_from_json(const nlohmann::json& j);

/// Teacher weights for every row index that has a full window; indices
/// without one are dropped. Result pairs (index, weights).
std::vector<std::pair<std::size_t, Vector>> label_dates(const std::vector<std::size_t>& indices,
                                                        const Matrix& returns,
                                                        const LabelOptions& options = {});

/// Features and labels as two CSV files keyed by date.
void write_pairs(const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path, const std::vector<LabeledPair>& pairs,
                 const std::vector<std::string>& assets);

struct PairFile {
  std::vector<std::string> assets;
  std::vector<LabeledPair> pairs;
};

PairFile read_pairs(const std::filesystem::path& features_path,
                    const std::filesystem::path& labels_path);

}  // namespace cvarnet::alloc
