#pragma once

#include "cvarnet/core.hpp"
#include "cvarnet/date.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cvarnet::exec {

enum class Level { L1, L2, L3 };

std::string level_name(Level l);
Level level_from_name(const std::string& s);

struct ConstraintSpec {
  Level level = Level::L1;
  double w_max = 1.0;
  double to_max = 1.0;
  double cost_rate = 0.0;

  static ConstraintSpec l1();
  /// Stressed returns with L1 bounds.
  static ConstraintSpec l2();
  static ConstraintSpec l3(double w_max = 0.30, double to_max = 0.30, double cost_rate = 0.001);

  void validate() const;
};

nlohmann::json to_json(const ConstraintSpec& s);
ConstraintSpec constraint_from_json(const nlohmann::json& j);

/// Fixed point of clip-to-[0, w_max] then renormalize.
Vector clip_renormalize(const Vector& w, double w_max);

/// One-way turnover: half the L1 distance.
double turnover(const Vector& a, const Vector& b);

/// Partial execution toward `target` when its turnover exceeds `to_max`.
Vector apply_turnover_cap(const Vector& prev, const Vector& target, double to_max,
                          double w_max = 1.0);

double transaction_cost(const Vector& prev_exec, const Vector& exec, double cost_rate);
double net_return(const Vector& exec, const Vector& realized, double cost);

struct Execution {
  Vector weights;
  double turnover = 0.0;
  double cost = 0.0;
};

/// Box, turnover cap and cost in one step.
Execution execute(const Vector& prev, const Vector& target, const ConstraintSpec& spec);

struct LogRow {
  Date date;
  Vector target;
  Vector executed;
  double turnover = 0.0;
  double cost = 0.0;
};

void write_execution_log(const std::filesystem::path& path, const std::vector<LogRow>& rows,
                         const std::vector<std::string>& assets);

}  // namespace cvarnet::exec
