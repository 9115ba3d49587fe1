#include "cvarnet/execution.hpp"

#include "cvarnet/csv.hpp"

#include <cmath>

namespace cvarnet::exec {

namespace {
using Idx = Eigen::Index;
constexpr double kTol = 1e-12;
}  // namespace

std::string level_name(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::L3: return "L3";
  }
  return "?";
}

Level level_from_name(const std::string& s) {
  if (s == "L1") return Level::L1;
  if (s == "L2") return Level::L2;
  if (s == "L3") return Level::L3;
  fail(ErrorKind::config, "unknown constraint level " + s);
}

ConstraintSpec ConstraintSpec::l1() { return {}; }

ConstraintSpec ConstraintSpec::l2() {
  ConstraintSpec s;
  s.level = Level::L2;
  return s;
}

ConstraintSpec ConstraintSpec::l3(double w_max, double to_max, double cost_rate) {
  ConstraintSpec s{Level::L3, w_max, to_max, cost_rate};
  s.validate();
  return s;
}

void ConstraintSpec::validate() const {
  if (!(w_max > 0.0 && w_max <= 1.0)) fail(ErrorKind::config, "w_max must lie in (0, 1]");
  if (!(to_max > 0.0 && to_max <= 1.0)) fail(ErrorKind::config, "to_max must lie in (0, 1]");
  if (!(cost_rate >= 0.0)) fail(ErrorKind::config, "cost_rate must be nonnegative");
  if (level != Level::L3 && (w_max != 1.0 || to_max != 1.0 || cost_rate != 0.0)) {
    fail(ErrorKind::config, level_name(level) + " carries no bounds, turnover cap or costs");
  }
}

nlohmann::json to_json(const ConstraintSpec& s) {
  return {{"level", level_name(s.level)},
          {"w_max", s.w_max},
          {"to_max", s.to_max},
          {"cost_rate", s.cost_rate}};
}

ConstraintSpec constraint_from_json(const nlohmann::json& j) {
  try {
    const Level level = level_from_name(j.at("level").get<std::string>());
    ConstraintSpec s = level == Level::L3 ? ConstraintSpec::l3()
                       : level == Level::L2 ? ConstraintSpec::l2()
                                            : ConstraintSpec::l1();
    s.w_max = j.value("w_max", s.w_max);
    s.to_max = j.value("to_max", s.to_max);
    s.cost_rate = j.value("cost_rate", s.cost_rate);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("constraint spec: ") + e.what());
  }
}

Vector clip_renormalize(const Vector& w, double w_max) {
  const Idx n = w.size();
  if (n == 0) fail(ErrorKind::data, "empty weight vector");
  if (static_cast<double>(n) * w_max < 1.0 - kTol) {
    fail(ErrorKind::infeasible, std::to_string(n) + " assets capped at " + csv::format(w_max) +
                                    " cannot sum to one");
  }
  const double sum = w.sum();
  if (w.minCoeff() >= 0.0 && w.maxCoeff() <= w_max + kTol && std::abs(sum - 1.0) <= 1e-12) return w;

  Vector x = w.cwiseMax(0.0);
  if (!(x.sum() > 0.0)) x.setConstant(1.0);
  x /= x.sum();
  std::vector<bool> capped(static_cast<std::size_t>(n), false);
  for (Idx iter = 0; iter <= n; ++iter) {
    bool changed = false;
    for (Idx i = 0; i < n; ++i) {
      if (!capped[static_cast<std::size_t>(i)] && x(i) > w_max) {
        capped[static_cast<std::size_t>(i)] = true;
        changed = true;
      }
    }
    double free_sum = 0.0;
    Idx free_count = 0, cap_count = 0;
    for (Idx i = 0; i < n; ++i) {
      if (capped[static_cast<std::size_t>(i)]) {
        ++cap_count;
      } else {
        free_sum += x(i);
        ++free_count;
      }
    }
    const double residual = 1.0 - static_cast<double>(cap_count) * w_max;
    for (Idx i = 0; i < n; ++i) {
      if (capped[static_cast<std::size_t>(i)]) {
        x(i) = w_max;
      } else if (free_sum > 0.0) {
        x(i) *= residual / free_sum;
      } else {
        x(i) = residual / static_cast<double>(free_count);
      }
    }
    if (!changed) break;
  }
  return x;
}

double turnover(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorKind::data, "turnover of vectors with different lengths");
  return 0.5 * (a - b).lpNorm<1>();
}

Vector apply_turnover_cap(const Vector& prev, const Vector& target, double to_max, double w_max) {
  const double to = turnover(prev, target);
  if (to <= to_max + kTol) return target;
  const double a = to_max / to;
  return clip_renormalize(prev + a * (target - prev), w_max);
}

double transaction_cost(const Vector& prev_exec, const Vector& exec, double cost_rate) {
  return cost_rate * turnover(prev_exec, exec);
}

double net_return(const Vector& exec, const Vector& realized, double cost) {
  if (exec.size() != realized.size()) fail(ErrorKind::data, "weights and returns differ in length");
  return exec.dot(realized) - cost;
}

Execution execute(const Vector& prev, const Vector& target, const ConstraintSpec& spec) {
  Execution e;
  if (spec.level == Level::L3) {
    e.weights = apply_turnover_cap(prev, clip_renormalize(target, spec.w_max), spec.to_max, spec.w_max);
  } else {
    e.weights = target;
  }
  e.turnover = turnover(prev, e.weights);
  e.cost = spec.cost_rate * e.turnover;
  return e;
}

void write_execution_log(const std::filesystem::path& path, const std::vector<LogRow>& rows,
                         const std::vector<std::string>& assets) {
  csv::Table t;
  t.header = {"date"};
  for (const auto& a : assets) t.header.push_back("target." + a);
  for (const auto& a : assets) t.header.push_back("exec." + a);
  t.header.push_back("turnover");
  t.header.push_back("cost");
  for (const auto& r : rows) {
    std::vector<std::string> line{r.date.iso()};
    for (Idx i = 0; i < r.target.size(); ++i) line.push_back(csv::format(r.target(i)));
    for (Idx i = 0; i < r.executed.size(); ++i) line.push_back(csv::format(r.executed(i)));
    line.push_back(csv::format(r.turnover));
    line.push_back(csv::format(r.cost));
    t.rows.push_back(std::move(line));
  }
  csv::write(path, t);
}

}  // namespace cvarnet::exec
