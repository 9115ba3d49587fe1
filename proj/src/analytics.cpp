#include "cvarnet/analytics.hpp"

#include "cvarnet/csv.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace cvarnet::analytics {

namespace {

const std::vector<std::string> kHeader{"model",  "world_seed", "model_seed",   "universe",
                                       "level",  "stress",     "regime",       "sharpe",
                                       "cvar95", "max_drawdown", "mean_turnover", "ann_return",
                                       "ann_vol", "weeks",     "flags"};

using RunKey = std::tuple<std::uint64_t, std::uint64_t, std::string, std::string, std::string, std::string>;

RunKey run_key(const EvalReport& r) {
  return {r.world_seed, r.model_seed, r.universe, r.level, r.stress, r.regime};
}

}  // namespace

void EvalReport::fill(const metrics::Summary& s) {
  sharpe = s.sharpe;
  cvar95 = s.cvar95;
  max_drawdown = s.max_drawdown;
  mean_turnover = s.mean_turnover;
  ann_return = s.ann_return;
  ann_vol = s.ann_vol;
  weeks = s.weeks;
  if (!s.sharpe) flags += flags.empty() ? "sharpe_undefined" : ";sharpe_undefined";
  if (s.weeks < 8) flags += flags.empty() ? "low_sample" : ";low_sample";
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  csv::Table t;
  t.header = kHeader;
  for (const auto& r : reports) {
    t.rows.push_back({r.model, std::to_string(r.world_seed), std::to_string(r.model_seed), r.universe,
                      r.level, r.stress, r.regime, r.sharpe ? csv::format(*r.sharpe) : "",
                      csv::format(r.cvar95), csv::format(r.max_drawdown), csv::format(r.mean_turnover),
                      csv::format(r.ann_return), csv::format(r.ann_vol), std::to_string(r.weeks), r.flags});
  }
  csv::write(path, t);
}

std::vector<EvalReport> read_reports_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  std::vector<std::size_t> col;
  for (const auto& h : kHeader) col.push_back(t.column(h));
  std::vector<EvalReport> out;
  const std::string ctx = path.string();
  auto num = [&](const std::string& cell) {
    const auto v = csv::parse_cell(cell, ctx);
    if (!v) fail(ErrorKind::data, ctx + ": empty metric cell");
    return *v;
  };
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) fail(ErrorKind::data, ctx + ": ragged row");
    EvalReport r;
    try {
      r.model = row[col[0]];
      r.world_seed = std::stoull(row[col[1]]);
      r.model_seed = std::stoull(row[col[2]]);
      r.universe = row[col[3]];
      r.level = row[col[4]];
      r.stress = row[col[5]];
      r.regime = row[col[6]];
      r.sharpe = csv::parse_cell(row[col[7]], ctx);
      r.cvar95 = num(row[col[8]]);
      r.max_drawdown = num(row[col[9]]);
      r.mean_turnover = num(row[col[10]]);
      r.ann_return = num(row[col[11]]);
      r.ann_vol = num(row[col[12]]);
      r.weeks = std::stoull(row[col[13]]);
      r.flags = row[col[14]];
    } catch (const std::logic_error&) {
      fail(ErrorKind::data, ctx + ": malformed integer cell");
    }
    out.push_back(std::move(r));
  }
  return out;
}

WinRate win_rate_matrix(const std::vector<EvalReport>& reports, std::vector<std::string> models) {
  if (models.empty()) {
    for (const auto& r : reports) {
      if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    }
  }
  std::map<RunKey, std::map<std::string, double>> runs;
  for (const auto& r : reports) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) continue;
    auto& slot = runs[run_key(r)];
    if (!slot.emplace(r.model, r.sharpe.value_or(0.0)).second) {
      fail(ErrorKind::data, "model " + r.model + " appears twice in one run");
    }
  }
  const auto M = static_cast<Eigen::Index>(models.size());
  WinRate w{models, Matrix::Zero(M, M), runs.size()};
  if (runs.empty()) fail(ErrorKind::data, "win-rate matrix needs at least one run");
  for (const auto& [key, by_model] : runs) {
    if (by_model.size() != models.size()) {
      fail(ErrorKind::data, "unbalanced runs: world " + std::to_string(std::get<0>(key)) + ", model seed " +
                                std::to_string(std::get<1>(key)) + " lacks some models");
    }
    for (Eigen::Index i = 0; i < M; ++i) {
      for (Eigen::Index j = 0; j < M; ++j) {
        const double a = by_model.at(models[static_cast<std::size_t>(i)]);
        const double b = by_model.at(models[static_cast<std::size_t>(j)]);
        w.matrix(i, j) += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      }
    }
  }
  w.matrix /= static_cast<double>(runs.size());
  return w;
}

void write_win_rate_csv(const std::filesystem::path& path, const WinRate& w) {
  csv::Table t;
  t.header = {"model"};
  t.header.insert(t.header.end(), w.models.begin(), w.models.end());
  for (std::size_t i = 0; i < w.models.size(); ++i) {
    std::vector<std::string> row{w.models[i]};
    for (std::size_t j = 0; j < w.models.size(); ++j) {
      row.push_back(csv::format(w.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    t.rows.push_back(std::move(row));
  }
  csv::write(path, t);
}

std::optional<double> sensitivity_delta(double l1, double l3) {
  if (l1 == 0.0) return std::nullopt;
  return (l3 - l1) / l1;
}

std::vector<SensitivityRow> constraint_sensitivity(const std::vector<EvalReport>& reports) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
  for (const auto& r : reports) {
    if (r.regime != "ALL" || r.stress != "none") continue;
    if (r.level != "L1" && r.level != "L3") continue;
    groups[{r.model, r.universe}][r.level].push_back(r.sharpe.value_or(0.0));
  }
  std::vector<SensitivityRow> out;
  for (const auto& [key, levels] : groups) {
    if (!levels.contains("L1") || !levels.contains("L3")) continue;
    SensitivityRow row{key.first, key.second, aggregate(levels.at("L1")).mean,
                       aggregate(levels.at("L3")).mean, std::nullopt};
    row.delta = sensitivity_delta(row.l1, row.l3);
    out.push_back(row);
  }
  return out;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  a.mean = stats::mean(values);
  a.std = stats::sample_std(values);
  return a;
}

nlohmann::json summary_json(const std::vector<EvalReport>& reports) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[{r.universe, r.level, r.stress, r.regime, r.model}].push_back(&r);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, rs] : groups) {
    std::vector<double> sharpe, cvar, mdd, to, ret, vol;
    std::size_t undefined = 0;
    for (const auto* r : rs) {
      if (r->sharpe) {
        sharpe.push_back(*r->sharpe);
      } else {
        ++undefined;
      }
      cvar.push_back(r->cvar95);
      mdd.push_back(r->max_drawdown);
      to.push_back(r->mean_turnover);
      ret.push_back(r->ann_return);
      vol.push_back(r->ann_vol);
    }
    auto js = [](const Aggregate& a) { return nlohmann::json{{"mean", a.mean}, {"std", a.std}, {"n", a.count}}; };
    rows.push_back({{"universe", std::get<0>(key)},
                    {"level", std::get<1>(key)},
                    {"stress", std::get<2>(key)},
                    {"regime", std::get<3>(key)},
                    {"model", std::get<4>(key)},
                    {"sharpe", js(aggregate(sharpe))},
                    {"sharpe_undefined", undefined},
                    {"cvar95", js(aggregate(cvar))},
                    {"max_drawdown", js(aggregate(mdd))},
                    {"mean_turnover", js(aggregate(to))},
                    {"ann_return", js(aggregate(ret))},
                    {"ann_vol", js(aggregate(vol))}});
  }
  return {{"groups", rows},
          {"conventions",
           {{"cvar_sign", "negative values are losses"},
            {"annualization", "sqrt(52)"},
            {"turnover", "one-way, half L1"},
            {"regime_rule", "trailing 12-week market vol above its median is HIGHVOL"}}}};
}

}  // namespace cvarnet::analytics
