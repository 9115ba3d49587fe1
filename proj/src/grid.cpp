#include "cvarnet/grid.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace cvarnet::grid {

namespace {

constexpr train::StudentKind kStudents[] = {train::StudentKind::dnn_sup, train::StudentKind::bnn_sup,
                                            train::StudentKind::dnn_sandwich,
                                            train::StudentKind::bnn_sandwich};

struct Prepared {
  WorldInfo info;
  train::Dataset dataset;
  data::ReturnPanel eval_returns;
  pipeline::EvalInputs inputs;
  Vector market;
  std::vector<analytics::EvalReport> baselines;  // model_seed filled per cell
};

struct Slot {
  std::vector<analytics::EvalReport> reports;
  std::vector<Failure> failures;
  std::vector<std::filesystem::path> checkpoints;
};

ErrorKind kind_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->kind();
  return ErrorKind::numerical;
}

}  // namespace

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<analytics::EvalReport> reports_for(const wf::BacktestTrack& track, const Vector& market,
                                               const analytics::EvalReport& base, bool regimes) {
  std::vector<analytics::EvalReport> out;
  auto add = [&](const wf::BacktestTrack& t, const std::string& regime) {
    analytics::EvalReport r = base;
    r.regime = regime;
    for (const auto& f : track.flags) r.flags += (r.flags.empty() ? "" : ";") + f;
    r.fill(t.summary());
    out.push_back(std::move(r));
  };
  add(track, "ALL");
  if (regimes) {
    const auto split = wf::regime_split(track, market, 12);
    add(track.subset(split.high), "HIGHVOL");
    add(track.subset(split.low), "LOWVOL");
  }
  return out;
}

Result run_grid(const config::PipelineConfig& cfg, const Options& options) {
  auto note = [&](const std::string& s) {
    if (options.progress) options.progress(s);
  };
  const auto& seeds = cfg.grid.world_seeds;
  const auto& mseeds = cfg.grid.model_seeds;
  if (seeds.empty() || mseeds.empty()) fail(ErrorKind::config, "grid needs at least one world and model seed");
  const double cap = cfg.constraint.level == exec::Level::L3 ? cfg.constraint.w_max : 1.0;

  note("fitting reference market");
  const auto ref = pipeline::reference_market(cfg.data.assets, cfg.data.reference_weeks, cfg.data.reference_seed);
  const auto model = synth::fit_market(ref.returns, ref.factors, cfg.data.fit);
  const auto real = pipeline::build_labeled(ref.returns, ref.factors,
                                            pipeline::all_dates(ref.returns.weeks(), cfg.data.min_hist),
                                            cfg.label, cfg.features, cap);

  std::vector<std::unique_ptr<Prepared>> prepared(seeds.size());
  std::vector<std::optional<Failure>> world_fail(seeds.size());
  std::mutex log;

  parallel_for(seeds.size(), cfg.grid.workers, [&](std::size_t w) {
    const std::uint64_t seed = seeds[w];
    try {
      auto p = std::make_unique<Prepared>();
      auto world = synth::generate_world(model, cfg.data.horizon, seed);
      const auto rows = synth::stride_dates(cfg.data.horizon, cfg.data.min_hist, cfg.data.stride);
      const auto synth_set = pipeline::build_labeled(world.returns, world.factors, rows, cfg.label, cfg.features, cap);
      const auto split = train::split_dataset(real.pairs, synth_set.pairs, seed, cfg.data.train_fraction);
      p->info = {seed, synth_set.raw_dates, synth_set.pairs.size(), split.train.size(), split.val.size(),
                 split.test.size()};
      p->dataset = pipeline::make_dataset(split.train, synth_set);

      p->eval_returns = world.returns;
      if (cfg.stress.kind != stress::Kind::none) {
        p->eval_returns = data::ReturnPanel::from_simple(world.returns.dates, world.returns.assets,
                                                         stress::apply(world.returns.simple, cfg.stress),
                                                         world.returns.rf);
      }
      std::vector<std::size_t> test_rows;
      for (const auto& pair : split.test) test_rows.push_back(pair.index);
      p->inputs = pipeline::eval_inputs(p->eval_returns, world.factors, test_rows, cfg.label, cfg.features, cap);
      if (p->inputs.decisions.empty()) fail(ErrorKind::data, "test split has no usable decision dates");
      p->market = features::market_series(p->eval_returns, cfg.features.market_column);

      for (auto b : pipeline::kBaselines) {
        const auto track = pipeline::evaluate_baseline(b, p->eval_returns, p->inputs, cfg.label, cfg.constraint);
        analytics::EvalReport base;
        base.model = pipeline::baseline_name(b);
        base.world_seed = seed;
        base.level = exec::level_name(cfg.constraint.level);
        base.stress = stress::kind_name(cfg.stress.kind);
        for (auto& r : reports_for(track, p->market, base, cfg.grid.regimes)) p->baselines.push_back(std::move(r));
      }
      prepared[w] = std::move(p);
      std::lock_guard lock(log);
      note("world " + std::to_string(seed) + " prepared");
    } catch (const std::exception& e) {
      world_fail[w] = Failure{seed, std::nullopt, "", kind_of(e), e.what()};
    }
  });

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t w = 0; w < seeds.size(); ++w) {
    if (!prepared[w]) continue;
    for (std::size_t m = 0; m < mseeds.size(); ++m) cells.emplace_back(w, m);
  }
  std::vector<Slot> slots(cells.size());
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  parallel_for(cells.size(), cfg.grid.workers, [&](std::size_t c) {
    const auto [w, m] = cells[c];
    const Prepared& p = *prepared[w];
    const std::uint64_t wseed = seeds[w], mseed = mseeds[m];
    Slot& slot = slots[c];
    std::vector<analytics::EvalReport> students;
    for (auto kind : kStudents) {
      const std::string name = train::student_name(kind);
      try {
        train::TrainConfig tc = cfg.train;
        tc.model_seed = mseed;
        const auto trained = train::train_student(kind, p.dataset, cfg.data.assets, cfg.architecture, tc);
        if (options.checkpoint_dir) {
          const auto path = *options.checkpoint_dir /
                            ("world" + std::to_string(wseed) + "_seed" + std::to_string(mseed) + "_" + name + ".ckpt");
          nn::save_checkpoint(path, trained.checkpoint);
          slot.checkpoints.push_back(path);
        }
        wf::AdaptiveConfig ac = cfg.grid.adaptive ? cfg.adaptive : wf::AdaptiveConfig::frozen();
        ac.mc_samples = cfg.adaptive.mc_samples;
        ac.seed = mseed;
        const auto track = pipeline::evaluate_student(trained.checkpoint, p.eval_returns, p.inputs, cfg.constraint, ac);
        analytics::EvalReport base;
        base.model = name;
        base.world_seed = wseed;
        base.model_seed = mseed;
        base.level = exec::level_name(cfg.constraint.level);
        base.stress = stress::kind_name(cfg.stress.kind);
        for (auto& r : reports_for(track, p.market, base, cfg.grid.regimes)) students.push_back(std::move(r));
      } catch (const std::exception& e) {
        slot.failures.push_back({wseed, mseed, name, kind_of(e), e.what()});
      }
    }
    slot.reports = std::move(students);
    for (auto r : p.baselines) {
      r.model_seed = mseed;
      slot.reports.push_back(std::move(r));
    }
    std::lock_guard lock(log);
    note("cell world " + std::to_string(wseed) + " model seed " + std::to_string(mseed) + " done");
  });

  Result out;
  for (std::size_t w = 0; w < seeds.size(); ++w) {
    if (prepared[w]) out.worlds.push_back(prepared[w]->info);
    if (world_fail[w]) out.failures.push_back(*world_fail[w]);
  }
  for (auto& s : slots) {
    for (auto& r : s.reports) out.reports.push_back(std::move(r));
    for (auto& f : s.failures) out.failures.push_back(std::move(f));
    for (auto& c : s.checkpoints) out.checkpoints.push_back(std::move(c));
  }
  return out;
}

UniverseResult evaluate_universe(const std::vector<NamedCheckpoint>& students, const pipeline::Market& market,
                                 const std::string& universe, const config::PipelineConfig& cfg,
                                 const wf::AdaptiveConfig& adaptive) {
  if (universe != "C2A" && universe != "D2A") fail(ErrorKind::config, "universe must be C2A or D2A, got " + universe);
  const double cap = cfg.constraint.level == exec::Level::L3 ? cfg.constraint.w_max : 1.0;
  UniverseResult out;
  out.returns = market.returns;
  if (cfg.stress.kind != stress::Kind::none) {
    out.returns = data::ReturnPanel::from_simple(market.returns.dates, market.returns.assets,
                                                 stress::apply(market.returns.simple, cfg.stress), market.returns.rf);
  }
  if (out.returns.weeks() <= cfg.data.min_hist + 1) fail(ErrorKind::data, universe + " panel is shorter than the warm-up");
  const auto rows = pipeline::all_dates(out.returns.weeks() - 1, cfg.data.min_hist);
  const auto inputs = pipeline::eval_inputs(out.returns, market.factors, rows, cfg.label, cfg.features, cap);
  if (inputs.decisions.empty()) fail(ErrorKind::data, universe + " panel has no usable decision dates");
  const Vector mkt = features::market_series(out.returns, cfg.features.market_column);

  analytics::EvalReport base;
  base.universe = universe;
  base.world_seed = cfg.world_seed;
  base.model_seed = cfg.model_seed;
  base.level = exec::level_name(cfg.constraint.level);
  base.stress = stress::kind_name(cfg.stress.kind);
  auto emit = [&](const std::string& name, wf::BacktestTrack track) {
    auto b = base;
    b.model = name;
    for (auto& r : reports_for(track, mkt, b, cfg.grid.regimes)) out.reports.push_back(std::move(r));
    out.tracks.emplace_back(name, std::move(track));
  };
  for (const auto& s : students) {
    emit(s.name, pipeline::evaluate_student(s.checkpoint, out.returns, inputs, cfg.constraint, adaptive));
  }
  for (auto b : pipeline::kBaselines) {
    emit(pipeline::baseline_name(b), pipeline::evaluate_baseline(b, out.returns, inputs, cfg.label, cfg.constraint));
  }
  return out;
}

}  // namespace cvarnet::grid
