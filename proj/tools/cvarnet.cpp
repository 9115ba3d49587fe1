#include "cvarnet/analytics.hpp"
#include "cvarnet/config.hpp"
#include "cvarnet/csv.hpp"
#include "cvarnet/grid.hpp"
#include "cvarnet/pipeline.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace cvarnet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitPartial = 5;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::data:
    case ErrorKind::domain: return 3;
    case ErrorKind::numerical:
    case ErrorKind::infeasible: return 4;
  }
  return 4;
}

struct Common {
  std::optional<fs::path> config_path;
  fs::path dir = "run";
  std::optional<std::uint64_t> world_seed;
  std::optional<std::uint64_t> model_seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file");
  sub->add_option("--dir", c.dir, "working directory for inputs and outputs");
  sub->add_option("--world-seed", c.world_seed, "data-generation and split seed");
  sub->add_option("--model-seed", c.model_seed, "initialization and training seed");
}

// Outputs are tracked so the manifest lists them.
class Run {
 public:
  Run(std::string command, const Common& c) : common_(c) {
    m_.command = std::move(command);
    m_.started = config::utc_timestamp();
    cfg = config::resolve(c.config_path);
    if (c.world_seed) cfg.world_seed = *c.world_seed;
    if (c.model_seed) {
      cfg.model_seed = *c.model_seed;
      cfg.train.model_seed = *c.model_seed;
    }
    fs::create_directories(c.dir);
    if (c.config_path) input(*c.config_path);
  }

  fs::path path(const std::string& name) const { return common_.dir / name; }

  fs::path input(const fs::path& p) {
    if (!fs::exists(p)) fail(ErrorKind::data, "missing input file " + p.string());
    m_.inputs.emplace_back(p.string(), config::file_digest(p));
    return p;
  }
  fs::path in(const std::string& name) { return input(path(name)); }

  fs::path out(const std::string& name) {
    m_.outputs.push_back(path(name).string());
    return path(name);
  }

  void finish() {
    m_.config_hash = config::config_hash(cfg);
    m_.world_seed = cfg.world_seed;
    m_.model_seed = cfg.model_seed;
    m_.config = config::to_json(cfg);
    m_.finished = config::utc_timestamp();
    config::write_manifest(path("manifest_" + m_.command + ".json"), m_);
  }

  config::PipelineConfig cfg;

 private:
  Common common_;
  config::RunManifest m_;
};

double feature_cap(const config::PipelineConfig& cfg) {
  return cfg.constraint.level == exec::Level::L3 ? cfg.constraint.w_max : 1.0;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream o(p);
  if (!o) fail(ErrorKind::data, "cannot write " + p.string());
  o << j.dump(2) << '\n';
}

void write_pair_files(Run& run, const std::string& stem, const std::vector<alloc::LabeledPair>& pairs,
                      const std::vector<std::string>& assets) {
  alloc::write_pairs(run.out(stem + "_features.csv"), run.out(stem + "_labels.csv"), pairs, assets);
}

alloc::PairFile read_pair_files(Run& run, const std::string& stem) {
  return alloc::read_pairs(run.in(stem + "_features.csv"), run.in(stem + "_labels.csv"));
}

std::vector<features::FeatureMatrix> read_features(Run& run, const std::string& name) {
  return features::read_feature_csv(run.in(name)).rows;
}

struct Panels {
  data::ReturnPanel returns;
  data::FactorPanel factors;
};

Panels read_panels(Run& run, const std::string& stem) {
  return {data::read_return_csv(run.in(stem + "_returns.csv")), data::read_factor_csv(run.in(stem + "_factors.csv"))};
}

// --- subcommands -----------------------------------------------------------

struct GenArgs {
  std::optional<std::size_t> horizon, stride, min_hist, assets;
  std::optional<fs::path> returns, factors;
};

void gen_synth(const Common& c, const GenArgs& a) {
  Run run("gen-synth", c);
  auto& d = run.cfg.data;
  if (a.horizon) d.horizon = *a.horizon;
  if (a.stride) d.stride = *a.stride;
  if (a.min_hist) d.min_hist = *a.min_hist;
  if (a.assets) d.assets = *a.assets;
  if (d.horizon <= d.min_hist || d.stride == 0) fail(ErrorKind::config, "need horizon > min_hist and stride > 0");

  pipeline::Market ref;
  if (a.returns || a.factors) {
    if (!a.returns || !a.factors) fail(ErrorKind::config, "--returns and --factors go together");
    auto [r, f] = data::align_calendar(data::read_return_csv(run.input(*a.returns)),
                                       data::read_factor_csv(run.input(*a.factors)));
    ref = {std::move(r), std::move(f)};
  } else {
    ref = pipeline::reference_market(d.assets, d.reference_weeks, d.reference_seed);
  }
  const auto model = synth::fit_market(ref.returns, ref.factors, d.fit);
  const auto world = synth::generate_world(model, d.horizon, run.cfg.world_seed);
  const auto rows = synth::stride_dates(d.horizon, d.min_hist, d.stride);

  data::write_return_csv(run.out("reference_returns.csv"), ref.returns);
  data::write_factor_csv(run.out("reference_factors.csv"), ref.factors);
  if (!a.returns) {
    const auto transfer = pipeline::transfer_market(d.assets, d.reference_weeks, d.reference_seed);
    data::write_return_csv(run.out("transfer_returns.csv"), transfer.returns);
    data::write_factor_csv(run.out("transfer_factors.csv"), transfer.factors);
  }
  data::write_return_csv(run.out("synth_returns.csv"), world.returns);
  data::write_factor_csv(run.out("synth_factors.csv"), world.factors);
  write_json(run.out("market_model.json"), synth::to_json(model));
  csv::Table t;
  t.header = {"row", "date"};
  for (auto r : rows) t.rows.push_back({std::to_string(r), world.returns.dates[r].iso()});
  csv::write(run.out("synth_dates.csv"), t);

  const auto rc = synth::pearson_correlation(ref.returns.simple);
  const auto sc = synth::pearson_correlation(world.returns.simple);
  const auto cmp = synth::compare_correlations(rc, sc);
  std::cout << "synthetic weeks: " << d.horizon << "\n"
            << "labeled dates (pre-filter): " << rows.size() << "\n"
            << "VAR spectral radius: " << model.factors.spectral_radius << "\n"
            << "correlation max |diff|: " << cmp.max_abs << ", share within 0.15: " << cmp.fraction_within << "\n";
  run.finish();
}

std::vector<std::size_t> read_rows(Run& run) {
  const auto t = csv::read(run.in("synth_dates.csv"));
  std::vector<std::size_t> rows;
  const auto col = t.column("row");
  for (const auto& r : t.rows) rows.push_back(std::stoull(r[col]));
  return rows;
}

void features_cmd(const Common& c) {
  Run run("features", c);
  const double cap = feature_cap(run.cfg);
  const auto real = read_panels(run, "reference");
  const auto synth = read_panels(run, "synth");
  const auto real_rows = pipeline::feature_rows(real.returns, real.factors,
                                                pipeline::all_dates(real.returns.weeks(), run.cfg.data.min_hist),
                                                run.cfg.features, cap);
  const auto synth_rows = pipeline::feature_rows(synth.returns, synth.factors, read_rows(run), run.cfg.features, cap);
  features::write_feature_csv(run.out("features_real.csv"), real_rows, real.returns.assets);
  features::write_feature_csv(run.out("features_synth.csv"), synth_rows, synth.returns.assets);
  write_json(run.out("features_schema.json"), features::schema_json(synth.returns.asset_count(), run.cfg.features));
  std::cout << "feature rows: real " << real_rows.size() << ", synthetic " << synth_rows.size() << "\n";
  run.finish();
}

void label_cmd(const Common& c) {
  Run run("label", c);
  const auto real = read_panels(run, "reference");
  const auto synth = read_panels(run, "synth");
  const auto rp = pipeline::label_features(read_features(run, "features_real.csv"), real.returns.simple, run.cfg.label);
  const auto sp = pipeline::label_features(read_features(run, "features_synth.csv"), synth.returns.simple, run.cfg.label);
  write_pair_files(run, "pairs_real", rp, real.returns.assets);
  write_pair_files(run, "pairs_synth", sp, synth.returns.assets);
  std::cout << "labeled pairs: real " << rp.size() << ", synthetic " << sp.size() << "\n";
  run.finish();
}

void split_cmd(const Common& c) {
  Run run("split", c);
  const auto real = read_pair_files(run, "pairs_real");
  const auto synth = read_pair_files(run, "pairs_synth");
  const auto s = train::split_dataset(real.pairs, synth.pairs, run.cfg.world_seed, run.cfg.data.train_fraction);
  write_pair_files(run, "split_train", s.train, synth.assets);
  write_pair_files(run, "split_val", s.val, synth.assets);
  write_pair_files(run, "split_test", s.test, synth.assets);
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "split: train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size() << "\n";
  run.finish();
}

void train_cmd(const Common& c, std::vector<std::string> students) {
  Run run("train", c);
  if (students.empty()) {
    for (auto k : {train::StudentKind::dnn_sup, train::StudentKind::bnn_sup, train::StudentKind::dnn_sandwich,
                   train::StudentKind::bnn_sandwich}) {
      students.push_back(train::student_name(k));
    }
  }
  const auto split = read_pair_files(run, "split_train");
  const auto synth_pairs = read_pair_files(run, "pairs_synth");
  const auto synth = read_panels(run, "synth");
  train::Dataset ds{split.pairs, pipeline::windows_for(synth_pairs.pairs, synth.returns.simple, run.cfg.label.window)};
  for (const auto& name : students) {
    const auto kind = train::student_from_name(name);
    const auto r = train::train_student(kind, ds, split.assets.size(), run.cfg.architecture, run.cfg.train);
    nn::save_checkpoint(run.out(name + ".ckpt"), r.checkpoint);
    train::write_curve_csv(run.out(name + "_curve.csv"), r.curve);
    const auto& last = r.curve.back();
    std::cout << name << ": " << r.steps << " steps, final mse " << last.mse << "\n";
  }
  run.finish();
}

struct EvalArgs {
  std::optional<std::string> level;
  std::string returns = "synth_returns.csv";
  std::vector<std::string> students;
  bool adaptive = false;
  bool frozen = false;
  std::string universe = "GRID";
  std::optional<std::string> panel, stress;
};

std::vector<std::string> present_students(Run& run, std::vector<std::string> students) {
  if (!students.empty()) return students;
  for (auto k : {train::StudentKind::dnn_sup, train::StudentKind::bnn_sup, train::StudentKind::dnn_sandwich,
                 train::StudentKind::bnn_sandwich}) {
    if (fs::exists(run.path(train::student_name(k) + ".ckpt"))) students.push_back(train::student_name(k));
  }
  return students;
}

void write_log(Run& run, const std::string& name, const wf::BacktestTrack& track,
               const std::vector<std::string>& assets) {
  std::vector<exec::LogRow> log;
  for (std::size_t k = 0; k < track.size(); ++k) {
    log.push_back({track.dates[k], track.targets[k], track.weights[k], track.turnover[k], track.costs[k]});
  }
  exec::write_execution_log(run.out(name + "_execution.csv"), log, assets);
}

void print_summary(const std::vector<analytics::EvalReport>& reports) {
  for (const auto& r : reports) {
    if (r.regime != "ALL") continue;
    std::cout << r.model << ": sharpe " << (r.sharpe ? csv::format(*r.sharpe) : "undefined") << ", cvar95 "
              << r.cvar95 << ", turnover " << r.mean_turnover << "\n";
  }
}

wf::AdaptiveConfig adaptive_for(const config::PipelineConfig& cfg, bool adaptive) {
  auto ac = adaptive ? cfg.adaptive : wf::AdaptiveConfig::frozen(cfg.model_seed);
  ac.mc_samples = cfg.adaptive.mc_samples;
  ac.seed = cfg.model_seed;
  return ac;
}

// C2A / D2A: the whole observed panel, fine-tune-and-reset by default.
void evaluate_universe_cmd(Run& run, const EvalArgs& a) {
  auto& cfg = run.cfg;
  if (a.stress) {
    cfg.stress.kind = stress::kind_from_name(*a.stress);
    cfg.stress.validate();
  }
  const std::string stem = a.panel.value_or(a.universe == "C2A" ? "reference" : "transfer");
  const auto panels = read_panels(run, stem);
  std::vector<grid::NamedCheckpoint> students;
  for (const auto& name : present_students(run, a.students)) {
    students.push_back({name, nn::load_checkpoint(run.in(name + ".ckpt"))});
  }
  const auto res = grid::evaluate_universe(students, {panels.returns, panels.factors}, a.universe, cfg,
                                           adaptive_for(cfg, !a.frozen));
  const std::string tag = a.universe + "_" + exec::level_name(cfg.constraint.level) + "_" +
                          stress::kind_name(cfg.stress.kind);
  for (const auto& [name, track] : res.tracks) write_log(run, tag + "_" + name, track, res.returns.assets);
  analytics::write_reports_csv(run.out("reports_" + tag + ".csv"), res.reports);
  print_summary(res.reports);
}

void evaluate_cmd(const Common& c, const EvalArgs& a) {
  Run run("evaluate", c);
  auto& cfg = run.cfg;
  if (a.level) {
    const auto l = exec::level_from_name(*a.level);
    cfg.constraint = l == exec::Level::L3 ? exec::ConstraintSpec::l3() : (l == exec::Level::L2 ? exec::ConstraintSpec::l2() : exec::ConstraintSpec::l1());
  }
  if (a.universe != "GRID") {
    evaluate_universe_cmd(run, a);
    run.finish();
    return;
  }
  if (a.stress || a.panel) fail(ErrorKind::config, "--stress and --panel apply to C2A / D2A only");
  const double cap = feature_cap(cfg);
  const auto returns = data::read_return_csv(run.in(a.returns));
  const auto factors = data::read_factor_csv(run.in("synth_factors.csv"));
  const auto test = read_pair_files(run, "split_test");
  std::vector<std::size_t> rows;
  for (const auto& p : test.pairs) rows.push_back(p.index);
  const auto inputs = pipeline::eval_inputs(returns, factors, rows, cfg.label, cfg.features, cap);
  const Vector market = features::market_series(returns, cfg.features.market_column);
  const std::string stress_tag = a.returns == "synth_returns.csv" ? "none" : fs::path(a.returns).stem().string();

  analytics::EvalReport base;
  base.world_seed = cfg.world_seed;
  base.model_seed = cfg.model_seed;
  base.level = exec::level_name(cfg.constraint.level);
  base.stress = stress_tag;
  std::vector<analytics::EvalReport> reports;

  const auto ac = adaptive_for(cfg, a.adaptive && !a.frozen);
  for (const auto& name : present_students(run, a.students)) {
    const auto ckpt = nn::load_checkpoint(run.in(name + ".ckpt"));
    auto b = base;
    b.model = name;
    const auto track = pipeline::evaluate_student(ckpt, returns, inputs, cfg.constraint, ac);
    write_log(run, name, track, returns.assets);
    for (auto& r : grid::reports_for(track, market, b, cfg.grid.regimes)) reports.push_back(std::move(r));
  }
  for (auto bl : pipeline::kBaselines) {
    auto b = base;
    b.model = pipeline::baseline_name(bl);
    const auto track = pipeline::evaluate_baseline(bl, returns, inputs, cfg.label, cfg.constraint);
    for (auto& r : grid::reports_for(track, market, b, cfg.grid.regimes)) reports.push_back(std::move(r));
  }
  analytics::write_reports_csv(run.out("reports.csv"), reports);
  print_summary(reports);
  run.finish();
}

void stress_cmd(const Common& c, const std::optional<std::string>& kind, const std::optional<std::uint64_t>& seed) {
  Run run("stress", c);
  auto s = run.cfg.stress;
  if (kind) s.kind = stress::kind_from_name(*kind);
  if (seed) s.seed = *seed;
  s.validate();
  const auto panel = data::read_return_csv(run.in("synth_returns.csv"));
  const auto stressed = data::ReturnPanel::from_simple(panel.dates, panel.assets, stress::apply(panel.simple, s), panel.rf);
  const std::string name = "stressed_" + stress::kind_name(s.kind) + ".csv";
  data::write_return_csv(run.out(name), stressed);
  std::cout << "wrote " << run.path(name).string() << "\n";
  run.finish();
}

struct GridArgs {
  std::optional<std::size_t> workers, horizon, assets;
  std::vector<std::uint64_t> world_seeds, model_seeds;
  bool checkpoints = true;
};

int grid_cmd(const Common& c, const GridArgs& a) {
  Run run("grid", c);
  auto& cfg = run.cfg;
  if (a.workers) cfg.grid.workers = *a.workers;
  if (a.horizon) cfg.data.horizon = *a.horizon;
  if (a.assets) cfg.data.assets = *a.assets;
  if (!a.world_seeds.empty()) cfg.grid.world_seeds = a.world_seeds;
  if (!a.model_seeds.empty()) cfg.grid.model_seeds = a.model_seeds;
  grid::Options opt;
  if (a.checkpoints) opt.checkpoint_dir = run.path("checkpoints");
  opt.progress = [](const std::string& s) { std::cerr << s << "\n"; };
  const auto res = grid::run_grid(cfg, opt);

  analytics::write_reports_csv(run.out("grid_reports.csv"), res.reports);
  csv::Table ft;
  ft.header = {"world_seed", "model_seed", "model", "kind", "message"};
  for (const auto& f : res.failures) {
    ft.rows.push_back({std::to_string(f.world_seed), f.model_seed ? std::to_string(*f.model_seed) : "",
                       f.model, std::to_string(exit_code(f.kind)), f.message});
  }
  csv::write(run.out("grid_failures.csv"), ft);
  nlohmann::json worlds = nlohmann::json::array();
  for (const auto& w : res.worlds) {
    worlds.push_back({{"seed", w.seed}, {"raw_dates", w.raw_dates}, {"pairs", w.synthetic_pairs},
                      {"train", w.train}, {"val", w.val}, {"test", w.test}});
  }
  auto summary = analytics::summary_json(res.reports);
  summary["worlds"] = worlds;
  write_json(run.out("grid_summary.json"), summary);
  std::vector<analytics::EvalReport> all;
  for (const auto& r : res.reports) {
    if (r.regime == "ALL") all.push_back(r);
  }
  if (!all.empty() && res.failures.empty()) {
    analytics::write_win_rate_csv(run.out("grid_win_rate.csv"), analytics::win_rate_matrix(all));
  }
  for (const auto& p : res.checkpoints) std::cout << "checkpoint " << p.string() << "\n";
  std::cout << "reports: " << res.reports.size() << ", failures: " << res.failures.size() << "\n";
  run.finish();
  if (res.failures.empty()) return 0;
  for (const auto& f : res.failures) std::cerr << "failed: world " << f.world_seed << " " << f.model << ": " << f.message << "\n";
  return res.reports.empty() ? exit_code(res.failures.front().kind) : kExitPartial;
}

void report_cmd(const Common& c, const std::vector<std::string>& files) {
  Run run("report", c);
  if (files.empty()) fail(ErrorKind::config, "report needs at least one --reports file");
  std::vector<analytics::EvalReport> reports;
  for (const auto& f : files) {
    for (auto& r : analytics::read_reports_csv(run.input(f))) reports.push_back(std::move(r));
  }
  write_json(run.out("summary.json"), analytics::summary_json(reports));
  std::vector<analytics::EvalReport> all;
  for (const auto& r : reports) {
    if (r.regime == "ALL" && r.stress == "none") all.push_back(r);
  }
  if (!all.empty()) analytics::write_win_rate_csv(run.out("win_rate.csv"), analytics::win_rate_matrix(all));
  csv::Table t;
  t.header = {"model", "universe", "sharpe_l1", "sharpe_l3", "delta"};
  for (const auto& s : analytics::constraint_sensitivity(reports)) {
    t.rows.push_back({s.model, s.universe, csv::format(s.l1), csv::format(s.l3), s.delta ? csv::format(*s.delta) : ""});
  }
  csv::write(run.out("sensitivity.csv"), t);
  std::cout << "aggregated " << reports.size() << " reports\n";
  run.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CVaR-distilled neural portfolio allocation pipeline"};
  app.require_subcommand(1);
  Common common;

  GenArgs gen;
  auto* g = app.add_subcommand("gen-synth", "fit the market model and simulate a synthetic world");
  add_common(g, common);
  g->add_option("--horizon", gen.horizon);
  g->add_option("--stride", gen.stride);
  g->add_option("--min-hist", gen.min_hist);
  g->add_option("--assets", gen.assets);
  g->add_option("--returns", gen.returns, "observed weekly returns CSV (replaces the reference market)");
  g->add_option("--factors", gen.factors, "factor CSV matching --returns");

  auto* f = app.add_subcommand("features", "feature tensors for real and synthetic dates");
  add_common(f, common);
  auto* l = app.add_subcommand("label", "teacher labels for every feature row");
  add_common(l, common);
  auto* s = app.add_subcommand("split", "train / val / test split");
  add_common(s, common);

  std::vector<std::string> students;
  auto* t = app.add_subcommand("train", "train student networks");
  add_common(t, common);
  t->add_option("--student", students, "DNN-sup, BNN-sup, DNN-S or BNN-S (default all)");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "walk-forward evaluation of students and baselines");
  add_common(e, common);
  e->add_option("--level", ev.level, "L1, L2 or L3");
  e->add_option("--returns", ev.returns, "returns file inside --dir (e.g. a stressed panel)");
  e->add_option("--student", ev.students);
  e->add_flag("--adaptive", ev.adaptive, "rolling normalization and periodic fine-tuning");
  e->add_flag("--frozen", ev.frozen, "no fine-tuning (the C2A / D2A default is adaptive)");
  e->add_option("--universe", ev.universe, "GRID (synthetic test split), C2A or D2A")
      ->check(CLI::IsMember({"GRID", "C2A", "D2A"}));
  e->add_option("--panel", ev.panel, "panel stem for C2A / D2A (default reference / transfer)");
  e->add_option("--stress", ev.stress, "stress applied to the C2A / D2A panel");

  std::optional<std::string> kind;
  std::optional<std::uint64_t> stress_seed;
  auto* st = app.add_subcommand("stress", "apply a stress transform to the synthetic returns");
  add_common(st, common);
  st->add_option("--kind", kind, "vol_bursts, jumps, whipsaw, corr_spike or combo");
  st->add_option("--stress-seed", stress_seed);

  GridArgs ga;
  auto* gr = app.add_subcommand("grid", "world seeds x model seeds sweep");
  add_common(gr, common);
  gr->add_option("--workers", ga.workers);
  gr->add_option("--horizon", ga.horizon);
  gr->add_option("--assets", ga.assets);
  gr->add_option("--world-seeds", ga.world_seeds);
  gr->add_option("--model-seeds", ga.model_seeds);
  gr->add_flag("!--no-checkpoints", ga.checkpoints);

  std::vector<std::string> report_files;
  auto* rp = app.add_subcommand("report", "aggregate report CSVs");
  add_common(rp, common);
  rp->add_option("--reports", report_files)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*g) gen_synth(common, gen);
    else if (*f) features_cmd(common);
    else if (*l) label_cmd(common);
    else if (*s) split_cmd(common);
    else if (*t) train_cmd(common, students);
    else if (*e) evaluate_cmd(common, ev);
    else if (*st) stress_cmd(common, kind, stress_seed);
    else if (*gr) return grid_cmd(common, ga);
    else if (*rp) report_cmd(common, report_files);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 0;
}
