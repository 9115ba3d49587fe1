#include "cvarnet/training.hpp"

#include "cvarnet/csv.hpp"
#include "cvarnet/features.hpp"
#include "cvarnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cvarnet::train {

namespace {

using Idx = Eigen::Index;

std::size_t batches(std::size_t n, std::size_t batch) {
  if (n == 0) return 0;
  if (batch == 0 || batch >= n) return 1;
  return (n + batch - 1) / batch;
}

class Trainer {
 public:
  Trainer(nn::Network net, const TrainConfig& cfg, const std::vector<alloc::LabeledPair>& labeled,
          const std::vector<UnlabeledItem>* unlabeled)
      : net_(std::move(net)),
        cfg_(cfg),
        sup_rng_(cfg.model_seed, "train/sup"),
        unsup_rng_(cfg.model_seed, "train/unsup"),
        batch_rng_(cfg.model_seed, "train/batch") {
    if (labeled.empty()) fail(ErrorKind::data, "training needs at least one labeled pair");
    const auto N = net_.spec().output;
    std::vector<Vector> raw;
    for (const auto& p : labeled) {
      if (static_cast<std::size_t>(p.features.size()) != net_.spec().input ||
          static_cast<std::size_t>(p.weights.size()) != N) {
        fail(ErrorKind::data, "labeled pair on " + p.date.iso() + " does not match the network");
      }
      raw.push_back(p.features);
      y_.push_back(p.weights);
    }
    stdz_ = fit_standardizer(raw);
    for (const auto& r : raw) x_.push_back((r - stdz_.mean).cwiseQuotient(stdz_.std));
    if (unlabeled) {
      for (const auto& u : *unlabeled) {
        if (static_cast<std::size_t>(u.window.cols()) != N) {
          fail(ErrorKind::data, "unlabeled window has the wrong asset count");
        }
        ux_.push_back((u.features - stdz_.mean).cwiseQuotient(stdz_.std));
        uw_.push_back(&u.window);
      }
    }
    beta_ = cfg.beta.value_or(1.0 / static_cast<double>(labeled.size()));
  }

  void supervised_epoch(const std::string& stage, std::size_t cycle, std::size_t epoch) {
    const auto order = permutation(x_.size(), sup_epochs_++);
    const std::size_t nb = batches(x_.size(), cfg_.batch_size);
    const std::size_t bs = (x_.size() + nb - 1) / nb;
    CurvePoint cp{stage, cycle, epoch};
    const bool bayes = net_.spec().bayesian();
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b * bs, hi = std::min(x_.size(), lo + bs);
      const double B = static_cast<double>(hi - lo);
      Vector g = Vector::Zero(net_.params().size());
      Rng rng = sup_rng_.split(static_cast<std::uint64_t>(sup_steps_));
      double mse = 0.0;
      nn::Tape tape;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t i = order[k];
        const Vector yhat = net_.forward(x_[i], tape, bayes ? &rng : nullptr);
        const Vector diff = yhat - y_[i];
        mse += diff.squaredNorm() / B;
        g += net_.backward(tape, 2.0 * diff / B);
      }
      double kl = 0.0;
      if (bayes) {
        const double share = B / static_cast<double>(x_.size());
        kl = net_.kl();
        g += beta_ * share * net_.kl_gradient();
        cp.kl += kl * share;
      }
      cp.mse += mse * B / static_cast<double>(x_.size());
      step(g);
      ++sup_steps_;
    }
    cp.total = cp.mse + beta_ * cp.kl;
    check(cp);
    curve_.push_back(cp);
  }

  void unsupervised_epoch(std::size_t cycle, std::size_t epoch) {
    const auto order = permutation(ux_.size(), unsup_epochs_++ + (1ull << 40));
    const std::size_t nb = batches(ux_.size(), cfg_.batch_size);
    const std::size_t bs = (ux_.size() + nb - 1) / nb;
    CurvePoint cp{"S1-unsup", cycle, epoch};
    const bool bayes = net_.spec().bayesian();
    const bool active = cfg_.lambda_cvar != 0.0 || cfg_.lambda_div != 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b * bs, hi = std::min(ux_.size(), lo + bs);
      const double B = static_cast<double>(hi - lo);
      Vector g = Vector::Zero(net_.params().size());
      if (active) {
        Rng rng = unsup_rng_.split(static_cast<std::uint64_t>(unsup_steps_));
        nn::Tape tape;
        for (std::size_t k = lo; k < hi; ++k) {
          const std::size_t i = order[k];
          const Vector w = net_.forward(ux_[i], tape, bayes ? &rng : nullptr);
          const auto terms =
              unsupervised_loss(w, *uw_[i], cfg_.lambda_cvar, cfg_.lambda_div, cfg_.alpha);
          cp.cvar += terms.cvar / static_cast<double>(ux_.size());
          cp.div += terms.div / static_cast<double>(ux_.size());
          cp.total += terms.total / static_cast<double>(ux_.size());
          g += net_.backward(tape, terms.grad / B);
        }
      }
      step(g);
      ++unsup_steps_;
    }
    check(cp);
    curve_.push_back(cp);
  }

  TrainResult finish(const std::string& regime) {
    TrainResult r;
    r.checkpoint.spec = net_.spec();
    r.checkpoint.params = net_.params();
    r.checkpoint.feature_mean = stdz_.mean;
    r.checkpoint.feature_std = stdz_.std;
    r.curve = std::move(curve_);
    r.steps = sup_steps_ + unsup_steps_;
    nlohmann::json prov;
    prov["regime"] = regime;
    prov["config"] = to_json(cfg_);
    prov["beta_effective"] = beta_;
    prov["labeled"] = x_.size();
    prov["unlabeled"] = ux_.size();
    prov["supervised_steps"] = sup_steps_;
    prov["unsupervised_steps"] = unsup_steps_;
    if (!r.curve.empty()) {
      prov["final_mse"] = last_mse(r.curve);
      prov["final_total"] = r.curve.back().total;
    }
    r.checkpoint.provenance = prov;
    return r;
  }

 private:
  static double last_mse(const std::vector<CurvePoint>& curve) {
    for (auto it = curve.rbegin(); it != curve.rend(); ++it) {
      if (it->stage != "S1-unsup") return it->mse;
    }
    return 0.0;
  }

  std::vector<std::size_t> permutation(std::size_t n, std::uint64_t epoch) const {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (batches(n, cfg_.batch_size) > 1) {
      Rng rng = batch_rng_.split(epoch);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    return order;
  }

  void step(Vector g) {
    const double norm = g.norm();
    if (!std::isfinite(norm)) fail(ErrorKind::numerical, "non-finite gradient during training");
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) g *= cfg_.clip_norm / norm;
    if (cfg_.learning_rate != 0.0) net_.mutable_params() -= cfg_.learning_rate * g;
  }

  static void check(const CurvePoint& cp) {
    if (!std::isfinite(cp.total) || !std::isfinite(cp.mse)) {
      fail(ErrorKind::numerical, "training diverged in stage " + cp.stage + " epoch " +
                                     std::to_string(cp.epoch));
    }
  }

  nn::Network net_;
  TrainConfig cfg_;
  Standardizer stdz_;
  double beta_ = 0.0;
  std::vector<Vector> x_, y_, ux_;
  std::vector<const Matrix*> uw_;
  Rng sup_rng_, unsup_rng_, batch_rng_;
  std::size_t sup_steps_ = 0, unsup_steps_ = 0;
  std::uint64_t sup_epochs_ = 0, unsup_epochs_ = 0;
  std::vector<CurvePoint> curve_;
};

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"lambda_cvar", c.lambda_cvar}, {"lambda_div", c.lambda_div},
                   {"epochs_s0", c.epochs_s0},     {"cycles", c.cycles},
                   {"epochs_sup", c.epochs_sup},   {"epochs_unsup", c.epochs_unsup},
                   {"epochs_s2", c.epochs_s2},     {"learning_rate", c.learning_rate},
                   {"batch_size", c.batch_size},   {"clip_norm", c.clip_norm},
                   {"alpha", c.alpha},             {"model_seed", c.model_seed},
                   {"optimizer", "gradient_descent"}};
  j["beta"] = c.beta ? nlohmann::json(*c.beta) : nlohmann::json("1/labeled");
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("beta") && j["beta"].is_number()) c.beta = j["beta"].get<double>();
    c.lambda_cvar = j.value("lambda_cvar", c.lambda_cvar);
    c.lambda_div = j.value("lambda_div", c.lambda_div);
    c.epochs_s0 = j.value("epochs_s0", c.epochs_s0);
    c.cycles = j.value("cycles", c.cycles);
    c.epochs_sup = j.value("epochs_sup", c.epochs_sup);
    c.epochs_unsup = j.value("epochs_unsup", c.epochs_unsup);
    c.epochs_s2 = j.value("epochs_s2", c.epochs_s2);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.alpha = j.value("alpha", c.alpha);
    c.model_seed = j.value("model_seed", c.model_seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("train config: ") + e.what());
  }
  if (c.lambda_cvar < 0 || c.lambda_div < 0 || (c.beta && *c.beta < 0) || c.learning_rate < 0) {
    fail(ErrorKind::config, "train config: weights and learning rate must be nonnegative");
  }
  return c;
}

double supervised_loss(const std::vector<Vector>& predicted, const std::vector<Vector>& teacher) {
  if (predicted.empty()) fail(ErrorKind::data, "supervised loss of an empty batch");
  if (predicted.size() != teacher.size()) fail(ErrorKind::data, "batch sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != teacher[i].size()) fail(ErrorKind::data, "weight vectors differ in length");
    s += (predicted[i] - teacher[i]).squaredNorm();
  }
  return s / static_cast<double>(predicted.size());
}

double bnn_supervised_loss(const std::vector<Vector>& predicted, const std::vector<Vector>& teacher,
                           double kl_total, double beta) {
  if (beta < 0.0) fail(ErrorKind::config, "beta must be nonnegative");
  return supervised_loss(predicted, teacher) + beta * kl_total;
}

UnsupervisedTerms unsupervised_loss(const Vector& w, const Matrix& window, double lambda_cvar,
                                    double lambda_div, double alpha) {
  if (window.cols() != w.size()) fail(ErrorKind::data, "window and weights differ in width");
  const auto S = static_cast<std::size_t>(window.rows());
  const double kf = std::ceil((1.0 - alpha) * static_cast<double>(S) - 1e-9);
  const auto K = static_cast<std::size_t>(std::max(kf, 1.0));
  if (S == 0 || K > S) fail(ErrorKind::data, "scenario window too short for the tail");
  UnsupervisedTerms t;
  t.grad = Vector::Zero(w.size());
  const Vector loss = -(window * w);
  std::vector<Idx> idx(S);
  std::iota(idx.begin(), idx.end(), Idx{0});
  // Stable order makes the subgradient at ties deterministic.
  std::stable_sort(idx.begin(), idx.end(), [&](Idx a, Idx b) { return loss(a) > loss(b); });
  for (std::size_t k = 0; k < K; ++k) {
    t.cvar += loss(idx[k]);
    t.grad -= lambda_cvar * window.row(idx[k]).transpose();
  }
  t.cvar /= static_cast<double>(K);
  t.grad /= static_cast<double>(K);
  for (Idx i = 0; i < w.size(); ++i) {
    if (w(i) > 0.0) {
      t.div += w(i) * std::log(w(i));
      t.grad(i) += lambda_div * (std::log(w(i)) + 1.0);
    }
  }
  t.total = lambda_cvar * t.cvar + lambda_div * t.div;
  return t;
}

Standardizer fit_standardizer(const std::vector<Vector>& rows) {
  if (rows.empty()) fail(ErrorKind::data, "cannot standardize an empty set");
  const Idx d = rows[0].size();
  Matrix m(static_cast<Idx>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Idx>(r)) = rows[r].transpose();
  Standardizer s;
  s.mean = m.colwise().mean().transpose();
  s.std.resize(d);
  for (Idx c = 0; c < d; ++c) {
    const double sd = stats::sample_std(Vector(m.col(c)));
    s.std(c) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::size_t expected_steps(const TrainConfig& c, std::size_t labeled, std::size_t unlabeled,
                           bool sandwich) {
  const std::size_t lb = batches(labeled, c.batch_size), ub = batches(unlabeled, c.batch_size);
  if (!sandwich) return (c.epochs_s0 + c.epochs_s2) * lb;
  return (c.epochs_s0 + c.cycles * c.epochs_sup + c.epochs_s2) * lb + c.cycles * c.epochs_unsup * ub;
}

TrainResult train_supervised(nn::Network net, const std::vector<alloc::LabeledPair>& labeled,
                             const TrainConfig& config, std::optional<std::size_t> total_epochs) {
  Trainer t(std::move(net), config, labeled, nullptr);
  const std::size_t epochs = total_epochs.value_or(config.epochs_s0 + config.epochs_s2);
  for (std::size_t e = 0; e < epochs; ++e) t.supervised_epoch("SUP", 0, e);
  return t.finish("supervised");
}

TrainResult train_sandwich(nn::Network net, const Dataset& dataset, const TrainConfig& config) {
  if (dataset.unlabeled.empty() && config.cycles > 0) {
    fail(ErrorKind::data, "sandwich training needs an unlabeled pool");
  }
  Trainer t(std::move(net), config, dataset.labeled, &dataset.unlabeled);
  for (std::size_t e = 0; e < config.epochs_s0; ++e) t.supervised_epoch("S0", 0, e);
  for (std::size_t c = 0; c < config.cycles; ++c) {
    for (std::size_t e = 0; e < config.epochs_sup; ++e) t.supervised_epoch("S1-sup", c + 1, e);
    for (std::size_t e = 0; e < config.epochs_unsup; ++e) t.unsupervised_epoch(c + 1, e);
  }
  for (std::size_t e = 0; e < config.epochs_s2; ++e) t.supervised_epoch("S2", 0, e);
  return t.finish("sandwich");
}

std::string student_name(StudentKind k) {
  switch (k) {
    case StudentKind::dnn_sup: return "DNN-sup";
    case StudentKind::bnn_sup: return "BNN-sup";
    case StudentKind::dnn_sandwich: return "DNN-S";
    case StudentKind::bnn_sandwich: return "BNN-S";
  }
  return "?";
}

StudentKind student_from_name(const std::string& name) {
  for (auto k : {StudentKind::dnn_sup, StudentKind::bnn_sup, StudentKind::dnn_sandwich,
                 StudentKind::bnn_sandwich}) {
    if (student_name(k) == name) return k;
  }
  fail(ErrorKind::config, "unknown student " + name);
}

bool is_bayesian(StudentKind k) { return k == StudentKind::bnn_sup || k == StudentKind::bnn_sandwich; }
bool is_sandwich(StudentKind k) {
  return k == StudentKind::dnn_sandwich || k == StudentKind::bnn_sandwich;
}

nlohmann::json to_json(const ArchitectureConfig& a) {
  return {{"hidden", a.hidden}, {"variational_layers", a.variational_layers}, {"prior_sigma", a.prior_sigma}};
}

ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  try {
    a.hidden = j.value("hidden", a.hidden);
    a.variational_layers = j.value("variational_layers", a.variational_layers);
    a.prior_sigma = j.value("prior_sigma", a.prior_sigma);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("architecture: ") + e.what());
  }
  return a;
}

nn::NetworkSpec student_spec(StudentKind kind, std::size_t assets, const ArchitectureConfig& arch) {
  nn::NetworkSpec s;
  s.input = assets * features::kFeatureCount;
  s.hidden = arch.hidden;
  s.output = assets;
  s.prior_sigma = arch.prior_sigma;
  s.variational_layers = is_bayesian(kind) ? std::min(arch.variational_layers, s.layer_count()) : 0;
  return s;
}

TrainResult train_student(StudentKind kind, const Dataset& dataset, std::size_t assets,
                          const ArchitectureConfig& arch, const TrainConfig& config) {
  auto net = nn::Network::initialized(student_spec(kind, assets, arch), config.model_seed);
  TrainResult r = is_sandwich(kind) ? train_sandwich(std::move(net), dataset, config)
                                    : train_supervised(std::move(net), dataset.labeled, config,
                                                       config.epochs_s0 +
                                                           config.cycles * config.epochs_sup +
                                                           config.epochs_s2);
  r.checkpoint.provenance["student"] = student_name(kind);
  r.checkpoint.provenance["architecture"] = to_json(arch);
  return r;
}

Split split_dataset(const std::vector<alloc::LabeledPair>& real,
                    const std::vector<alloc::LabeledPair>& synthetic, std::uint64_t seed,
                    double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    fail(ErrorKind::config, "train fraction must lie in (0, 1]");
  }
  Split s;
  const std::size_t total = real.size() + synthetic.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total)));
  s.train = real;
  if (real.size() > n_train) {
    s.warnings.push_back("real pairs alone exceed the training share; all kept in train");
  }
  std::vector<std::size_t> order(synthetic.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "split");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t fill = n_train > real.size() ? std::min(n_train - real.size(), order.size()) : 0;
  const std::size_t rest = order.size() - fill;
  const std::size_t n_val = rest / 2;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = synthetic[order[k]];
    if (k < fill) {
      s.train.push_back(p);
    } else if (k < fill + n_val) {
      s.val.push_back(p);
    } else {
      s.test.push_back(p);
    }
  }
  auto by_date = [](const alloc::LabeledPair& a, const alloc::LabeledPair& b) {
    return a.index < b.index;
  };
  std::stable_sort(s.train.begin() + static_cast<std::ptrdiff_t>(real.size()), s.train.end(), by_date);
  std::stable_sort(s.val.begin(), s.val.end(), by_date);
  std::stable_sort(s.test.begin(), s.test.end(), by_date);
  if (s.val.empty() || s.test.empty()) s.warnings.push_back("validation or test split is empty");
  return s;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  csv::Table t;
  t.header = {"stage", "cycle", "epoch", "mse", "kl", "cvar", "div", "total"};
  for (const auto& c : curve) {
    t.rows.push_back({c.stage, std::to_string(c.cycle), std::to_string(c.epoch), csv::format(c.mse),
                      csv::format(c.kl), csv::format(c.cvar), csv::format(c.div), csv::format(c.total)});
  }
  csv::write(path, t);
}

}  // namespace cvarnet::train
