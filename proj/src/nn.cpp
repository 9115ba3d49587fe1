#include "cvarnet/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace cvarnet::nn {

namespace {

using Idx = Eigen::Index;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr char kMagic[] = "CVNCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

Matrix read_matrix(const Vector& p, std::size_t off, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMajor>(p.data() + off, static_cast<Idx>(rows), static_cast<Idx>(cols));
}

void add_matrix(Vector& g, std::size_t off, const Matrix& m) {
  Eigen::Map<RowMajor>(g.data() + off, m.rows(), m.cols()) += m;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double rho_for_sigma(double sigma) {
  const double s = sigma - kSigmaFloor;
  if (!(s > 0.0)) fail(ErrorKind::config, "sigma must exceed the floor");
  return s > 30.0 ? s : std::log(std::expm1(s));
}

void NetworkSpec::validate() const {
  if (input == 0 || output == 0) fail(ErrorKind::config, "network input and output must be positive");
  for (auto h : hidden) {
    if (h == 0) fail(ErrorKind::config, "hidden layer of width 0");
  }
  if (variational_layers > layer_count()) {
    fail(ErrorKind::config, "more variational layers than layers");
  }
  if (!(prior_sigma > 0.0)) fail(ErrorKind::config, "prior_sigma must be positive");
  if (!(init_sigma_ratio > 0.0)) fail(ErrorKind::config, "init_sigma_ratio must be positive");
  if (activation != "tanh") fail(ErrorKind::config, "unsupported activation " + activation);
}

nlohmann::json to_json(const NetworkSpec& s) {
  return {{"input", s.input},
          {"hidden", s.hidden},
          {"output", s.output},
          {"variational_layers", s.variational_layers},
          {"prior_sigma", s.prior_sigma},
          {"init_sigma_ratio", s.init_sigma_ratio},
          {"activation", s.activation},
          {"head", "softmax"}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  try {
    s.input = j.at("input").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.output = j.at("output").get<std::size_t>();
    s.variational_layers = j.value("variational_layers", std::size_t{0});
    s.prior_sigma = j.value("prior_sigma", 1.0);
    s.init_sigma_ratio = j.value("init_sigma_ratio", 0.05);
    s.activation = j.value("activation", std::string("tanh"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("network spec: ") + e.what());
  }
  s.validate();
  return s;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    const std::size_t w = spec_.fan_in(l) * spec_.fan_out(l);
    const std::size_t b = spec_.fan_out(l);
    LayerOffsets o;
    o.weight = off;
    off += w;
    o.bias = off;
    off += b;
    if (spec_.is_variational(l)) {
      o.rho_weight = off;
      off += w;
      o.rho_bias = off;
      off += b;
    }
    offsets_.push_back(o);
  }
  params_ = Vector::Zero(static_cast<Idx>(off));
}

Network Network::initialized(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec);
  Rng rng(seed, "nn/init");
  const double rho0 = rho_for_sigma(spec.init_sigma_ratio * spec.prior_sigma);
  Vector& p = net.mutable_params();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto& o = net.offsets_[l];
    const std::size_t nw = spec.fan_in(l) * spec.fan_out(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in(l)));
    for (std::size_t k = 0; k < nw; ++k) p(static_cast<Idx>(o.weight + k)) = bound * (2.0 * rng.uniform() - 1.0);
    if (spec.is_variational(l)) {
      p.segment(static_cast<Idx>(o.rho_weight), static_cast<Idx>(nw)).setConstant(rho0);
      p.segment(static_cast<Idx>(o.rho_bias), static_cast<Idx>(spec.fan_out(l))).setConstant(rho0);
    }
  }
  return net;
}

void Network::set_params(const Vector& p) {
  if (p.size() != params_.size()) fail(ErrorKind::data, "parameter vector has the wrong length");
  params_ = p;
  ++version_;
}

Vector Network::forward(const Vector& x) const {
  Tape tape;
  return forward(x, tape, nullptr);
}

Vector Network::forward(const Vector& x, Tape& tape, Rng* rng) const {
  if (static_cast<std::size_t>(x.size()) != spec_.input) {
    fail(ErrorKind::data, "network input has length " + std::to_string(x.size()) + ", expected " +
                              std::to_string(spec_.input));
  }
  const std::size_t L = spec_.layer_count();
  tape = Tape{};
  tape.version = version_;
  tape.sampled = rng != nullptr;
  tape.inputs.reserve(L);
  tape.weights.reserve(L);
  tape.eps_weight.resize(L);
  tape.eps_bias.resize(L);
  Vector h = x;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& o = offsets_[l];
    const std::size_t in = spec_.fan_in(l), out = spec_.fan_out(l);
    Matrix w = read_matrix(params_, o.weight, out, in);
    Vector b = params_.segment(static_cast<Idx>(o.bias), static_cast<Idx>(out));
    if (rng && spec_.is_variational(l)) {
      Matrix ew(static_cast<Idx>(out), static_cast<Idx>(in));
      for (Idx r = 0; r < ew.rows(); ++r) {
        for (Idx c = 0; c < ew.cols(); ++c) ew(r, c) = rng->normal();
      }
      Vector eb(static_cast<Idx>(out));
      for (Idx r = 0; r < eb.size(); ++r) eb(r) = rng->normal();
      const Matrix rw = read_matrix(params_, o.rho_weight, out, in);
      const Vector rb = params_.segment(static_cast<Idx>(o.rho_bias), static_cast<Idx>(out));
      w += (rw.unaryExpr([](double v) { return softplus(v) + kSigmaFloor; }).array() * ew.array()).matrix();
      b += (rb.unaryExpr([](double v) { return softplus(v) + kSigmaFloor; }).array() * eb.array()).matrix();
      tape.eps_weight[l] = std::move(ew);
      tape.eps_bias[l] = std::move(eb);
    }
    tape.inputs.push_back(h);
    Vector z = w * h + b;
    tape.weights.push_back(std::move(w));
    if (l + 1 < L) {
      h = z.array().tanh();
      tape.activations.push_back(h);
    } else {
      h = softmax(z);
    }
  }
  tape.output = h;
  return h;
}

Vector Network::backward(const Tape& tape, const Vector& upstream) const {
  if (tape.version != version_) fail(ErrorKind::numerical, "stale tape: parameters changed since forward");
  const std::size_t L = spec_.layer_count();
  if (tape.inputs.size() != L) fail(ErrorKind::numerical, "incomplete tape");
  if (upstream.size() != tape.output.size()) fail(ErrorKind::data, "upstream gradient has the wrong length");
  Vector grad = Vector::Zero(params_.size());
  const Vector& y = tape.output;
  Vector dz = y.cwiseProduct(upstream.array().matrix() - Vector::Constant(y.size(), y.dot(upstream)));
  for (std::size_t li = L; li-- > 0;) {
    const auto& o = offsets_[li];
    const std::size_t out = spec_.fan_out(li), in = spec_.fan_in(li);
    const Matrix dw = dz * tape.inputs[li].transpose();
    add_matrix(grad, o.weight, dw);
    grad.segment(static_cast<Idx>(o.bias), static_cast<Idx>(out)) += dz;
    if (tape.sampled && spec_.is_variational(li)) {
      const Matrix rw = read_matrix(params_, o.rho_weight, out, in);
      const Vector rb = params_.segment(static_cast<Idx>(o.rho_bias), static_cast<Idx>(out));
      const Matrix drw = (dw.array() * tape.eps_weight[li].array() *
                          rw.unaryExpr([](double v) { return sigmoid(v); }).array())
                             .matrix();
      add_matrix(grad, o.rho_weight, drw);
      grad.segment(static_cast<Idx>(o.rho_bias), static_cast<Idx>(out)) +=
          (dz.array() * tape.eps_bias[li].array() * rb.unaryExpr([](double v) { return sigmoid(v); }).array())
              .matrix();
    }
    if (li > 0) {
      const Vector dh = tape.weights[li].transpose() * dz;
      const Vector& a = tape.activations[li - 1];
      dz = dh.array() * (1.0 - a.array().square());
    }
  }
  return grad;
}

double kl_gaussian(double mu, double sigma, double prior_sigma) {
  const double ratio = sigma * sigma / (prior_sigma * prior_sigma);
  return 0.5 * (ratio + mu * mu / (prior_sigma * prior_sigma) - 1.0 - std::log(ratio));
}

double Network::kl() const {
  double total = 0.0;
  const double sp = spec_.prior_sigma;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    if (!spec_.is_variational(l)) continue;
    const auto& o = offsets_[l];
    const std::size_t nw = spec_.fan_in(l) * spec_.fan_out(l), nb = spec_.fan_out(l);
    for (std::size_t k = 0; k < nw; ++k) {
      total += kl_gaussian(params_(static_cast<Idx>(o.weight + k)),
                           softplus(params_(static_cast<Idx>(o.rho_weight + k))) + kSigmaFloor, sp);
    }
    for (std::size_t k = 0; k < nb; ++k) {
      total += kl_gaussian(params_(static_cast<Idx>(o.bias + k)),
                           softplus(params_(static_cast<Idx>(o.rho_bias + k))) + kSigmaFloor, sp);
    }
  }
  return total;
}

Vector Network::kl_gradient() const {
  Vector g = Vector::Zero(params_.size());
  const double sp2 = spec_.prior_sigma * spec_.prior_sigma;
  auto fill = [&](std::size_t mu_off, std::size_t rho_off, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto im = static_cast<Idx>(mu_off + k), ir = static_cast<Idx>(rho_off + k);
      const double rho = params_(ir);
      const double s = softplus(rho) + kSigmaFloor;
      g(im) += params_(im) / sp2;
      g(ir) += (s / sp2 - 1.0 / s) * sigmoid(rho);
    }
  };
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    if (!spec_.is_variational(l)) continue;
    const auto& o = offsets_[l];
    fill(o.weight, o.rho_weight, spec_.fan_in(l) * spec_.fan_out(l));
    fill(o.bias, o.rho_bias, spec_.fan_out(l));
  }
  return g;
}

McResult mc_average(const Network& net, const Vector& x, std::size_t samples, std::uint64_t seed,
                    std::uint64_t stream) {
  if (samples == 0) fail(ErrorKind::config, "mc_average needs at least one sample");
  const Idx n = static_cast<Idx>(net.spec().output);
  McResult r{Vector::Zero(n), Vector::Zero(n)};
  if (!net.spec().bayesian()) {
    r.mean = net.forward(x);
    return r;
  }
  Rng rng = Rng(seed, "nn/mc").split(stream);
  Vector sum = Vector::Zero(n), sumsq = Vector::Zero(n);
  Tape tape;
  for (std::size_t m = 0; m < samples; ++m) {
    const Vector y = net.forward(x, tape, &rng);
    sum += y;
    sumsq += y.cwiseProduct(y);
  }
  const double M = static_cast<double>(samples);
  r.mean = sum / M;
  if (samples > 1) {
    r.dispersion = ((sumsq - M * r.mean.cwiseProduct(r.mean)) / (M - 1.0)).cwiseMax(0.0).cwiseSqrt();
  }
  return r;
}

Network Checkpoint::network() const {
  Network net(spec);
  net.set_params(params);
  return net;
}

Vector Checkpoint::normalize(const Vector& x) const {
  if (feature_mean.size() == 0) return x;
  return (x - feature_mean).cwiseQuotient(feature_std);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Network probe(ckpt.spec);
  if (static_cast<std::size_t>(ckpt.params.size()) != probe.param_count()) {
    fail(ErrorKind::data, "checkpoint parameters do not match the network spec");
  }
  nlohmann::json header;
  header["format"] = "cvarnet-checkpoint";
  header["version"] = 1;
  header["spec"] = to_json(ckpt.spec);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < ckpt.spec.layer_count(); ++l) {
    const auto& o = probe.offsets(l);
    nlohmann::json e{{"in", ckpt.spec.fan_in(l)},
                     {"out", ckpt.spec.fan_out(l)},
                     {"variational", ckpt.spec.is_variational(l)},
                     {"weight", o.weight},
                     {"bias", o.bias}};
    if (ckpt.spec.is_variational(l)) {
      e["rho_weight"] = o.rho_weight;
      e["rho_bias"] = o.rho_bias;
    }
    layers.push_back(e);
  }
  header["layers"] = layers;
  header["param_count"] = ckpt.params.size();
  header["feature_dim"] = ckpt.feature_mean.size();
  header["provenance"] = ckpt.provenance;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::data, "cannot write " + path.string());
  os.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Idx i = 0; i < ckpt.params.size(); ++i) put_f64(os, ckpt.params(i));
  for (Idx i = 0; i < ckpt.feature_mean.size(); ++i) put_f64(os, ckpt.feature_mean(i));
  for (Idx i = 0; i < ckpt.feature_std.size(); ++i) put_f64(os, ckpt.feature_std(i));
  if (!os) fail(ErrorKind::data, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::data, "cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  is.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    fail(ErrorKind::data, path.string() + " is not a checkpoint");
  }
  const std::uint64_t len = get_u64(is);
  if (!is || len > (1u << 26)) fail(ErrorKind::data, path.string() + ": bad header length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint c;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": malformed header: " + e.what());
  }
  c.spec = spec_from_json(header.at("spec"));
  const auto np = header.at("param_count").get<std::size_t>();
  const auto nf = header.at("feature_dim").get<std::size_t>();
  c.provenance = header.value("provenance", nlohmann::json::object());
  c.params.resize(static_cast<Idx>(np));
  for (std::size_t i = 0; i < np; ++i) c.params(static_cast<Idx>(i)) = get_f64(is);
  c.feature_mean.resize(static_cast<Idx>(nf));
  c.feature_std.resize(static_cast<Idx>(nf));
  for (std::size_t i = 0; i < nf; ++i) c.feature_mean(static_cast<Idx>(i)) = get_f64(is);
  for (std::size_t i = 0; i < nf; ++i) c.feature_std(static_cast<Idx>(i)) = get_f64(is);
  if (!is) fail(ErrorKind::data, path.string() + ": truncated parameter block");
  if (Network(c.spec).param_count() != np) fail(ErrorKind::data, path.string() + ": parameter count mismatch");
  return c;
}

}  // namespace cvarnet::nn
