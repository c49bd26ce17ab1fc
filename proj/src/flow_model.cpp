#include "flowgrasp/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace flowgrasp {

using nlohmann::json;

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "silu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "silu") return Activation::SiLU;
  throw ConfigError("unknown activation '" + name + "'");
}

VelocityModel::VelocityModel(int state_dim, int cond_dim, std::vector<int> hidden, Activation act,
                             std::uint64_t seed)
    : state_dim_(state_dim), cond_dim_(cond_dim), activation_(act) {
  if (state_dim < 1 || cond_dim < 0) throw ConfigError("velocity model: bad dimensions");
  for (int w : hidden)
    if (w < 1) throw ConfigError("velocity model: hidden widths must be >= 1");
  Rng rng(seed);
  std::vector<int> widths{input_dim()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(state_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    const bool last = l + 2 == widths.size();
    // Glorot-uniform; the output layer starts small so fresh models are near zero.
    const double limit = std::sqrt(6.0 / (in + out)) * (last ? 0.1 : 1.0);
    Dense d{MatX(out, in), VecX::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) d.weight(r, c) = uniform(rng, -limit, limit);
    layers_.push_back(std::move(d));
  }
}

void VelocityModel::features(const VecX& h, double t, const VecX& cond,
                             Eigen::Ref<VecX> column) const {
  column.head(state_dim_) = h;
  column[state_dim_] = t;
  column[state_dim_ + 1] = std::sin(2.0 * std::numbers::pi * t);
  column[state_dim_ + 2] = std::cos(2.0 * std::numbers::pi * t);
  if (cond_dim_ > 0) column.tail(cond_dim_) = cond;
}

VecX VelocityModel::velocity(const VecX& h, double t, const VecX& cond) const {
  if (h.size() != state_dim_ || cond.size() != cond_dim_)
    throw ConfigError("velocity: expected state " + std::to_string(state_dim_) + " / cond " +
                      std::to_string(cond_dim_) + ", got " + std::to_string(h.size()) + " / " +
                      std::to_string(cond.size()));
  MatX x(input_dim(), 1);
  features(h, t, cond, x.col(0));
  return forward(x).col(0);
}

MatX VelocityModel::activate(const MatX& z) const {
  if (activation_ == Activation::Tanh) return z.array().tanh().matrix();
  return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

MatX VelocityModel::activate_derivative(const MatX& z) const {
  if (activation_ == Activation::Tanh) {
    const auto th = z.array().tanh();
    return (1.0 - th * th).matrix();
  }
  const auto sig = 1.0 / (1.0 + (-z.array()).exp());
  return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
}

MatX VelocityModel::forward(const MatX& inputs) const {
  MatX a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    MatX z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = l + 1 < layers_.size() ? activate(z) : std::move(z);
  }
  return a;
}

MatX VelocityModel::forward(const MatX& inputs, Tape& tape) const {
  tape.inputs.clear();
  tape.preactivations.clear();
  MatX a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.inputs.push_back(a);
    MatX z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      a = activate(z);
      tape.preactivations.push_back(std::move(z));
    } else {
      a = std::move(z);
    }
  }
  tape.output = a;
  return a;
}

VelocityModel::Gradients VelocityModel::backward(const Tape& tape, const MatX& grad_output) const {
  const std::size_t n = layers_.size();
  Gradients g;
  g.weight.resize(n);
  g.bias.resize(n);
  MatX delta = grad_output;
  for (std::size_t l = n; l-- > 0;) {
    g.weight[l] = delta * tape.inputs[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (layers_[l].weight.transpose() * delta).cwiseProduct(
          activate_derivative(tape.preactivations[l - 1]));
    }
  }
  return g;
}

std::size_t VelocityModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto& d : layers_) n += d.weight.size() + d.bias.size();
  return n;
}

std::vector<double> VelocityModel::parameters() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (const auto& d : layers_) {
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) out.push_back(d.weight(r, c));
    for (Eigen::Index r = 0; r < d.bias.size(); ++r) out.push_back(d.bias[r]);
  }
  return out;
}

void VelocityModel::set_parameters(std::span<const double> values) {
  if (values.size() != num_parameters()) throw ConfigError("set_parameters: size mismatch");
  std::size_t k = 0;
  for (auto& d : layers_) {
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = values[k++];
    for (Eigen::Index r = 0; r < d.bias.size(); ++r) d.bias[r] = values[k++];
  }
}

std::vector<double> VelocityModel::flatten(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    for (Eigen::Index r = 0; r < g.weight[l].rows(); ++r)
      for (Eigen::Index c = 0; c < g.weight[l].cols(); ++c) out.push_back(g.weight[l](r, c));
    for (Eigen::Index r = 0; r < g.bias[l].size(); ++r) out.push_back(g.bias[l][r]);
  }
  return out;
}

bool VelocityModel::parameters_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const Dense& d) { return d.weight.allFinite() && d.bias.allFinite(); });
}

// ---------------------------------------------------------------------------

VecX interpolate_path(const VecX& h0, const VecX& h1, double t, double sigma_min) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("interpolate_path: t must lie in [0, 1]");
  return (1.0 - (1.0 - sigma_min) * t) * h0 + t * h1;
}

VecX target_velocity(const VecX& h0, const VecX& h1, double sigma_min) {
  return h1 - (1.0 - sigma_min) * h0;
}

FmDraw draw_fm_noise(std::uint64_t noise_seed, int dim) {
  Rng rng(noise_seed);
  FmDraw d;
  d.t = uniform01(rng);
  d.h0 = standard_normal(rng, dim);
  return d;
}

double fm_loss(const VelocityField& field, std::span<const FmItem> items, double sigma_min) {
  if (items.empty()) throw InputError("fm_loss: empty batch");
  double sum = 0.0;
  for (const FmItem& item : items) {
    const FmDraw d = draw_fm_noise(item.noise_seed, static_cast<int>(item.h1.size()));
    const VecX ht = interpolate_path(d.h0, item.h1, d.t, sigma_min);
    const VecX u = target_velocity(d.h0, item.h1, sigma_min);
    sum += (field.velocity(ht, d.t, item.cond) - u).squaredNorm();
  }
  return sum / static_cast<double>(items.size());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1 || epochs < 1) throw ConfigError("train: batch_size and epochs must be >= 1");
  if (!(sigma_min > 0.0 && sigma_min <= 1e-2))
    throw ConfigError("train: sigma_min must lie in (0, 1e-2]");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw ConfigError("train: invalid Adam coefficients");
}

Adam::Adam(const VelocityModel& model, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& d : model.layers()) {
    m_.weight.push_back(MatX::Zero(d.weight.rows(), d.weight.cols()));
    v_.weight.push_back(MatX::Zero(d.weight.rows(), d.weight.cols()));
    m_.bias.push_back(VecX::Zero(d.bias.size()));
    v_.bias.push_back(VecX::Zero(d.bias.size()));
  }
}

void Adam::step(VelocityModel& model, const VelocityModel::Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  auto& layers = model.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], m_.weight[l], v_.weight[l]);
    update(layers[l].bias, grads.bias[l], m_.bias[l], v_.bias[l]);
  }
}

TrainResult train(VelocityModel model, std::span<const TrainSample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  const int d = model.state_dim();
  for (const auto& s : data)
    if (s.h1.size() != d || s.cond.size() != model.cond_dim())
      throw ConfigError("train: sample shape does not match the model");

  Adam opt(model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
  const auto n = static_cast<int>(data.size());
  std::vector<int> order(n);
  TrainResult result;
  result.epoch_loss.reserve(cfg.epochs);
  VelocityModel::Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(cfg.seed, "train/shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      MatX inputs(model.input_dim(), b);
      MatX targets(d, b);
      for (int j = 0; j < b; ++j) {
        const int idx = order[start + j];
        const auto seed = derive_seed(cfg.seed, "train/noise",
                                      static_cast<std::uint64_t>(epoch) * n + idx);
        const FmDraw draw = draw_fm_noise(seed, d);
        const TrainSample& s = data[idx];
        model.features(interpolate_path(draw.h0, s.h1, draw.t, cfg.sigma_min), draw.t, s.cond,
                       inputs.col(j));
        targets.col(j) = target_velocity(draw.h0, s.h1, cfg.sigma_min);
      }
      const MatX residual = model.forward(inputs, tape) - targets;
      const double batch_loss = residual.colwise().squaredNorm().sum();
      if (!std::isfinite(batch_loss))
        throw RuntimeFailure("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting at " + std::to_string(start));
      epoch_sum += batch_loss;
      opt.step(model, model.backward(tape, (2.0 / b) * residual));
    }
    result.epoch_loss.push_back(epoch_sum / n);
  }
  if (!model.parameters_finite()) throw RuntimeFailure("train: parameters became non-finite");
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::identity(int dim) { return {VecX::Zero(dim), VecX::Ones(dim)}; }

Standardizer Standardizer::fit(std::span<const VecX> data) {
  if (data.empty()) throw InputError("standardizer: empty data");
  const auto dim = data.front().size();
  VecX mean = VecX::Zero(dim);
  for (const auto& x : data) mean += x;
  mean /= static_cast<double>(data.size());
  VecX var = VecX::Zero(dim);
  for (const auto& x : data) var += (x - mean).cwiseAbs2();
  var /= static_cast<double>(data.size());
  VecX scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < dim; ++i)
    if (scale[i] < 1e-8) scale[i] = 1.0;
  return {mean, scale};
}

VecX Standardizer::forward(const VecX& x) const {
  return (x - mean).cwiseQuotient(scale);
}

VecX Standardizer::inverse(const VecX& z) const { return z.cwiseProduct(scale) + mean; }

namespace {

json vec_to_json(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VecX vec_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void save_checkpoint(const FlowCheckpoint& ckpt, const std::string& path) {
  const VelocityModel& m = ckpt.model;
  json layers = json::array();
  for (const auto& d : m.layers()) {
    std::vector<double> w;
    w.reserve(d.weight.size());
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) w.push_back(d.weight(r, c));
    layers.push_back({{"rows", d.weight.rows()},
                      {"cols", d.weight.cols()},
                      {"weights", w},
                      {"bias", vec_to_json(d.bias)}});
  }
  json j{{"format", "flowgrasp-checkpoint"},
         {"version", 1},
         {"state_dim", m.state_dim()},
         {"cond_dim", m.cond_dim()},
         {"activation", to_string(m.activation())},
         {"layers", layers},
         {"standardizer",
          {{"mean", vec_to_json(ckpt.standardizer.mean)},
           {"scale", vec_to_json(ckpt.standardizer.scale)}}},
         {"config_hash", ckpt.config_hash}};
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
  if (!out) throw RuntimeFailure("failed writing checkpoint '" + path + "'");
}

FlowCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "flowgrasp-checkpoint" || j.value("version", 0) != 1)
    throw ConfigError("checkpoint '" + path + "' has an unsupported format");
  const int state_dim = j.at("state_dim").get<int>();
  const int cond_dim = j.at("cond_dim").get<int>();
  std::vector<int> hidden;
  const auto& layers = j.at("layers");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) hidden.push_back(layers[l].at("rows"));
  FlowCheckpoint ckpt;
  ckpt.model = VelocityModel(state_dim, cond_dim, hidden,
                             activation_from_string(j.at("activation")), 0);
  auto& dst = ckpt.model.mutable_layers();
  if (dst.size() != layers.size()) throw ConfigError("checkpoint layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = layers[l].at("rows").get<Eigen::Index>();
    const auto cols = layers[l].at("cols").get<Eigen::Index>();
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    if (rows != dst[l].weight.rows() || cols != dst[l].weight.cols() ||
        static_cast<Eigen::Index>(w.size()) != rows * cols)
      throw ConfigError("checkpoint layer " + std::to_string(l) + " has inconsistent shape");
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) dst[l].weight(r, c) = w[r * cols + c];
    dst[l].bias = vec_from_json(layers[l].at("bias"));
    if (dst[l].bias.size() != rows) throw ConfigError("checkpoint bias has wrong size");
  }
  ckpt.standardizer.mean = vec_from_json(j.at("standardizer").at("mean"));
  ckpt.standardizer.scale = vec_from_json(j.at("standardizer").at("scale"));
  if (ckpt.standardizer.mean.size() != state_dim || ckpt.standardizer.scale.size() != state_dim)
    throw ConfigError("checkpoint standardizer has wrong dimension");
  ckpt.config_hash = j.value("config_hash", "");
  return ckpt;
}

void write_loss_csv(const std::vector<double>& epoch_loss, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) out << e << ',' << epoch_loss[e] << '\n';
}

}  // namespace flowgrasp
