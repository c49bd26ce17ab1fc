#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowgrasp/rng.hpp"
#include "flowgrasp/types.hpp"

namespace flowgrasp {

/// Anything that can report dh/dt at (state, time, condition).
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual int state_dim() const = 0;
  virtual int cond_dim() const = 0;
  virtual VecX velocity(const VecX& h, double t, const VecX& cond) const = 0;
};

enum class Activation { Tanh, SiLU };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Number of time features fed to the network: t, sin(2 pi t), cos(2 pi t).
inline constexpr int kTimeFeatures = 3;

/// Dense MLP velocity field with an explicit backward pass.
///
/// Input is the concatenation [state | t, sin 2pi t, cos 2pi t | condition];
/// every hidden layer applies the activation, the output layer is linear.
class VelocityModel final : public VelocityField {
 public:
  struct Dense {
    MatX weight;  // out x in
    VecX bias;
  };

  /// Per-layer parameter gradients, same shapes as the layers.
  struct Gradients {
    std::vector<MatX> weight;
    std::vector<VecX> bias;
  };

  /// Cached activations for one batched forward pass.
  struct Tape {
    std::vector<MatX> inputs;       // input to each layer
    std::vector<MatX> preactivations;  // hidden layers only
    MatX output;
  };

  VelocityModel() = default;
  VelocityModel(int state_dim, int cond_dim, std::vector<int> hidden, Activation act,
                std::uint64_t seed);

  int state_dim() const override { return state_dim_; }
  int cond_dim() const override { return cond_dim_; }
  int input_dim() const { return state_dim_ + kTimeFeatures + cond_dim_; }
  Activation activation() const { return activation_; }
  const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& mutable_layers() { return layers_; }

  VecX velocity(const VecX& h, double t, const VecX& cond) const override;

  /// Writes the network input for one item into `column`.
  void features(const VecX& h, double t, const VecX& cond, Eigen::Ref<VecX> column) const;

  /// Batched forward; `inputs` is input_dim x B.
  MatX forward(const MatX& inputs) const;
  MatX forward(const MatX& inputs, Tape& tape) const;
  /// Back-propagates dL/d(output) (state_dim x B) through a recorded tape.
  Gradients backward(const Tape& tape, const MatX& grad_output) const;

  std::size_t num_parameters() const;
  /// Parameters flattened layer by layer: weight row-major, then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);
  static std::vector<double> flatten(const Gradients& g);

  bool parameters_finite() const;

 private:
  MatX activate(const MatX& z) const;
  MatX activate_derivative(const MatX& z) const;

  int state_dim_ = 0;
  int cond_dim_ = 0;
  Activation activation_ = Activation::SiLU;
  std::vector<Dense> layers_;
};

/// Point on the linear probability path: (1 - (1 - sigma_min) t) h0 + t h1.
VecX interpolate_path(const VecX& h0, const VecX& h1, double t, double sigma_min);

/// Time derivative of the path: h1 - (1 - sigma_min) h0.
VecX target_velocity(const VecX& h0, const VecX& h1, double sigma_min);

/// One regression target: data point, condition, and the seed of its private
/// noise stream (which fixes the drawn t and h0).
struct FmItem {
  VecX h1;
  VecX cond;
  std::uint64_t noise_seed = 0;
};

struct FmDraw {
  double t;
  VecX h0;
};

FmDraw draw_fm_noise(std::uint64_t noise_seed, int dim);

/// Mean over items of ||v(h_t, t, cond) - u_t||^2.
double fm_loss(const VelocityField& field, std::span<const FmItem> items, double sigma_min);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 4000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double sigma_min = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

class Adam {
 public:
  Adam(const VelocityModel& model, double lr, double beta1, double beta2, double eps);
  void step(VelocityModel& model, const VelocityModel::Gradients& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  VelocityModel::Gradients m_, v_;
};

struct TrainSample {
  VecX h1;
  VecX cond;
};

struct TrainResult {
  VelocityModel model;
  std::vector<double> epoch_loss;
};

/// Minibatch Adam on the flow-matching objective. Reproducible from cfg.seed;
/// throws RuntimeFailure on a non-finite loss.
TrainResult train(VelocityModel model, std::span<const TrainSample> data, const TrainConfig& cfg);

/// Per-dimension affine map between data units and the unit-scale flow space.
struct Standardizer {
  VecX mean;
  VecX scale;

  static Standardizer identity(int dim);
  static Standardizer fit(std::span<const VecX> data);
  VecX forward(const VecX& x) const;  // data -> flow space
  VecX inverse(const VecX& z) const;  // flow space -> data
};

/// Trained model plus the standardization it was trained under.
struct FlowCheckpoint {
  VelocityModel model;
  Standardizer standardizer;
  std::string config_hash;
};

void save_checkpoint(const FlowCheckpoint& ckpt, const std::string& path);
FlowCheckpoint load_checkpoint(const std::string& path);

/// Writes "epoch,loss" rows.
void write_loss_csv(const std::vector<double>& epoch_loss, const std::string& path);

}  // namespace flowgrasp
