#pragma once

#include <functional>
#include <span>
#include <vector>

#include "flowgrasp/flow_model.hpp"
#include "flowgrasp/rng.hpp"

namespace flowgrasp {

struct GuidanceConfig {
  double scale = 30.0;
  double temperature = 0.05;
  double sigma_local = 0.02;
  int num_candidates = 8;
  /// Guidance is switched off for t > t_max.
  double t_max = 0.98;
  /// Lower bound applied to (1 - t) in the guidance field.
  double one_minus_t_floor = 1e-3;

  void validate() const;
};

/// Linear look-ahead to the end of the path: h_t + (1 - t) v.
VecX predict_terminal(const VecX& h_t, double t, const VecX& v);

/// K i.i.d. draws from N(center, sigma_local^2 I).
std::vector<VecX> sample_proposals(const VecX& center, const GuidanceConfig& cfg, Rng& rng);

/// Boltzmann weights shifted by the minimum finite energy. Non-finite
/// energies are dropped (`kept` marks the surviving candidates).
struct BoltzmannWeights {
  std::vector<double> weights;  // one per kept candidate, in (0, 1]
  std::vector<int> kept;
  int dropped = 0;
};

BoltzmannWeights boltzmann_weights(std::span<const double> energies, double temperature);

/// Self-normalized Monte Carlo guidance velocity:
///   g = (1/K) sum_k (w_k / w_mean - 1) (h1_k - h_t) / max(1 - t, floor).
/// Returns the zero vector when the mean weight is zero.
VecX guidance_field(const VecX& h_t, double t, std::span<const VecX> candidates,
                    std::span<const double> weights, double one_minus_t_floor = 1e-3);

inline VecX guided_velocity(const VecX& v, const VecX& g, double scale) { return v + scale * g; }

/// Energy of a candidate terminal state, expressed in flow coordinates.
using EnergyFunction = std::function<double(const VecX&)>;

/// Per-step diagnostics for trajectory dumps.
struct GuidanceStepInfo {
  double t = 0.0;
  double v_norm = 0.0;
  double g_norm = 0.0;
  bool active = false;
  std::vector<double> energies;
};

/// Predict, explore, evaluate, guide. Returns the guided velocity, or the
/// raw velocity when t > t_max.
VecX guidance_step(const VelocityField& field, const VecX& h_t, double t, const VecX& cond,
                   const EnergyFunction& energy, const GuidanceConfig& cfg, Rng& rng,
                   GuidanceStepInfo* info = nullptr);

/// Same as guidance_step but with the raw velocity already evaluated.
VecX guidance_from_velocity(const VecX& v, const VecX& h_t, double t,
                            const EnergyFunction& energy, const GuidanceConfig& cfg, Rng& rng,
                            GuidanceStepInfo* info = nullptr);

}  // namespace flowgrasp
