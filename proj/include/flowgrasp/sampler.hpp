#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowgrasp/energy.hpp"
#include "flowgrasp/flow_model.hpp"
#include "flowgrasp/guidance.hpp"

namespace flowgrasp {

struct SamplerConfig {
  int nfe = 100;
  int batch_size = 16;
  std::uint64_t seed = 0;
  /// Unset means vanilla flow matching.
  std::optional<GuidanceConfig> guidance;
  bool trace = false;

  void validate() const;
};

inline VecX euler_step(const VecX& h, double dt, const VecX& v) { return h + dt * v; }

struct Trajectory {
  std::vector<VecX> states;  // nfe + 1 entries, states[0] is the drawn noise
  std::vector<GuidanceStepInfo> steps;
};

struct IntegrationResult {
  VecX final_state;
  bool failed = false;
  Trajectory trace;
};

/// Fixed-step Euler on the grid t_i = i / nfe. With `guidance` set, every
/// step uses the Monte Carlo guided velocity under `energy`.
IntegrationResult integrate(const VelocityField& field, const VecX& h0, const VecX& cond, int nfe,
                            const GuidanceConfig* guidance, const EnergyFunction* energy,
                            Rng* guidance_rng, bool trace);

/// Energy configuration used while guiding.
struct GuidanceEnergy {
  EnergyWeights weights;
  EnergyForm form = EnergyForm::Redesigned;
};

struct SampleBatch {
  std::vector<HandConfig> configs;  // in data units
  std::vector<bool> failed;
  std::vector<std::uint64_t> seeds;
  std::vector<Trajectory> traces;  // filled only when cfg.trace

  int n_failed() const;
};

/// Seed of batch element `index` for object `scene_id`; fixes its noise and
/// guidance streams so different variants can share them.
std::uint64_t element_seed(std::uint64_t base, int scene_id, int index);

/// Draws cfg.batch_size grasps for one scene.
SampleBatch sample(const FlowCheckpoint& ckpt, const Scene& scene, const HandSpec& spec,
                   const SamplerConfig& cfg, const GuidanceEnergy& energy);

/// Energy of a flow-space state for a given scene (de-standardizes, clamps
/// joints and evaluates the weighted total).
EnergyFunction scene_energy(const FlowCheckpoint& ckpt, const Scene& scene, const HandSpec& spec,
                            const GuidanceEnergy& energy);

void write_trajectory_csv(const Trajectory& traj, int nfe, const std::string& path);

}  // namespace flowgrasp
