#include "flowgrasp/sampler.hpp"

#include <fstream>
#include <iomanip>

namespace flowgrasp {

void SamplerConfig::validate() const {
  if (nfe < 1) throw ConfigError("sampler: nfe must be >= 1");
  if (batch_size < 1) throw ConfigError("sampler: batch_size must be >= 1");
  if (guidance) guidance->validate();
}

int SampleBatch::n_failed() const {
  int n = 0;
  for (bool f : failed) n += f ? 1 : 0;
  return n;
}

IntegrationResult integrate(const VelocityField& field, const VecX& h0, const VecX& cond, int nfe,
                            const GuidanceConfig* guidance, const EnergyFunction* energy,
                            Rng* guidance_rng, bool trace) {
  if (nfe < 1) throw ConfigError("integrate: nfe must be >= 1");
  if (guidance && (!energy || !guidance_rng))
    throw ConfigError("integrate: guidance requires an energy and an rng");
  IntegrationResult out;
  VecX h = h0;
  const double dt = 1.0 / nfe;
  if (trace) out.trace.states.push_back(h);
  for (int i = 0; i < nfe; ++i) {
    const double t = static_cast<double>(i) / nfe;
    VecX v = field.velocity(h, t, cond);
    if (guidance) {
      GuidanceStepInfo info;
      v = guidance_from_velocity(v, h, t, *energy, *guidance, *guidance_rng,
                                 trace ? &info : nullptr);
      if (trace) out.trace.steps.push_back(std::move(info));
    }
    h = euler_step(h, dt, v);
    if (trace) out.trace.states.push_back(h);
    if (!h.allFinite()) {
      out.failed = true;
      break;
    }
  }
  out.final_state = std::move(h);
  return out;
}

std::uint64_t element_seed(std::uint64_t base, int scene_id, int index) {
  return derive_seed(base, "sample/element",
                     (static_cast<std::uint64_t>(static_cast<std::uint32_t>(scene_id)) << 32) |
                         static_cast<std::uint32_t>(index));
}

EnergyFunction scene_energy(const FlowCheckpoint& ckpt, const Scene& scene, const HandSpec& spec,
                            const GuidanceEnergy& energy) {
  return [&ckpt, &scene, spec, energy](const VecX& z) {
    const HandConfig h = HandConfig::unflatten(ckpt.standardizer.inverse(z), spec);
    return total_energy(h, spec, scene, energy.weights, energy.form);
  };
}

SampleBatch sample(const FlowCheckpoint& ckpt, const Scene& scene, const HandSpec& spec,
                   const SamplerConfig& cfg, const GuidanceEnergy& energy) {
  cfg.validate();
  if (ckpt.model.state_dim() != spec.dim())
    throw ConfigError("sample: checkpoint state dimension does not match the hand");
  const VecX cond = object_descriptor(scene.primitive);
  const EnergyFunction efn = scene_energy(ckpt, scene, spec, energy);
  const GuidanceConfig* guidance = cfg.guidance ? &*cfg.guidance : nullptr;

  SampleBatch batch;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const std::uint64_t seed = element_seed(cfg.seed, scene.id, i);
    Rng noise_rng = make_rng(seed, "noise");
    Rng guidance_rng = make_rng(seed, "guidance");
    const VecX h0 = standard_normal(noise_rng, spec.dim());
    IntegrationResult r =
        integrate(ckpt.model, h0, cond, cfg.nfe, guidance, &efn, &guidance_rng, cfg.trace);
    const VecX data = ckpt.standardizer.inverse(r.final_state);
    batch.configs.push_back(r.failed ? HandConfig::zero(spec) : HandConfig::unflatten(data, spec));
    batch.failed.push_back(r.failed);
    batch.seeds.push_back(seed);
    if (cfg.trace) batch.traces.push_back(std::move(r.trace));
  }
  return batch;
}

void write_trajectory_csv(const Trajectory& traj, int nfe, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  if (traj.states.empty()) return;
  const auto d = traj.states.front().size();
  out << "step,t";
  for (Eigen::Index k = 0; k < d; ++k) out << ",h" << k;
  out << ",v_norm,g_norm,guided,energies\n" << std::setprecision(17);
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    out << s << ',' << static_cast<double>(s) / nfe;
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << traj.states[s][k];
    if (s < traj.steps.size()) {
      const auto& info = traj.steps[s];
      out << ',' << info.v_norm << ',' << info.g_norm << ',' << (info.active ? 1 : 0) << ',';
      for (std::size_t e = 0; e < info.energies.size(); ++e)
        out << (e ? ";" : "") << info.energies[e];
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

}  // namespace flowgrasp
