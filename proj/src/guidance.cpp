#include "flowgrasp/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace flowgrasp {

void GuidanceConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("guidance: temperature must be > 0");
  if (!(sigma_local > 0.0)) throw ConfigError("guidance: sigma_local must be > 0");
  if (num_candidates < 2) throw ConfigError("guidance: num_candidates must be >= 2");
  if (!(t_max > 0.0 && t_max < 1.0)) throw ConfigError("guidance: t_max must lie in (0, 1)");
  if (!(one_minus_t_floor > 0.0)) throw ConfigError("guidance: one_minus_t_floor must be > 0");
  if (!std::isfinite(scale)) throw ConfigError("guidance: scale must be finite");
}

VecX predict_terminal(const VecX& h_t, double t, const VecX& v) {
  if (!(t < 1.0)) throw InputError("predict_terminal: t must be < 1");
  return h_t + (1.0 - t) * v;
}

std::vector<VecX> sample_proposals(const VecX& center, const GuidanceConfig& cfg, Rng& rng) {
  if (cfg.num_candidates < 2) throw ConfigError("sample_proposals: num_candidates must be >= 2");
  std::vector<VecX> out;
  out.reserve(cfg.num_candidates);
  for (int k = 0; k < cfg.num_candidates; ++k)
    out.push_back(center + cfg.sigma_local * standard_normal(rng, center.size()));
  return out;
}

BoltzmannWeights boltzmann_weights(std::span<const double> energies, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("boltzmann_weights: temperature must be > 0");
  BoltzmannWeights out;
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < energies.size(); ++k) {
    if (std::isfinite(energies[k])) {
      out.kept.push_back(static_cast<int>(k));
      lowest = std::min(lowest, energies[k]);
    } else {
      ++out.dropped;
    }
  }
  if (out.dropped > 0)
    std::cerr << "warning: dropped " << out.dropped << " candidate(s) with non-finite energy\n";
  out.weights.reserve(out.kept.size());
  for (int k : out.kept) out.weights.push_back(std::exp(-(energies[k] - lowest) / temperature));
  return out;
}

VecX guidance_field(const VecX& h_t, double t, std::span<const VecX> candidates,
                    std::span<const double> weights, double one_minus_t_floor) {
  if (candidates.size() != weights.size())
    throw InputError("guidance_field: candidates and weights differ in length");
  if (!(t < 1.0)) throw InputError("guidance_field: t must be < 1");
  VecX g = VecX::Zero(h_t.size());
  if (candidates.empty()) return g;
  if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights.front(); }))
    return g;
  const double k = static_cast<double>(candidates.size());
  double mean_w = 0.0;
  for (double w : weights) mean_w += w;
  mean_w /= k;
  if (!(mean_w > 0.0)) {
    std::cerr << "warning: mean importance weight is zero; guidance disabled for this step\n";
    return g;
  }
  const double inv_dt = 1.0 / std::max(1.0 - t, one_minus_t_floor);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double c = weights[i] / mean_w - 1.0;
    if (c != 0.0) g += c * (candidates[i] - h_t);
  }
  return g * (inv_dt / k);
}

VecX guidance_from_velocity(const VecX& v, const VecX& h_t, double t,
                            const EnergyFunction& energy, const GuidanceConfig& cfg, Rng& rng,
                            GuidanceStepInfo* info) {
  if (!(t < 1.0)) throw InputError("guidance_step: t must be < 1");
  if (info) {
    *info = GuidanceStepInfo{};
    info->t = t;
    info->v_norm = v.norm();
  }
  if (t > cfg.t_max) return v;

  const VecX terminal = predict_terminal(h_t, t, v);
  const std::vector<VecX> candidates = sample_proposals(terminal, cfg, rng);
  std::vector<double> energies;
  energies.reserve(candidates.size());
  for (const VecX& c : candidates) energies.push_back(energy(c));
  const BoltzmannWeights bw = boltzmann_weights(energies, cfg.temperature);

  std::vector<VecX> kept;
  kept.reserve(bw.kept.size());
  for (int k : bw.kept) kept.push_back(candidates[k]);
  const VecX g = guidance_field(h_t, t, kept, bw.weights, cfg.one_minus_t_floor);
  if (info) {
    info->active = true;
    info->g_norm = g.norm();
    info->energies = std::move(energies);
  }
  const VecX out = guided_velocity(v, g, cfg.scale);
  return out.allFinite() ? out : v;
}

VecX guidance_step(const VelocityField& field, const VecX& h_t, double t, const VecX& cond,
                   const EnergyFunction& energy, const GuidanceConfig& cfg, Rng& rng,
                   GuidanceStepInfo* info) {
  return guidance_from_velocity(field.velocity(h_t, t, cond), h_t, t, energy, cfg, rng, info);
}

}  // namespace flowgrasp
