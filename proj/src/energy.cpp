#include "flowgrasp/energy.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace flowgrasp {

void EnergyWeights::validate() const {
  for (double w : {w_erf, w_spf, w_srf})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("energy weights must be finite and >= 0");
  if (!(tau_self >= 0.0)) throw ConfigError("energy: tau_self must be >= 0");
  if (top_k < 1) throw ConfigError("energy: top_k must be >= 1");
  if (!(hard_threshold > 0.0)) throw ConfigError("energy: hard_threshold must be > 0");
}

double erf(const HandPoints& hp, const ScenePrimitive& prim) {
  double worst = 0.0;
  for (const Vec3& p : hp.surface_points) worst = std::max(worst, -sdf(prim, p));
  return worst;
}

double erf_mean(const HandPoints& hp, const ScenePrimitive& prim) {
  if (hp.surface_points.empty()) return 0.0;
  double sum = 0.0;
  for (const Vec3& p : hp.surface_points) sum += std::max(0.0, -sdf(prim, p));
  return sum / static_cast<double>(hp.surface_points.size());
}

double spf(const HandPoints& hp, const ObjectCloud& cloud, int top_k) {
  const int n = static_cast<int>(hp.keypoints.size());
  if (top_k < 1 || top_k > n)
    throw ConfigError("spf: top_k=" + std::to_string(top_k) + " outside [1, " +
                      std::to_string(n) + "]");
  std::array<double, 64> small{};
  std::vector<double> large;
  double* dist = small.data();
  if (n > static_cast<int>(small.size())) {
    large.resize(n);
    dist = large.data();
  }
  for (int i = 0; i < n; ++i) dist[i] = cloud.nearest(hp.keypoints[i]).distance;
  std::nth_element(dist, dist + (top_k - 1), dist + n);
  double local = 0.0;
  for (int i = 0; i < top_k; ++i) local += dist[i];
  return (hp.palm_center - cloud.centroid()).norm() + local / top_k;
}

double spf_hard(const HandPoints& hp, const ObjectCloud& cloud, double threshold) {
  double sum = 0.0;
  int active = 0;
  for (const Vec3& k : hp.keypoints) {
    const double d = cloud.nearest(k).distance;
    if (d < threshold) {
      sum += d;
      ++active;
    }
  }
  return active == 0 ? 0.0 : sum / active;
}

double srf(const HandPoints& hp, const HandSpec& spec, double tau_self) {
  double sum = 0.0;
  for (const auto& [i, j] : self_collision_pairs(spec))
    sum += std::max(0.0, tau_self - (hp.keypoints[i] - hp.keypoints[j]).norm());
  return sum;
}

EnergyTerms energy_terms(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                         const EnergyWeights& w, EnergyForm form) {
  EnergyTerms out;
  if (w.all_zero()) return out;
  const HandPoints hp = forward_kinematics(clamp_joints(h), spec);
  const bool original = form == EnergyForm::Original;
  if (w.w_erf != 0.0) out.erf = original ? erf_mean(hp, scene.primitive) : erf(hp, scene.primitive);
  if (w.w_spf != 0.0)
    out.spf = original ? spf_hard(hp, scene.cloud, w.hard_threshold) : spf(hp, scene.cloud, w.top_k);
  if (w.w_srf != 0.0) out.srf = srf(hp, spec, w.tau_self);
  out.total = w.w_erf * out.erf + w.w_spf * out.spf + w.w_srf * out.srf;
  return out;
}

double total_energy(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                    const EnergyWeights& w, EnergyForm form) {
  return energy_terms(h, spec, scene, w, form).total;
}

}  // namespace flowgrasp
