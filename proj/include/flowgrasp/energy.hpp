#pragma once

#include "flowgrasp/hand_model.hpp"
#include "flowgrasp/scene.hpp"

namespace flowgrasp {

struct EnergyWeights {
  double w_erf = 0.4;
  double w_spf = 0.4;
  double w_srf = 0.4;
  double tau_self = 0.1;
  int top_k = 5;
  /// Attraction cut-off used by the thresholded (original-form) surface term.
  double hard_threshold = 0.1;

  void validate() const;
  bool all_zero() const { return w_erf == 0.0 && w_spf == 0.0 && w_srf == 0.0; }
};

/// Redesigned: max-pooled penetration and two-level attraction.
/// Original: mean penetration and hard-thresholded attraction.
enum class EnergyForm { Redesigned, Original };

/// Deepest penetration of any hand point: max_j ReLU(-sdf(p_j)).
double erf(const HandPoints& hp, const ScenePrimitive& prim);

/// Mean penetration over all hand points.
double erf_mean(const HandPoints& hp, const ScenePrimitive& prim);

/// Palm-to-object-center distance plus the mean NN-distance of the `top_k`
/// keypoints closest to the cloud.
double spf(const HandPoints& hp, const ObjectCloud& cloud, int top_k);

/// Mean NN-distance over keypoints closer than `threshold`; 0 if none are.
double spf_hard(const HandPoints& hp, const ObjectCloud& cloud, double threshold);

/// Hinge penalty sum over keypoint pairs closer than `tau_self`.
double srf(const HandPoints& hp, const HandSpec& spec, double tau_self);

struct EnergyTerms {
  double erf = 0.0;
  double spf = 0.0;
  double srf = 0.0;
  double total = 0.0;
};

/// Evaluates the weighted total on the joint-clamped configuration. Terms
/// with zero weight are skipped and reported as 0.
EnergyTerms energy_terms(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                         const EnergyWeights& w, EnergyForm form = EnergyForm::Redesigned);

double total_energy(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                    const EnergyWeights& w, EnergyForm form = EnergyForm::Redesigned);

}  // namespace flowgrasp
