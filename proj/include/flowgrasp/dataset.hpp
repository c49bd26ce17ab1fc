#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowgrasp/energy.hpp"
#include "flowgrasp/rng.hpp"

namespace flowgrasp {

/// Settings of the energy-descent grasp oracle.
struct OracleConfig {
  int restarts = 16;
  int descent_steps = 400;
  double step_size = 0.02;
  double fd_step = 1e-4;
  double accept_pen = 0.02;
  int accept_contacts = 3;
  double contact_eps = 0.05;
  double init_radius = 1.5;
  /// Restart positions lie on the part of the init sphere whose direction
  /// from the object has at least this cosine with -z.
  double approach_cos = 0.97;
  /// Palm normal makes at least this cosine with the direction to the object.
  double facing_cos = 0.99;
  /// Roll about the palm normal is uniform in [-max_roll, max_roll].
  double max_roll = 0.2;
  /// Multiplier on the joint components of the descent direction.
  double joint_gain = 20.0;
  /// Energy weights the oracle descends on.
  EnergyWeights weights = default_oracle_weights();

  static EnergyWeights default_oracle_weights() {
    EnergyWeights w;
    w.w_erf = 1.0;
    w.top_k = 12;
    return w;
  }

  void validate() const;
};

struct GraspRecord {
  int object_index = 0;
  ScenePrimitive object;
  std::uint64_t cloud_seed = 0;
  int cloud_size = kDefaultCloudSize;
  HandConfig config;
  double energy = 0.0;
  double penetration = 0.0;
  int contacts = 0;
};

/// Fingertips with |sdf| <= eps.
int count_contacts(const HandPoints& hp, const ScenePrimitive& prim, double eps);

/// Uniformly random rotation as an axis-angle vector (angle in [0, pi]).
Vec3 random_axis_angle(Rng& rng);

/// Unit vector uniform on the spherical cap {u : u . axis >= min_cos}.
Vec3 random_cap_direction(Rng& rng, const Vec3& axis, double min_cos);

/// Orientation whose local +z axis is uniform on the cap of `toward` with
/// cosine >= min_cos, followed by a roll about +z uniform in
/// [-max_roll, max_roll].
Vec3 random_palm_orientation(Rng& rng, const Vec3& toward, double min_cos, double max_roll);

/// n objects centered at the origin; kinds drawn uniformly.
std::vector<ScenePrimitive> generate_objects(int n, std::uint64_t seed);

struct DescentTrace {
  std::vector<double> energies;
};

/// Projected gradient descent from `x` (central differences with step
/// cfg.fd_step). The trial step starts at cfg.step_size, is halved until the
/// energy decreases and grows by 1.5x after each accepted step. Stops early
/// once no backtracked step decreases the energy.
VecX descend_energy(const Scene& scene, const HandSpec& spec, const OracleConfig& cfg, VecX x,
                    DescentTrace* trace = nullptr);

struct SynthesisStats {
  int restarts_run = 0;
  int restarts_accepted = 0;
};

/// Multi-start projected gradient descent (central finite differences,
/// backtracking) on the total energy; returns the lowest-energy candidate that
/// passes the penetration and contact filters, if any.
std::optional<GraspRecord> synthesize_grasp(const Scene& scene, const HandSpec& spec,
                                            const OracleConfig& cfg, Rng& rng,
                                            std::vector<DescentTrace>* traces = nullptr,
                                            SynthesisStats* stats = nullptr,
                                            double max_seconds = 0.0);

struct DatasetConfig {
  int n_objects = 200;
  int grasps_per_object = 4;
  int cloud_size = kDefaultCloudSize;
  /// Wall-clock cap per object in seconds; 0 disables it. A binding cap makes
  /// the output timing dependent.
  double max_seconds_per_object = 0.0;

  void validate() const;
};

struct DatasetStats {
  int objects = 0;
  int objects_skipped = 0;
  int attempted = 0;
  int accepted = 0;
};

struct Dataset {
  nlohmann::json header;
  std::vector<GraspRecord> records;
  DatasetStats stats;
};

inline constexpr const char* kCodeVersion = "flowgrasp-0.1.0";

Dataset build_dataset(const DatasetConfig& dcfg, const OracleConfig& ocfg, const HandSpec& spec,
                      std::uint64_t seed, const nlohmann::json& config_snapshot = {});

void write_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path, const HandSpec& spec);

nlohmann::json primitive_to_json(const ScenePrimitive& prim, std::uint64_t seed, int cloud_size);
ScenePrimitive primitive_from_json(const nlohmann::json& j);

/// Rebuilds the scene (primitive plus its recorded cloud) of a record.
Scene record_scene(const GraspRecord& r);

}  // namespace flowgrasp
