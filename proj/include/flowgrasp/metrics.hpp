#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowgrasp/sampler.hpp"

namespace flowgrasp {

/// Simulator-free grasp validity test.
struct SuccessCriteria {
  double p_max = 0.02;
  int min_contacts = 3;
  double contact_eps = 0.05;
  /// Upper bound on the norm of the mean fingertip-to-center direction.
  double spread_max = 0.8;

  void validate() const;
};

double max_penetration(const HandConfig& h, const HandSpec& spec, const ScenePrimitive& prim);

/// Norm of the mean unit vector from each contacting fingertip to the
/// object center; 1 means all contacts sit on one side.
double contact_direction_bias(const HandPoints& hp, const Scene& scene, double contact_eps);

bool success_proxy(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                   const SuccessCriteria& c);

/// Mean over joint dimensions of the population standard deviation.
double diversity(std::span<const HandConfig> configs);

struct SampleRecord {
  int object = 0;
  HandConfig config;
  std::uint64_t seed = 0;
  int nfe = 0;
  bool guided = false;
  bool failed = false;
};

struct ObjectBreakdown {
  int object = 0;
  int n_samples = 0;
  int n_failed = 0;
  int n_success = 0;
  double mean_penetration = 0.0;
};

struct EvalReport {
  int n_samples = 0;
  int n_failed = 0;
  int n_success = 0;
  double mean_penetration = 0.0;
  double median_penetration = 0.0;
  double max_penetration = 0.0;
  double success_rate = 0.0;
  double diversity = 0.0;
  std::vector<ObjectBreakdown> per_object;
  nlohmann::json config;

  nlohmann::json to_json() const;
  bool operator==(const EvalReport& o) const;
};

/// Aggregates metrics over non-failed samples. Throws InputError when a sample
/// references an object id that is not among `scenes`.
EvalReport evaluate(std::span<const SampleRecord> samples, std::span<const Scene> scenes,
                    const HandSpec& spec, const SuccessCriteria& criteria);

/// Held-out objects with their clouds.
struct Benchmark {
  std::vector<Scene> scenes;
  int samples_per_object = 16;
};

Benchmark make_benchmark(int n_objects, int samples_per_object, int cloud_size,
                         std::uint64_t seed);

struct RunSpec {
  int nfe = 100;
  std::optional<GuidanceConfig> guidance;
  GuidanceEnergy energy;
};

/// Samples every benchmark object with shared per-element seeds.
std::vector<SampleRecord> run_benchmark(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                        const HandSpec& spec, const RunSpec& run,
                                        std::uint64_t seed);

struct NfeRow {
  int nfe;
  EvalReport report;
};

std::vector<NfeRow> nfe_sweep(const FlowCheckpoint& ckpt, const Benchmark& bench,
                              const HandSpec& spec, const std::vector<int>& nfe_list,
                              const std::optional<GuidanceConfig>& guidance,
                              const GuidanceEnergy& energy, const SuccessCriteria& criteria,
                              std::uint64_t seed);

struct AblationRow {
  std::string id;
  std::string name;
  bool srf = false;
  bool erf = false;
  bool spf = false;
  bool original_forms = false;
  EvalReport report;
};

/// Variants a-f: vanilla, +SRF, +ERF, +SRF&ERF, +all, +all with original forms.
std::vector<AblationRow> ablate(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                const HandSpec& spec, const GuidanceConfig& guidance,
                                const EnergyWeights& weights, const SuccessCriteria& criteria,
                                int nfe, std::uint64_t seed);

struct SensitivityGrid {
  std::vector<double> scales{0, 10, 30, 50, 100};
  std::vector<double> temperatures{0.01, 0.05, 0.1, 1.0};
  std::vector<double> weights{0.1, 0.25, 0.4, 0.5, 1.0};
};

struct SensitivityRow {
  std::string parameter;  // "scale", "temperature", "w_erf", "w_spf", "w_srf"
  double value = 0.0;
  EvalReport report;
};

/// One-at-a-time sweeps around the given defaults.
std::vector<SensitivityRow> sensitivity(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                        const HandSpec& spec, const GuidanceConfig& guidance,
                                        const EnergyWeights& weights,
                                        const SuccessCriteria& criteria, int nfe,
                                        std::uint64_t seed, const SensitivityGrid& grid = {});

void write_nfe_csv(const std::vector<NfeRow>& rows, const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
void write_sensitivity_csv(const std::vector<SensitivityRow>& rows, const std::string& path);

}  // namespace flowgrasp
