#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowgrasp/dataset.hpp"
#include "flowgrasp/metrics.hpp"

namespace flowgrasp {

struct ModelConfig {
  std::vector<int> hidden{128, 128, 128};
  Activation activation = Activation::SiLU;
};

struct EvalConfig {
  int n_objects = 50;
  int samples_per_object = 16;
  SuccessCriteria criteria;
  std::vector<int> nfe_list{10, 25, 50, 100};
};

struct PathsConfig {
  std::string dataset = "dataset.jsonl";
  std::string checkpoint = "checkpoint.json";
  std::string samples = "samples.jsonl";
};

/// Everything a run needs, loaded from one JSON file. Missing keys take the
/// defaults below; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  HandSpec hand;
  EnergyWeights energy;
  ModelConfig model;
  TrainConfig train;
  GuidanceConfig guidance;
  int nfe = 100;
  int sample_batch_size = 16;
  OracleConfig oracle;
  DatasetConfig dataset;
  EvalConfig eval;
  PathsConfig paths;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);

  /// SHA-256 of the canonical JSON dump.
  std::string hash() const;

  // Named seed streams split from the global seed.
  std::uint64_t dataset_seed() const { return derive_seed(seed, "dataset"); }
  std::uint64_t train_seed() const { return derive_seed(seed, "train"); }
  std::uint64_t model_init_seed() const { return derive_seed(seed, "model/init"); }
  std::uint64_t sample_seed() const { return derive_seed(seed, "sample"); }
  std::uint64_t benchmark_seed() const { return derive_seed(seed, "benchmark"); }
};

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::string& path);

}  // namespace flowgrasp
