#pragma once

#include <vector>

#include "flowgrasp/config.hpp"

namespace flowgrasp {

/// Standardized (h1, descriptor) pairs plus the standardizer fitted on them.
struct TrainingSet {
  std::vector<TrainSample> samples;
  Standardizer standardizer;
};

TrainingSet make_training_set(const Dataset& ds, const HandSpec& spec);

struct TrainedFlow {
  FlowCheckpoint checkpoint;
  std::vector<double> epoch_loss;
};

/// Fits the standardizer, initializes the model from cfg.model_init_seed()
/// and trains with cfg.train (its seed replaced by cfg.train_seed()).
TrainedFlow train_flow(const Dataset& ds, const RunConfig& cfg);

/// Held-out objects drawn from cfg.benchmark_seed().
Benchmark config_benchmark(const RunConfig& cfg);

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& values, int window);

}  // namespace flowgrasp
