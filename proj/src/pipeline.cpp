#include "flowgrasp/pipeline.hpp"

#include <algorithm>

namespace flowgrasp {

TrainingSet make_training_set(const Dataset& ds, const HandSpec& spec) {
  if (ds.records.empty()) throw InputError("training set: dataset has no records");
  std::vector<VecX> flat;
  flat.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    if (r.config.joints.size() != spec.num_fingers)
      throw ConfigError("training set: record does not match the hand spec");
    flat.push_back(r.config.flatten());
  }
  TrainingSet set;
  set.standardizer = Standardizer::fit(flat);
  set.samples.reserve(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i)
    set.samples.push_back(
        {set.standardizer.forward(flat[i]), object_descriptor(ds.records[i].object)});
  return set;
}

TrainedFlow train_flow(const Dataset& ds, const RunConfig& cfg) {
  const TrainingSet set = make_training_set(ds, cfg.hand);
  VelocityModel model(cfg.hand.dim(), kDescriptorDim, cfg.model.hidden, cfg.model.activation,
                      cfg.model_init_seed());
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed();
  TrainResult res = train(std::move(model), set.samples, tc);
  return {{std::move(res.model), set.standardizer, cfg.hash()}, std::move(res.epoch_loss)};
}

Benchmark config_benchmark(const RunConfig& cfg) {
  return make_benchmark(cfg.eval.n_objects, cfg.eval.samples_per_object, cfg.dataset.cloud_size,
                        cfg.benchmark_seed());
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
  if (window < 1) throw ConfigError("smooth: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

}  // namespace flowgrasp
