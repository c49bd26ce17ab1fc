#include "flowgrasp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include "flowgrasp/dataset.hpp"

namespace flowgrasp {

using nlohmann::json;

void SuccessCriteria::validate() const {
  if (!(p_max >= 0.0) || !(contact_eps > 0.0) || min_contacts < 0 || !(spread_max >= 0.0))
    throw ConfigError("success criteria out of range");
}

double max_penetration(const HandConfig& h, const HandSpec& spec, const ScenePrimitive& prim) {
  return erf(forward_kinematics(clamp_joints(h), spec), prim);
}

double contact_direction_bias(const HandPoints& hp, const Scene& scene, double contact_eps) {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const Vec3& tip : hp.fingertips) {
    if (std::abs(sdf(scene.primitive, tip)) > contact_eps) continue;
    const Vec3 dir = scene.cloud.centroid() - tip;
    const double len = dir.norm();
    if (len > 0.0) sum += dir / len;
    ++n;
  }
  return n == 0 ? 1.0 : (sum / n).norm();
}

bool success_proxy(const HandConfig& h, const HandSpec& spec, const Scene& scene,
                   const SuccessCriteria& c) {
  const HandPoints hp = forward_kinematics(clamp_joints(h), spec);
  if (erf(hp, scene.primitive) > c.p_max) return false;
  if (count_contacts(hp, scene.primitive, c.contact_eps) < c.min_contacts) return false;
  return contact_direction_bias(hp, scene, c.contact_eps) <= c.spread_max;
}

double diversity(std::span<const HandConfig> configs) {
  if (configs.size() < 2) return 0.0;
  const auto f = configs.front().joints.size();
  if (f == 0) return 0.0;
  const double n = static_cast<double>(configs.size());
  VecX mean = VecX::Zero(f);
  for (const auto& c : configs) mean += c.joints;
  mean /= n;
  VecX var = VecX::Zero(f);
  for (const auto& c : configs) var += (c.joints - mean).cwiseAbs2();
  var /= n;
  return var.cwiseSqrt().mean();
}

json EvalReport::to_json() const {
  json objs = json::array();
  for (const auto& o : per_object)
    objs.push_back({{"object", o.object},
                    {"n_samples", o.n_samples},
                    {"n_failed", o.n_failed},
                    {"n_success", o.n_success},
                    {"mean_penetration", o.mean_penetration}});
  return {{"n_samples", n_samples},
          {"n_failed", n_failed},
          {"n_success", n_success},
          {"mean_penetration", mean_penetration},
          {"median_penetration", median_penetration},
          {"max_penetration", max_penetration},
          {"success_rate", success_rate},
          {"diversity", diversity},
          {"per_object", objs},
          {"config", config}};
}

bool EvalReport::operator==(const EvalReport& o) const { return to_json() == o.to_json(); }

EvalReport evaluate(std::span<const SampleRecord> samples, std::span<const Scene> scenes,
                    const HandSpec& spec, const SuccessCriteria& criteria) {
  criteria.validate();
  std::map<int, const Scene*> by_id;
  for (const auto& s : scenes) by_id[s.id] = &s;

  EvalReport rep;
  std::map<int, ObjectBreakdown> per;
  std::map<int, double> pen_sum;
  std::vector<double> pens;
  std::vector<HandConfig> successes;
  for (const auto& s : samples) {
    auto it = by_id.find(s.object);
    if (it == by_id.end())
      throw InputError("evaluate: sample references unknown object " + std::to_string(s.object));
    auto& ob = per[s.object];
    ob.object = s.object;
    ++ob.n_samples;
    ++rep.n_samples;
    if (s.failed) {
      ++ob.n_failed;
      ++rep.n_failed;
      continue;
    }
    const double pen = max_penetration(s.config, spec, it->second->primitive);
    pens.push_back(pen);
    pen_sum[s.object] += pen;
    if (success_proxy(s.config, spec, *it->second, criteria)) {
      ++ob.n_success;
      ++rep.n_success;
      successes.push_back(s.config);
    }
  }
  const int ok = rep.n_samples - rep.n_failed;
  if (ok > 0) {
    double sum = 0.0;
    for (double p : pens) sum += p;
    rep.mean_penetration = sum / ok;
    std::vector<double> sorted = pens;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    rep.median_penetration = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    rep.max_penetration = sorted.back();
    rep.success_rate = static_cast<double>(rep.n_success) / ok;
  }
  rep.diversity = diversity(successes);
  for (auto& [id, ob] : per) {
    const int n_ok = ob.n_samples - ob.n_failed;
    ob.mean_penetration = n_ok > 0 ? pen_sum[id] / n_ok : 0.0;
    rep.per_object.push_back(ob);
  }
  return rep;
}

Benchmark make_benchmark(int n_objects, int samples_per_object, int cloud_size,
                         std::uint64_t seed) {
  if (samples_per_object < 1) throw ConfigError("benchmark: samples_per_object must be >= 1");
  Benchmark b;
  b.samples_per_object = samples_per_object;
  const auto prims = generate_objects(n_objects, derive_seed(seed, "benchmark/objects"));
  for (int i = 0; i < n_objects; ++i)
    b.scenes.push_back(make_scene(i, prims[i], cloud_size, derive_seed(seed, "benchmark/cloud", i)));
  return b;
}

std::vector<SampleRecord> run_benchmark(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                        const HandSpec& spec, const RunSpec& run,
                                        std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.nfe = run.nfe;
  cfg.batch_size = bench.samples_per_object;
  cfg.seed = seed;
  cfg.guidance = run.guidance;
  std::vector<SampleRecord> out;
  for (const auto& scene : bench.scenes) {
    const SampleBatch batch = sample(ckpt, scene, spec, cfg, run.energy);
    for (std::size_t i = 0; i < batch.configs.size(); ++i)
      out.push_back({scene.id, batch.configs[i], batch.seeds[i], run.nfe, run.guidance.has_value(),
                     batch.failed[i]});
  }
  return out;
}

namespace {

EvalReport run_report(const FlowCheckpoint& ckpt, const Benchmark& bench, const HandSpec& spec,
                      const RunSpec& run, const SuccessCriteria& criteria, std::uint64_t seed) {
  const auto samples = run_benchmark(ckpt, bench, spec, run, seed);
  EvalReport rep = evaluate(samples, bench.scenes, spec, criteria);
  json g = nullptr;
  if (run.guidance)
    g = {{"scale", run.guidance->scale},
         {"temperature", run.guidance->temperature},
         {"sigma_local", run.guidance->sigma_local},
         {"num_candidates", run.guidance->num_candidates}};
  rep.config = {{"nfe", run.nfe},
                {"seed", seed},
                {"guidance", g},
                {"w_erf", run.energy.weights.w_erf},
                {"w_spf", run.energy.weights.w_spf},
                {"w_srf", run.energy.weights.w_srf},
                {"original_forms", run.energy.form == EnergyForm::Original}};
  return rep;
}

}  // namespace

std::vector<NfeRow> nfe_sweep(const FlowCheckpoint& ckpt, const Benchmark& bench,
                              const HandSpec& spec, const std::vector<int>& nfe_list,
                              const std::optional<GuidanceConfig>& guidance,
                              const GuidanceEnergy& energy, const SuccessCriteria& criteria,
                              std::uint64_t seed) {
  if (nfe_list.empty()) throw ConfigError("nfe_sweep: empty nfe list");
  std::vector<NfeRow> rows;
  for (int nfe : nfe_list)
    rows.push_back({nfe, run_report(ckpt, bench, spec, {nfe, guidance, energy}, criteria, seed)});
  return rows;
}

std::vector<AblationRow> ablate(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                const HandSpec& spec, const GuidanceConfig& guidance,
                                const EnergyWeights& weights, const SuccessCriteria& criteria,
                                int nfe, std::uint64_t seed) {
  struct Variant {
    const char* id;
    const char* name;
    bool srf, erf, spf, original;
  };
  const Variant variants[] = {
      {"a", "Baseline (vanilla FM)", false, false, false, false},
      {"b", "+ SRF", true, false, false, false},
      {"c", "+ ERF", false, true, false, false},
      {"d", "+ SRF & ERF", true, true, false, false},
      {"e", "+ SRF & ERF & SPF", true, true, true, false},
      {"f", "+ SRF & ERF & SPF (original forms)", true, true, true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    RunSpec run;
    run.nfe = nfe;
    run.energy.weights = weights;
    run.energy.weights.w_srf = v.srf ? weights.w_srf : 0.0;
    run.energy.weights.w_erf = v.erf ? weights.w_erf : 0.0;
    run.energy.weights.w_spf = v.spf ? weights.w_spf : 0.0;
    run.energy.form = v.original ? EnergyForm::Original : EnergyForm::Redesigned;
    if (v.srf || v.erf || v.spf) run.guidance = guidance;
    rows.push_back({v.id, v.name, v.srf, v.erf, v.spf, v.original,
                    run_report(ckpt, bench, spec, run, criteria, seed)});
  }
  return rows;
}

std::vector<SensitivityRow> sensitivity(const FlowCheckpoint& ckpt, const Benchmark& bench,
                                        const HandSpec& spec, const GuidanceConfig& guidance,
                                        const EnergyWeights& weights,
                                        const SuccessCriteria& criteria, int nfe,
                                        std::uint64_t seed, const SensitivityGrid& grid) {
  std::vector<SensitivityRow> rows;
  const auto run_with = [&](const GuidanceConfig& g, const EnergyWeights& w) {
    RunSpec run;
    run.nfe = nfe;
    run.guidance = g;
    run.energy.weights = w;
    return run_report(ckpt, bench, spec, run, criteria, seed);
  };
  for (double s : grid.scales) {
    GuidanceConfig g = guidance;
    g.scale = s;
    rows.push_back({"scale", s, run_with(g, weights)});
  }
  for (double tau : grid.temperatures) {
    GuidanceConfig g = guidance;
    g.temperature = tau;
    rows.push_back({"temperature", tau, run_with(g, weights)});
  }
  for (const char* name : {"w_erf", "w_spf", "w_srf"}) {
    for (double value : grid.weights) {
      EnergyWeights w = weights;
      if (std::string(name) == "w_erf") w.w_erf = value;
      if (std::string(name) == "w_spf") w.w_spf = value;
      if (std::string(name) == "w_srf") w.w_srf = value;
      rows.push_back({name, value, run_with(guidance, w)});
    }
  }
  return rows;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << std::setprecision(10);
  return out;
}

}  // namespace

void write_nfe_csv(const std::vector<NfeRow>& rows, const std::string& path) {
  auto out = open_csv(path);
  out << "nfe,success_rate,mean_pen,diversity\n";
  for (const auto& r : rows)
    out << r.nfe << ',' << r.report.success_rate << ',' << r.report.mean_penetration << ','
        << r.report.diversity << '\n';
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  auto out = open_csv(path);
  out << "id,variant,srf,erf,spf,success_rate,mean_pen,diversity\n";
  for (const auto& r : rows)
    out << r.id << ",\"" << r.name << "\"," << r.srf << ',' << r.erf << ',' << r.spf << ','
        << r.report.success_rate << ',' << r.report.mean_penetration << ',' << r.report.diversity
        << '\n';
}

void write_sensitivity_csv(const std::vector<SensitivityRow>& rows, const std::string& path) {
  auto out = open_csv(path);
  out << "parameter,value,success_rate,mean_pen,diversity\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << r.value << ',' << r.report.success_rate << ','
        << r.report.mean_penetration << ',' << r.report.diversity << '\n';
}

}  // namespace flowgrasp
