#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

namespace flowgrasp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string samples;
  std::string loss_csv;
  std::string trace_dir;
  std::optional<int> n_objects;
  std::optional<int> nfe;
  std::optional<double> max_seconds;
  bool vanilla = false;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.nfe) cfg.nfe = *o.nfe;
  if (o.max_seconds) cfg.dataset.max_seconds_per_object = *o.max_seconds;
  cfg.validate();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& fallback) {
  return flag.empty() ? fallback : flag;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeFailure("failed writing '" + path + "'");
}

void write_meta(const RunConfig& cfg, const std::string& artifact, json extra = json::object()) {
  json meta = provenance(cfg);
  meta["artifact"] = fs::path(artifact).filename().string();
  meta.update(extra);
  write_json(meta, artifact + ".meta.json");
}

GuidanceEnergy guidance_energy(const RunConfig& cfg) { return {cfg.energy, EnergyForm::Redesigned}; }

std::optional<GuidanceConfig> guidance_for(const RunConfig& cfg, bool vanilla) {
  if (vanilla) return std::nullopt;
  return cfg.guidance;
}

json benchmark_json(const RunConfig& cfg, int n_objects, int per_object) {
  return {{"n_objects", n_objects},
          {"samples_per_object", per_object},
          {"cloud_size", cfg.dataset.cloud_size},
          {"seed", cfg.benchmark_seed()}};
}

Benchmark benchmark_from_json(const json& b) {
  return make_benchmark(b.at("n_objects").get<int>(), b.at("samples_per_object").get<int>(),
                        b.at("cloud_size").get<int>(), b.at("seed").get<std::uint64_t>());
}

json report_summary(const json& header) {
  return {{"nfe", header.at("nfe")}, {"guided", header.at("guided")}, {"seed", header.at("seed")}};
}

// --- sample generation shared by `sample` and `verify` ----------------------

struct SampleRun {
  SampleFile file;
  std::vector<Trajectory> traces;
  std::vector<std::pair<int, int>> trace_ids;  // (object, index)
};

SampleRun run_sampling(const RunConfig& cfg, const FlowCheckpoint& ckpt,
                       const std::string& ckpt_path, int n_objects, bool guided, bool trace) {
  const int per_object = cfg.sample_batch_size;
  const json bjson = benchmark_json(cfg, n_objects, per_object);
  const Benchmark bench = benchmark_from_json(bjson);

  SamplerConfig sc;
  sc.nfe = cfg.nfe;
  sc.batch_size = per_object;
  sc.seed = cfg.sample_seed();
  sc.trace = trace;
  if (guided) sc.guidance = cfg.guidance;
  const GuidanceEnergy energy = guidance_energy(cfg);

  SampleRun run;
  run.file.header = provenance(cfg);
  run.file.header["type"] = "header";
  run.file.header["format"] = "flowgrasp-samples";
  run.file.header["version"] = 1;
  run.file.header["checkpoint_sha256"] = file_sha256(ckpt_path);
  run.file.header["checkpoint_config_hash"] = ckpt.config_hash;
  run.file.header["benchmark"] = bjson;
  run.file.header["nfe"] = cfg.nfe;
  run.file.header["guided"] = guided;

  for (const Scene& scene : bench.scenes) {
    SampleBatch batch = sample(ckpt, scene, cfg.hand, sc, energy);
    for (std::size_t i = 0; i < batch.configs.size(); ++i) {
      run.file.records.push_back(
          {scene.id, batch.configs[i], batch.seeds[i], cfg.nfe, guided, batch.failed[i]});
      if (trace) {
        run.traces.push_back(std::move(batch.traces[i]));
        run.trace_ids.emplace_back(scene.id, static_cast<int>(i));
      }
    }
  }
  return run;
}

EvalReport report_for(const SampleFile& f, const RunConfig& cfg) {
  const Benchmark bench = benchmark_from_json(f.header.at("benchmark"));
  EvalReport rep = evaluate(f.records, bench.scenes, cfg.hand, cfg.eval.criteria);
  rep.config = report_summary(f.header);
  return rep;
}

void print_report(const EvalReport& rep) {
  std::printf("samples %d  failed %d  success %.4f  mean_pen %.6f  median_pen %.6f  div %.4f\n",
              rep.n_samples, rep.n_failed, rep.success_rate, rep.mean_penetration,
              rep.median_penetration, rep.diversity);
}

// --- subcommands ------------------------------------------------------------

int cmd_gen_data(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.n_objects) cfg.dataset.n_objects = *o.n_objects;
  cfg.validate();
  const std::string out = pick(o.out, cfg.paths.dataset);
  const Dataset ds =
      build_dataset(cfg.dataset, cfg.oracle, cfg.hand, cfg.dataset_seed(), provenance(cfg));
  write_dataset(ds, out);
  const double yield =
      ds.stats.attempted > 0 ? static_cast<double>(ds.stats.accepted) / ds.stats.attempted : 0.0;
  std::printf("wrote %s\nobjects %d  skipped %d  grasps %d/%d  yield %.4f\nconfig %s  seed %llu\n",
              out.c_str(), ds.stats.objects, ds.stats.objects_skipped, ds.stats.accepted,
              ds.stats.attempted, yield, cfg.hash().c_str(),
              static_cast<unsigned long long>(cfg.seed));
  return kOk;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string in = pick(o.dataset, cfg.paths.dataset);
  const std::string out = pick(o.out, cfg.paths.checkpoint);
  const std::string loss_path = pick(o.loss_csv, out + ".loss.csv");
  const Dataset ds = load_dataset(in, cfg.hand);
  const TrainedFlow tf = train_flow(ds, cfg);
  save_checkpoint(tf.checkpoint, out);
  write_loss_csv(tf.epoch_loss, loss_path);
  write_meta(cfg, out, {{"dataset_sha256", file_sha256(in)}, {"loss_csv", loss_path}});
  const auto sm = smooth(tf.epoch_loss, 10);
  std::printf("wrote %s and %s\nrecords %zu  epochs %zu  loss %.6f -> %.6f (smoothed %.6f)\n",
              out.c_str(), loss_path.c_str(), ds.records.size(), tf.epoch_loss.size(),
              tf.epoch_loss.front(), tf.epoch_loss.back(), sm.back());
  return kOk;
}

int cmd_sample(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string ckpt_path = pick(o.checkpoint, cfg.paths.checkpoint);
  const std::string out = pick(o.out, cfg.paths.samples);
  const FlowCheckpoint ckpt = load_checkpoint(ckpt_path);
  const int n_objects = o.n_objects.value_or(cfg.eval.n_objects);
  const SampleRun run =
      run_sampling(cfg, ckpt, ckpt_path, n_objects, !o.vanilla, !o.trace_dir.empty());
  write_samples(run.file, cfg.hand, out);
  if (!o.trace_dir.empty()) {
    fs::create_directories(o.trace_dir);
    for (std::size_t i = 0; i < run.traces.size(); ++i) {
      const auto [obj, idx] = run.trace_ids[i];
      const fs::path p = fs::path(o.trace_dir) /
                         ("object" + std::to_string(obj) + "_sample" + std::to_string(idx) + ".csv");
      write_trajectory_csv(run.traces[i], cfg.nfe, p.string());
    }
  }
  std::printf("wrote %s (%zu samples, %s, nfe %d)\n", out.c_str(), run.file.records.size(),
              o.vanilla ? "vanilla" : "guided", cfg.nfe);
  const EvalReport rep = report_for(run.file, cfg);
  print_report(rep);
  std::cout << rep.to_json().dump() << '\n';
  return kOk;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string in = pick(o.samples, cfg.paths.samples);
  const SampleFile f = read_samples(in, cfg.hand);
  const EvalReport rep = report_for(f, cfg);
  print_report(rep);
  std::cout << rep.to_json().dump() << '\n';
  if (!o.out.empty()) {
    json j = rep.to_json();
    j["provenance"] = provenance(cfg);
    j["samples_sha256"] = file_sha256(in);
    write_json(j, o.out);
  }
  return kOk;
}

int cmd_sweep_nfe(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string ckpt_path = pick(o.checkpoint, cfg.paths.checkpoint);
  const std::string out = pick(o.out, "nfe_sweep.csv");
  const FlowCheckpoint ckpt = load_checkpoint(ckpt_path);
  Benchmark bench = config_benchmark(cfg);
  if (o.n_objects)
    bench = make_benchmark(*o.n_objects, cfg.eval.samples_per_object, cfg.dataset.cloud_size,
                           cfg.benchmark_seed());
  const auto rows = nfe_sweep(ckpt, bench, cfg.hand, cfg.eval.nfe_list,
                              guidance_for(cfg, o.vanilla), guidance_energy(cfg),
                              cfg.eval.criteria, cfg.sample_seed());
  write_nfe_csv(rows, out);
  write_meta(cfg, out, {{"checkpoint_sha256", file_sha256(ckpt_path)}, {"guided", !o.vanilla}});
  std::printf("%6s %10s %12s %10s\n", "nfe", "success", "mean_pen", "diversity");
  for (const auto& r : rows)
    std::printf("%6d %10.4f %12.6f %10.4f\n", r.nfe, r.report.success_rate,
                r.report.mean_penetration, r.report.diversity);
  return kOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string ckpt_path = pick(o.checkpoint, cfg.paths.checkpoint);
  const std::string out = pick(o.out, "ablation.csv");
  const FlowCheckpoint ckpt = load_checkpoint(ckpt_path);
  Benchmark bench = config_benchmark(cfg);
  if (o.n_objects)
    bench = make_benchmark(*o.n_objects, cfg.eval.samples_per_object, cfg.dataset.cloud_size,
                           cfg.benchmark_seed());
  const auto rows = ablate(ckpt, bench, cfg.hand, cfg.guidance, cfg.energy, cfg.eval.criteria,
                           cfg.nfe, cfg.sample_seed());
  write_ablation_csv(rows, out);
  write_meta(cfg, out, {{"checkpoint_sha256", file_sha256(ckpt_path)}});
  std::printf("%-3s %-22s %10s %12s %10s\n", "id", "variant", "success", "mean_pen", "diversity");
  for (const auto& r : rows)
    std::printf("%-3s %-22s %10.4f %12.6f %10.4f\n", r.id.c_str(), r.name.c_str(),
                r.report.success_rate, r.report.mean_penetration, r.report.diversity);
  return kOk;
}

int cmd_sensitivity(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string ckpt_path = pick(o.checkpoint, cfg.paths.checkpoint);
  const std::string out = pick(o.out, "sensitivity.csv");
  const FlowCheckpoint ckpt = load_checkpoint(ckpt_path);
  Benchmark bench = config_benchmark(cfg);
  if (o.n_objects)
    bench = make_benchmark(*o.n_objects, cfg.eval.samples_per_object, cfg.dataset.cloud_size,
                           cfg.benchmark_seed());
  const auto rows = sensitivity(ckpt, bench, cfg.hand, cfg.guidance, cfg.energy,
                                cfg.eval.criteria, cfg.nfe, cfg.sample_seed());
  write_sensitivity_csv(rows, out);
  write_meta(cfg, out, {{"checkpoint_sha256", file_sha256(ckpt_path)}});
  std::printf("%-12s %8s %10s %12s %10s\n", "parameter", "value", "success", "mean_pen",
              "diversity");
  for (const auto& r : rows)
    std::printf("%-12s %8g %10.4f %12.6f %10.4f\n", r.parameter.c_str(), r.value,
                r.report.success_rate, r.report.mean_penetration, r.report.diversity);
  return kOk;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "flowgrasp-verify-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw RuntimeFailure("verify: cannot create a temporary directory");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

bool report_match(const char* what, const std::string& expected, const std::string& actual) {
  const bool ok = expected == actual;
  std::printf("%-10s %s  expected %s  regenerated %s\n", what, ok ? "MATCH" : "DIFF ",
              expected.c_str(), actual.c_str());
  return ok;
}

int cmd_verify(const Options& o) {
  const RunConfig cfg = load_config(o);
  const std::string ds_path = pick(o.dataset, cfg.paths.dataset);
  const std::string ckpt_path = pick(o.checkpoint, cfg.paths.checkpoint);
  const std::string samples_path = pick(o.samples, cfg.paths.samples);
  for (const auto& p : {ds_path, ckpt_path, samples_path})
    if (!fs::exists(p)) throw RuntimeFailure("verify: missing artifact '" + p + "'");

  const SampleFile original = read_samples(samples_path, cfg.hand);
  if (original.header.value("config_hash", "") != cfg.hash())
    std::cerr << "verify: sample file was produced under a different config\n";

  TempDir tmp;
  bool ok = true;

  const fs::path ds_new = tmp.path / "dataset.jsonl";
  const Dataset ds =
      build_dataset(cfg.dataset, cfg.oracle, cfg.hand, cfg.dataset_seed(), provenance(cfg));
  write_dataset(ds, ds_new.string());
  ok &= report_match("dataset", file_sha256(ds_path), file_sha256(ds_new.string()));

  const fs::path ckpt_new = tmp.path / "checkpoint.json";
  const TrainedFlow tf = train_flow(load_dataset(ds_new.string(), cfg.hand), cfg);
  save_checkpoint(tf.checkpoint, ckpt_new.string());
  ok &= report_match("checkpoint", checkpoint_probe(load_checkpoint(ckpt_path)),
                     checkpoint_probe(load_checkpoint(ckpt_new.string())));

  RunConfig scfg = cfg;
  scfg.nfe = original.header.at("nfe").get<int>();
  const int n_objects = original.header.at("benchmark").at("n_objects").get<int>();
  const bool guided = original.header.at("guided").get<bool>();
  const fs::path samples_new = tmp.path / "samples.jsonl";
  const SampleRun run = run_sampling(scfg, load_checkpoint(ckpt_new.string()),
                                     ckpt_new.string(), n_objects, guided, false);
  write_samples(run.file, cfg.hand, samples_new.string());
  ok &= report_match("samples", file_sha256(samples_path), file_sha256(samples_new.string()));

  std::printf("verify: %s\n", ok ? "all artifacts reproduced" : "MISMATCH");
  return ok ? kOk : kRuntimeFailure;
}

}  // namespace

// --- sample file I/O --------------------------------------------------------

json provenance(const RunConfig& cfg) {
  return {{"config", cfg.to_json()},
          {"config_hash", cfg.hash()},
          {"seed", cfg.seed},
          {"code_version", kCodeVersion}};
}

void write_samples(const SampleFile& f, const HandSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write samples '" + path + "'");
  out << f.header.dump() << '\n';
  for (const auto& r : f.records) {
    json cfg = nullptr;
    if (!r.failed) {
      const VecX flat = r.config.flatten();
      if (flat.size() != spec.dim()) throw ConfigError("samples: record does not match the hand");
      cfg = std::vector<double>(flat.data(), flat.data() + flat.size());
    }
    out << json{{"type", "sample"}, {"object", r.object},   {"config", cfg},
                {"seed", r.seed},   {"nfe", r.nfe},         {"guided", r.guided},
                {"failed", r.failed}}
               .dump()
        << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing samples '" + path + "'");
}

SampleFile read_samples(const std::string& path, const HandSpec& spec) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open samples '" + path + "'");
  SampleFile f;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      if (j.value("format", "") != "flowgrasp-samples")
        throw ConfigError(where + ": not a flowgrasp sample file");
      f.header = std::move(j);
    } else if (type == "sample") {
      SampleRecord r;
      r.object = j.at("object").get<int>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.nfe = j.at("nfe").get<int>();
      r.guided = j.at("guided").get<bool>();
      r.failed = j.at("failed").get<bool>();
      if (r.failed) {
        r.config = HandConfig::zero(spec);
      } else {
        const auto v = j.at("config").get<std::vector<double>>();
        r.config = HandConfig::unflatten(Eigen::Map<const VecX>(v.data(), v.size()), spec);
      }
      f.records.push_back(std::move(r));
    } else {
      throw ConfigError(where + ": unknown record type '" + type + "'");
    }
  }
  if (f.header.is_null()) throw ConfigError(path + ": missing header line");
  return f;
}

std::string checkpoint_probe(const FlowCheckpoint& ckpt) {
  Rng rng = make_rng(0x9e3779b97f4a7c15ULL, "verify/probe");
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < 32; ++i) {
    const VecX h = standard_normal(rng, ckpt.model.state_dim());
    const VecX c = standard_normal(rng, ckpt.model.cond_dim());
    const double t = uniform01(rng);
    const VecX v = ckpt.model.velocity(h, t, c);
    for (Eigen::Index k = 0; k < v.size(); ++k) os << v[k] << ',';
    os << ckpt.standardizer.inverse(h).sum() << '\n';
  }
  return sha256_hex(os.str());
}

// --- argument parsing -------------------------------------------------------

int run(int argc, const char* const* argv) {
  CLI::App app{"Energy-guided flow matching for toy dexterous grasps"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the global seed");
    sub->add_option("--out", o.out, "Output path");
  };
  const auto with_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
  };
  const auto with_objects = [&](CLI::App* sub) {
    sub->add_option("--n-objects", o.n_objects, "Number of objects")
        ->check(CLI::PositiveNumber);
  };
  const auto with_guidance_toggle = [&](CLI::App* sub) {
    auto* g = sub->add_flag("--guided", "Energy-guided sampling (default)");
    auto* v = sub->add_flag("--vanilla", o.vanilla, "Unguided flow matching");
    g->excludes(v);
  };

  auto* gen = app.add_subcommand("gen-data", "Synthesize the grasp dataset with the oracle");
  common(gen);
  with_objects(gen);
  gen->add_option("--max-seconds", o.max_seconds, "Wall-clock cap per object (0 disables)")
      ->check(CLI::NonNegativeNumber);

  auto* trn = app.add_subcommand("train", "Train the velocity field");
  common(trn);
  trn->add_option("--dataset", o.dataset, "Dataset JSONL");
  trn->add_option("--loss-csv", o.loss_csv, "Per-epoch loss CSV");

  auto* smp = app.add_subcommand("sample", "Sample grasps for the held-out objects");
  common(smp);
  with_checkpoint(smp);
  with_objects(smp);
  with_guidance_toggle(smp);
  smp->add_option("--nfe", o.nfe, "Euler steps")->check(CLI::PositiveNumber);
  smp->add_option("--trace", o.trace_dir, "Directory for per-sample trajectory CSVs");

  auto* evl = app.add_subcommand("eval", "Score a sample file");
  common(evl);
  evl->add_option("--samples", o.samples, "Sample JSONL");

  auto* nfe = app.add_subcommand("sweep-nfe", "Success and penetration versus step count");
  common(nfe);
  with_checkpoint(nfe);
  with_objects(nfe);
  with_guidance_toggle(nfe);

  auto* abl = app.add_subcommand("ablate", "Energy-term ablation (variants a-f)");
  common(abl);
  with_checkpoint(abl);
  with_objects(abl);
  abl->add_option("--nfe", o.nfe, "Euler steps")->check(CLI::PositiveNumber);

  auto* sen = app.add_subcommand("sensitivity", "One-at-a-time hyperparameter sweeps");
  common(sen);
  with_checkpoint(sen);
  with_objects(sen);
  sen->add_option("--nfe", o.nfe, "Euler steps")->check(CLI::PositiveNumber);

  auto* ver = app.add_subcommand("verify", "Regenerate artifacts and compare hashes");
  common(ver);
  with_checkpoint(ver);
  ver->add_option("--dataset", o.dataset, "Dataset JSONL");
  ver->add_option("--samples", o.samples, "Sample JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (trn->parsed()) return cmd_train(o);
    if (smp->parsed()) return cmd_sample(o);
    if (evl->parsed()) return cmd_eval(o);
    if (nfe->parsed()) return cmd_sweep_nfe(o);
    if (abl->parsed()) return cmd_ablate(o);
    if (sen->parsed()) return cmd_sensitivity(o);
    if (ver->parsed()) return cmd_verify(o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace flowgrasp::cli
