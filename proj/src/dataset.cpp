#include "flowgrasp/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

namespace flowgrasp {

using nlohmann::json;

void OracleConfig::validate() const {
  if (restarts < 1 || descent_steps < 1) throw ConfigError("oracle: counts must be >= 1");
  if (!(step_size > 0.0 && fd_step > 0.0 && accept_pen > 0.0 && contact_eps > 0.0 &&
        init_radius > 0.0 && joint_gain > 0.0))
    throw ConfigError("oracle: step sizes, tolerances, radius and gain must be > 0");
  if (!(facing_cos >= -1.0 && facing_cos < 1.0 && approach_cos >= -1.0 && approach_cos < 1.0))
    throw ConfigError("oracle: facing_cos and approach_cos must lie in [-1, 1)");
  if (!(max_roll >= 0.0 && max_roll <= std::numbers::pi))
    throw ConfigError("oracle: max_roll must lie in [0, pi]");
  if (accept_contacts < 1) throw ConfigError("oracle: accept_contacts must be >= 1");
  weights.validate();
}

void DatasetConfig::validate() const {
  if (n_objects < 1 || grasps_per_object < 1)
    throw ConfigError("dataset: n_objects and grasps_per_object must be >= 1");
  if (cloud_size < kMinCloudSize) throw ConfigError("dataset: cloud_size too small");
  if (max_seconds_per_object < 0.0) throw ConfigError("dataset: max_seconds_per_object < 0");
}

int count_contacts(const HandPoints& hp, const ScenePrimitive& prim, double eps) {
  int n = 0;
  for (const Vec3& tip : hp.fingertips) n += std::abs(sdf(prim, tip)) <= eps ? 1 : 0;
  return n;
}

Vec3 random_axis_angle(Rng& rng) {
  VecX q = standard_normal(rng, 4);
  while (q.norm() < 1e-12) q = standard_normal(rng, 4);
  q.normalize();
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  if (quat.w() < 0.0) quat.coeffs() = -quat.coeffs();
  const Eigen::AngleAxisd aa(quat);
  return aa.angle() * aa.axis();
}

Vec3 random_cap_direction(Rng& rng, const Vec3& axis, double min_cos) {
  const Vec3 a = axis.normalized();
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = a.cross(helper).normalized();
  const Vec3 e2 = a.cross(e1);
  // Archimedes: the axial coordinate of a uniform point on a cap is uniform.
  const double c = uniform(rng, min_cos, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  return c * a + s * (std::cos(phi) * e1 + std::sin(phi) * e2);
}

Vec3 random_palm_orientation(Rng& rng, const Vec3& toward, double min_cos, double max_roll) {
  const Vec3 normal = random_cap_direction(rng, toward, min_cos);
  const double roll = uniform(rng, -max_roll, max_roll);
  const Eigen::Quaterniond tilt = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal);
  const Eigen::AngleAxisd aa(tilt * Eigen::AngleAxisd(roll, Vec3::UnitZ()));
  return aa.angle() * aa.axis();
}

std::vector<ScenePrimitive> generate_objects(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_objects: n must be >= 1");
  Rng rng(seed);
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::vector<ScenePrimitive> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    switch (kind_dist(rng)) {
      case 0:
        out.push_back(ScenePrimitive::sphere(Vec3::Zero(), uniform(rng, 0.3, 0.8)));
        break;
      case 1: {
        Vec3 e;
        for (int k = 0; k < 3; ++k) e[k] = uniform(rng, 0.2, 0.6);
        out.push_back(ScenePrimitive::box(Vec3::Zero(), e));
        break;
      }
      default: {
        const double r = uniform(rng, 0.15, 0.4);
        const double half = uniform(rng, 0.3, 0.7);
        out.push_back(ScenePrimitive::capsule(Vec3(0, 0, -half), Vec3(0, 0, half), r));
        break;
      }
    }
  }
  return out;
}

namespace {

struct Evaluated {
  double energy;
  double penetration;
  int contacts;
};

Evaluated evaluate_candidate(const VecX& x, const Scene& scene, const HandSpec& spec,
                             const OracleConfig& cfg) {
  const HandConfig h = clamp_joints(HandConfig::unflatten(x, spec));
  const HandPoints hp = forward_kinematics(h, spec);
  return {total_energy(h, spec, scene, cfg.weights), erf(hp, scene.primitive),
          count_contacts(hp, scene.primitive, cfg.contact_eps)};
}

constexpr double kStepGrowth = 1.5;
constexpr double kMaxStepScale = 64.0;

VecX project(VecX x, const HandSpec& spec) {
  for (int i = 0; i < spec.num_fingers; ++i) x[6 + i] = std::clamp(x[6 + i], kJointMin, kJointMax);
  return x;
}

}  // namespace

VecX descend_energy(const Scene& scene, const HandSpec& spec, const OracleConfig& cfg, VecX x,
                    DescentTrace* trace) {
  const int d = spec.dim();
  const auto energy_of = [&](const VecX& y) {
    return total_energy(HandConfig::unflatten(y, spec), spec, scene, cfg.weights);
  };
  x = project(std::move(x), spec);
  double e = energy_of(x);
  if (trace) trace->energies.push_back(e);
  VecX grad(d);
  double alpha = cfg.step_size;
  for (int step = 0; step < cfg.descent_steps; ++step) {
    for (int k = 0; k < d; ++k) {
      VecX xp = x, xm = x;
      xp[k] += cfg.fd_step;
      xm[k] -= cfg.fd_step;
      grad[k] = (energy_of(xp) - energy_of(xm)) / (2.0 * cfg.fd_step);
    }
    if (!grad.allFinite() || grad.squaredNorm() == 0.0) break;
    grad.tail(d - 6) *= cfg.joint_gain;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
      const VecX trial = project(x - alpha * grad, spec);
      const double et = energy_of(trial);
      if (std::isfinite(et) && et < e) {
        x = trial;
        e = et;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    alpha = std::min(alpha * kStepGrowth, kMaxStepScale * cfg.step_size);
    if (trace) trace->energies.push_back(e);
  }
  return x;
}

std::optional<GraspRecord> synthesize_grasp(const Scene& scene, const HandSpec& spec,
                                            const OracleConfig& cfg, Rng& rng,
                                            std::vector<DescentTrace>* traces,
                                            SynthesisStats* stats, double max_seconds) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  std::optional<GraspRecord> best;
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    if (max_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() >
            max_seconds)
      break;
    HandConfig init = HandConfig::zero(spec);
    const Vec3 dir = random_cap_direction(rng, -Vec3::UnitZ(), cfg.approach_cos);
    init.translation = scene.primitive.centroid() + cfg.init_radius * dir;
    init.axis_angle = random_palm_orientation(rng, -dir, cfg.facing_cos, cfg.max_roll);

    if (!std::isfinite(total_energy(init, spec, scene, cfg.weights))) continue;
    if (stats) ++stats->restarts_run;
    DescentTrace trace;
    const VecX x = descend_energy(scene, spec, cfg, init.flatten(), &trace);
    if (traces) traces->push_back(std::move(trace));

    const Evaluated ev = evaluate_candidate(x, scene, spec, cfg);
    if (ev.penetration <= cfg.accept_pen && ev.contacts >= cfg.accept_contacts) {
      if (stats) ++stats->restarts_accepted;
      if (!best || ev.energy < best->energy) {
        GraspRecord rec;
        rec.object = scene.primitive;
        rec.cloud_seed = scene.cloud.seed();
        rec.cloud_size = static_cast<int>(scene.cloud.points().size());
        rec.config = clamp_joints(HandConfig::unflatten(x, spec));
        rec.energy = ev.energy;
        rec.penetration = ev.penetration;
        rec.contacts = ev.contacts;
        best = std::move(rec);
      }
    }
  }
  return best;
}

json primitive_to_json(const ScenePrimitive& prim, std::uint64_t seed, int cloud_size) {
  const auto v3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json params;
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      params = {{"center", v3(prim.center)}, {"radius", prim.radius}};
      break;
    case PrimitiveKind::Box:
      params = {{"center", v3(prim.center)}, {"half_extents", v3(prim.half_extents)}};
      break;
    case PrimitiveKind::Capsule:
      params = {{"a", v3(prim.a)}, {"b", v3(prim.b)}, {"radius", prim.radius}};
      break;
  }
  return {{"kind", to_string(prim.kind)}, {"params", params}, {"seed", seed},
          {"cloud_size", cloud_size}};
}

ScenePrimitive primitive_from_json(const json& j) {
  const auto v3 = [](const json& a) {
    if (!a.is_array() || a.size() != 3) throw ConfigError("primitive: expected a 3-vector");
    return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  const PrimitiveKind kind = primitive_kind_from_string(j.at("kind").get<std::string>());
  const json& p = j.at("params");
  switch (kind) {
    case PrimitiveKind::Sphere:
      return ScenePrimitive::sphere(v3(p.at("center")), p.at("radius").get<double>());
    case PrimitiveKind::Box:
      return ScenePrimitive::box(v3(p.at("center")), v3(p.at("half_extents")));
    case PrimitiveKind::Capsule:
      return ScenePrimitive::capsule(v3(p.at("a")), v3(p.at("b")), p.at("radius").get<double>());
  }
  throw ConfigError("primitive: unknown kind");
}

Scene record_scene(const GraspRecord& r) {
  return make_scene(r.object_index, r.object, r.cloud_size, r.cloud_seed);
}

Dataset build_dataset(const DatasetConfig& dcfg, const OracleConfig& ocfg, const HandSpec& spec,
                      std::uint64_t seed, const json& config_snapshot) {
  dcfg.validate();
  ocfg.validate();
  spec.validate();
  Dataset ds;
  const auto objects = generate_objects(dcfg.n_objects, derive_seed(seed, "dataset/objects"));
  for (int i = 0; i < dcfg.n_objects; ++i) {
    const Scene scene =
        make_scene(i, objects[i], dcfg.cloud_size, derive_seed(seed, "dataset/cloud", i));
    const auto started = std::chrono::steady_clock::now();
    int accepted_here = 0;
    for (int g = 0; g < dcfg.grasps_per_object; ++g) {
      double budget = 0.0;
      if (dcfg.max_seconds_per_object > 0.0) {
        budget = dcfg.max_seconds_per_object -
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (budget <= 0.0) break;
      }
      Rng rng = make_rng(seed, "dataset/grasp",
                         static_cast<std::uint64_t>(i) * dcfg.grasps_per_object + g);
      ++ds.stats.attempted;
      auto rec = synthesize_grasp(scene, spec, ocfg, rng, nullptr, nullptr, budget);
      if (rec) {
        rec->object_index = i;
        ds.records.push_back(std::move(*rec));
        ++ds.stats.accepted;
        ++accepted_here;
      }
    }
    ++ds.stats.objects;
    if (accepted_here == 0) ++ds.stats.objects_skipped;
  }
  if (ds.stats.objects_skipped > 0)
    std::cerr << "dataset: oracle found no grasp for " << ds.stats.objects_skipped << " of "
              << ds.stats.objects << " objects\n";
  ds.header = {{"type", "header"},
               {"format", "flowgrasp-dataset"},
               {"version", 1},
               {"code_version", kCodeVersion},
               {"seed", seed},
               {"config", config_snapshot},
               {"stats",
                {{"objects", ds.stats.objects},
                 {"objects_skipped", ds.stats.objects_skipped},
                 {"attempted", ds.stats.attempted},
                 {"accepted", ds.stats.accepted}}}};
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write dataset '" + path + "'");
  out << ds.header.dump() << '\n';
  for (const auto& r : ds.records) {
    const VecX flat = r.config.flatten();
    json rec{{"type", "grasp"},
             {"object_index", r.object_index},
             {"object", primitive_to_json(r.object, r.cloud_seed, r.cloud_size)},
             {"config", std::vector<double>(flat.data(), flat.data() + flat.size())},
             {"energy", r.energy},
             {"penetration", r.penetration},
             {"contacts", r.contacts}};
    out << rec.dump() << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing dataset '" + path + "'");
}

Dataset load_dataset(const std::string& path, const HandSpec& spec) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open dataset '" + path + "'");
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      if (j.value("format", "") != "flowgrasp-dataset")
        throw ConfigError(path + ": not a flowgrasp dataset");
      ds.header = j;
      const auto& s = j.at("stats");
      ds.stats = {s.at("objects"), s.at("objects_skipped"), s.at("attempted"), s.at("accepted")};
    } else if (type == "grasp") {
      GraspRecord r;
      r.object_index = j.at("object_index");
      r.object = primitive_from_json(j.at("object"));
      r.cloud_seed = j.at("object").at("seed").get<std::uint64_t>();
      r.cloud_size = j.at("object").at("cloud_size");
      const auto flat = j.at("config").get<std::vector<double>>();
      r.config = HandConfig::unflatten(
          Eigen::Map<const VecX>(flat.data(), static_cast<Eigen::Index>(flat.size())), spec);
      r.energy = j.at("energy");
      r.penetration = j.at("penetration");
      r.contacts = j.at("contacts");
      ds.records.push_back(std::move(r));
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown record type");
    }
  }
  if (ds.header.is_null()) throw ConfigError(path + ": missing header record");
  return ds;
}

}  // namespace flowgrasp
