#include "flowgrasp/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace flowgrasp {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects anything it was not
// asked about.
class BlockReader {
 public:
  BlockReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError("config: '" + context_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + context_ + "." + key + "': " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + context_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

json weights_json(const EnergyWeights& w) {
  return {{"w_erf", w.w_erf},         {"w_spf", w.w_spf}, {"w_srf", w.w_srf},
          {"tau_self", w.tau_self},   {"top_k", w.top_k}, {"hard_threshold", w.hard_threshold}};
}

void read_weights(const json& j, const std::string& ctx, EnergyWeights& w) {
  BlockReader r(j, ctx);
  r.read("w_erf", w.w_erf);
  r.read("w_spf", w.w_spf);
  r.read("w_srf", w.w_srf);
  r.read("tau_self", w.tau_self);
  r.read("top_k", w.top_k);
  r.read("hard_threshold", w.hard_threshold);
  r.finish();
}

}  // namespace

void RunConfig::validate() const {
  hand.validate();
  energy.validate();
  train.validate();
  guidance.validate();
  oracle.validate();
  dataset.validate();
  eval.criteria.validate();
  if (nfe < 1 || sample_batch_size < 1) throw ConfigError("config: sampler counts must be >= 1");
  if (eval.n_objects < 1 || eval.samples_per_object < 1)
    throw ConfigError("config: eval counts must be >= 1");
  if (energy.top_k > 3 * hand.num_fingers)
    throw ConfigError("config: energy.top_k exceeds the number of hand keypoints");
  for (int n : eval.nfe_list)
    if (n < 1) throw ConfigError("config: eval.nfe_list entries must be >= 1");
}

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"hand",
       {{"num_fingers", hand.num_fingers},
        {"palm_radius", hand.palm_radius},
        {"link_lengths", {hand.link1, hand.link2}},
        {"samples_per_link", hand.samples_per_link},
        {"curl_coupling", hand.curl_coupling}}},
      {"energy", weights_json(energy)},
      {"model", {{"hidden", model.hidden}, {"activation", to_string(model.activation)}}},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"beta1", train.beta1},
        {"beta2", train.beta2},
        {"eps", train.eps},
        {"sigma_min", train.sigma_min}}},
      {"guidance",
       {{"scale", guidance.scale},
        {"temperature", guidance.temperature},
        {"sigma_local", guidance.sigma_local},
        {"num_candidates", guidance.num_candidates},
        {"t_max", guidance.t_max},
        {"one_minus_t_floor", guidance.one_minus_t_floor}}},
      {"sampler", {{"nfe", nfe}, {"batch_size", sample_batch_size}}},
      {"oracle",
       {{"restarts", oracle.restarts},
        {"descent_steps", oracle.descent_steps},
        {"step_size", oracle.step_size},
        {"fd_step", oracle.fd_step},
        {"accept_pen", oracle.accept_pen},
        {"accept_contacts", oracle.accept_contacts},
        {"contact_eps", oracle.contact_eps},
        {"init_radius", oracle.init_radius},
        {"approach_cos", oracle.approach_cos},
        {"facing_cos", oracle.facing_cos},
        {"max_roll", oracle.max_roll},
        {"joint_gain", oracle.joint_gain},
        {"weights", weights_json(oracle.weights)}}},
      {"dataset",
       {{"n_objects", dataset.n_objects},
        {"grasps_per_object", dataset.grasps_per_object},
        {"cloud_size", dataset.cloud_size},
        {"max_seconds_per_object", dataset.max_seconds_per_object}}},
      {"eval",
       {{"n_objects", eval.n_objects},
        {"samples_per_object", eval.samples_per_object},
        {"nfe_list", eval.nfe_list},
        {"p_max", eval.criteria.p_max},
        {"min_contacts", eval.criteria.min_contacts},
        {"contact_eps", eval.criteria.contact_eps},
        {"spread_max", eval.criteria.spread_max}}},
      {"paths",
       {{"dataset", paths.dataset}, {"checkpoint", paths.checkpoint}, {"samples", paths.samples}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  BlockReader top(j, "config");
  top.read("seed", c.seed);
  if (const json* h = top.child("hand")) {
    BlockReader r(*h, "hand");
    r.read("num_fingers", c.hand.num_fingers);
    r.read("palm_radius", c.hand.palm_radius);
    std::vector<double> links{c.hand.link1, c.hand.link2};
    r.read("link_lengths", links);
    if (links.size() != 2) throw ConfigError("config: hand.link_lengths must have 2 entries");
    c.hand.link1 = links[0];
    c.hand.link2 = links[1];
    r.read("samples_per_link", c.hand.samples_per_link);
    r.read("curl_coupling", c.hand.curl_coupling);
    r.finish();
  }
  if (const json* e = top.child("energy")) read_weights(*e, "energy", c.energy);
  if (const json* m = top.child("model")) {
    BlockReader r(*m, "model");
    r.read("hidden", c.model.hidden);
    std::string act = to_string(c.model.activation);
    r.read("activation", act);
    c.model.activation = activation_from_string(act);
    r.finish();
  }
  if (const json* t = top.child("train")) {
    BlockReader r(*t, "train");
    r.read("learning_rate", c.train.learning_rate);
    r.read("batch_size", c.train.batch_size);
    r.read("epochs", c.train.epochs);
    r.read("beta1", c.train.beta1);
    r.read("beta2", c.train.beta2);
    r.read("eps", c.train.eps);
    r.read("sigma_min", c.train.sigma_min);
    r.finish();
  }
  if (const json* g = top.child("guidance")) {
    BlockReader r(*g, "guidance");
    r.read("scale", c.guidance.scale);
    r.read("temperature", c.guidance.temperature);
    r.read("sigma_local", c.guidance.sigma_local);
    r.read("num_candidates", c.guidance.num_candidates);
    r.read("t_max", c.guidance.t_max);
    r.read("one_minus_t_floor", c.guidance.one_minus_t_floor);
    r.finish();
  }
  if (const json* s = top.child("sampler")) {
    BlockReader r(*s, "sampler");
    r.read("nfe", c.nfe);
    r.read("batch_size", c.sample_batch_size);
    r.finish();
  }
  if (const json* o = top.child("oracle")) {
    BlockReader r(*o, "oracle");
    r.read("restarts", c.oracle.restarts);
    r.read("descent_steps", c.oracle.descent_steps);
    r.read("step_size", c.oracle.step_size);
    r.read("fd_step", c.oracle.fd_step);
    r.read("accept_pen", c.oracle.accept_pen);
    r.read("accept_contacts", c.oracle.accept_contacts);
    r.read("contact_eps", c.oracle.contact_eps);
    r.read("init_radius", c.oracle.init_radius);
    r.read("approach_cos", c.oracle.approach_cos);
    r.read("facing_cos", c.oracle.facing_cos);
    r.read("max_roll", c.oracle.max_roll);
    r.read("joint_gain", c.oracle.joint_gain);
    if (const json* w = r.child("weights")) read_weights(*w, "oracle.weights", c.oracle.weights);
    r.finish();
  }
  if (const json* d = top.child("dataset")) {
    BlockReader r(*d, "dataset");
    r.read("n_objects", c.dataset.n_objects);
    r.read("grasps_per_object", c.dataset.grasps_per_object);
    r.read("cloud_size", c.dataset.cloud_size);
    r.read("max_seconds_per_object", c.dataset.max_seconds_per_object);
    r.finish();
  }
  if (const json* e = top.child("eval")) {
    BlockReader r(*e, "eval");
    r.read("n_objects", c.eval.n_objects);
    r.read("samples_per_object", c.eval.samples_per_object);
    r.read("nfe_list", c.eval.nfe_list);
    r.read("p_max", c.eval.criteria.p_max);
    r.read("min_contacts", c.eval.criteria.min_contacts);
    r.read("contact_eps", c.eval.criteria.contact_eps);
    r.read("spread_max", c.eval.criteria.spread_max);
    r.finish();
  }
  if (const json* p = top.child("paths")) {
    BlockReader r(*p, "paths");
    r.read("dataset", c.paths.dataset);
    r.read("checkpoint", c.paths.checkpoint);
    r.read("samples", c.paths.samples);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw RuntimeFailure("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace flowgrasp
