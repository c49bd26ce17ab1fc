#include "flowgrasp/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace flowgrasp {

void HandSpec::validate() const {
  if (num_fingers < 2) throw ConfigError("hand: num_fingers must be >= 2");
  if (!(palm_radius > 0.0) || !(link1 > 0.0) || !(link2 > 0.0))
    throw ConfigError("hand: lengths must be > 0");
  if (samples_per_link < 1) throw ConfigError("hand: samples_per_link must be >= 1");
  if (!std::isfinite(curl_coupling)) throw ConfigError("hand: curl_coupling must be finite");
}

HandConfig HandConfig::zero(const HandSpec& spec) {
  HandConfig h;
  h.joints = VecX::Zero(spec.num_fingers);
  return h;
}

VecX HandConfig::flatten() const {
  VecX out(6 + joints.size());
  out.segment<3>(0) = translation;
  out.segment<3>(3) = axis_angle;
  out.tail(joints.size()) = joints;
  return out;
}

HandConfig HandConfig::unflatten(const VecX& flat, const HandSpec& spec) {
  if (flat.size() != spec.dim())
    throw ConfigError("hand config has dimension " + std::to_string(flat.size()) + ", expected " +
                      std::to_string(spec.dim()));
  HandConfig h;
  h.translation = flat.segment<3>(0);
  h.axis_angle = flat.segment<3>(3);
  h.joints = flat.tail(spec.num_fingers);
  return h;
}

Mat3 rotation_from_axis_angle(const Vec3& a) {
  const double theta2 = a.squaredNorm();
  Mat3 k;
  k << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
  double sinc, cosc;
  if (theta2 < 1e-12) {
    // Taylor expansion keeps the chart smooth at the identity.
    sinc = 1.0 - theta2 / 6.0;
    cosc = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    sinc = std::sin(theta) / theta;
    cosc = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + sinc * k + cosc * (k * k);
}

HandConfig clamp_joints(HandConfig h) {
  for (Eigen::Index i = 0; i < h.joints.size(); ++i)
    h.joints[i] = std::clamp(h.joints[i], kJointMin, kJointMax);
  return h;
}

HandPoints forward_kinematics(const HandConfig& h, const HandSpec& spec) {
  if (h.joints.size() != spec.num_fingers)
    throw ConfigError("forward_kinematics: expected " + std::to_string(spec.num_fingers) +
                      " joints, got " + std::to_string(h.joints.size()));
  const int f_count = spec.num_fingers;
  const int s_count = spec.samples_per_link;
  const Mat3 rot = rotation_from_axis_angle(h.axis_angle);
  const auto to_world = [&](const Vec3& p) -> Vec3 { return rot * p + h.translation; };

  HandPoints out;
  out.surface_points.reserve(spec.point_count());
  out.fingertips.reserve(f_count);
  out.keypoints.reserve(3 * f_count);

  out.palm_center = h.translation;
  out.surface_points.push_back(out.palm_center);

  std::vector<Vec3> radial(f_count);
  for (int i = 0; i < f_count; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / f_count;
    radial[i] = Vec3(std::cos(phi), std::sin(phi), 0.0);
    out.surface_points.push_back(to_world(spec.palm_radius * radial[i]));
  }

  const Vec3 up = Vec3::UnitZ();
  for (int i = 0; i < f_count; ++i) {
    const double curl = std::clamp(h.joints[i], kJointMin, kJointMax);
    const double curl2 = (1.0 + spec.curl_coupling) * curl;
    // Curling tips the link from +z towards the palm axis.
    const Vec3 dir1 = std::cos(curl) * up - std::sin(curl) * radial[i];
    const Vec3 dir2 = std::cos(curl2) * up - std::sin(curl2) * radial[i];
    const Vec3 base = spec.palm_radius * radial[i];
    const Vec3 knuckle = base + spec.link1 * dir1;
    for (int s = 1; s <= s_count; ++s)
      out.surface_points.push_back(to_world(base + (spec.link1 * s / s_count) * dir1));
    for (int s = 1; s <= s_count; ++s)
      out.surface_points.push_back(to_world(knuckle + (spec.link2 * s / s_count) * dir2));
    const Vec3 tip = out.surface_points.back();
    out.fingertips.push_back(tip);
    out.keypoints.push_back(to_world(base));
    out.keypoints.push_back(to_world(knuckle));
    out.keypoints.push_back(tip);
  }
  return out;
}

HandPoints forward_kinematics(const VecX& flat, const HandSpec& spec) {
  return forward_kinematics(HandConfig::unflatten(flat, spec), spec);
}

std::vector<Keypoint> keypoint_layout(const HandSpec& spec) {
  std::vector<Keypoint> out;
  for (int i = 0; i < spec.num_fingers; ++i) {
    out.push_back({i, KeypointRole::Base});
    out.push_back({i, KeypointRole::Knuckle});
    out.push_back({i, KeypointRole::Tip});
  }
  return out;
}

namespace {

std::vector<std::pair<int, int>> build_pairs(int num_fingers) {
  HandSpec spec;
  spec.num_fingers = num_fingers;
  const auto layout = keypoint_layout(spec);
  const auto shares_link = [](const Keypoint& a, const Keypoint& b) {
    if (a.finger != b.finger) return false;
    const auto lo = std::min(a.role, b.role);
    const auto hi = std::max(a.role, b.role);
    return (lo == KeypointRole::Base && hi == KeypointRole::Knuckle) ||
           (lo == KeypointRole::Knuckle && hi == KeypointRole::Tip);
  };
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(layout.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!shares_link(layout[i], layout[j])) pairs.emplace_back(i, j);
  return pairs;
}

}  // namespace

const std::vector<std::pair<int, int>>& self_collision_pairs(const HandSpec& spec) {
  static std::mutex mu;
  static std::map<int, std::vector<std::pair<int, int>>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(spec.num_fingers);
  if (it == cache.end()) it = cache.emplace(spec.num_fingers, build_pairs(spec.num_fingers)).first;
  return it->second;
}

}  // namespace flowgrasp
