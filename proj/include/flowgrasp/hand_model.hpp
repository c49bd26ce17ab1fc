#pragma once

#include <utility>
#include <vector>

#include "flowgrasp/types.hpp"

namespace flowgrasp {

/// Geometry of the toy hand: a flat circular palm with F two-link fingers
/// mounted on its rim, each finger driven by a single curl parameter.
struct HandSpec {
  int num_fingers = 4;
  double palm_radius = 0.5;
  double link1 = 0.4;
  double link2 = 0.3;
  int samples_per_link = 3;
  double curl_coupling = 1.0;

  void validate() const;
  int dim() const { return 6 + num_fingers; }
  /// Palm center, one rim point per finger, and S samples on each of the 2F links.
  int point_count() const { return 1 + num_fingers + num_fingers * 2 * samples_per_link; }
};

/// Flattened layout: [translation (3) | axis_angle (3) | joints (F)].
struct HandConfig {
  Vec3 translation = Vec3::Zero();
  Vec3 axis_angle = Vec3::Zero();
  VecX joints;

  static HandConfig zero(const HandSpec& spec);
  VecX flatten() const;
  static HandConfig unflatten(const VecX& flat, const HandSpec& spec);
};

enum class KeypointRole { Base, Knuckle, Tip };

struct Keypoint {
  int finger;
  KeypointRole role;
};

/// Forward-kinematics output, in world coordinates.
///
/// surface_points ordering: palm center, F rim points, then for each finger
/// its S link-1 samples followed by its S link-2 samples. Keypoints are the
/// rim point, the link-1 endpoint and the link-2 endpoint of every finger.
struct HandPoints {
  std::vector<Vec3> surface_points;
  std::vector<Vec3> fingertips;
  Vec3 palm_center = Vec3::Zero();
  std::vector<Vec3> keypoints;
};

Mat3 rotation_from_axis_angle(const Vec3& a);

HandConfig clamp_joints(HandConfig h);

HandPoints forward_kinematics(const HandConfig& h, const HandSpec& spec);
HandPoints forward_kinematics(const VecX& flat, const HandSpec& spec);

/// Role of every entry of HandPoints::keypoints (3F entries, ordered base,
/// knuckle, tip per finger).
std::vector<Keypoint> keypoint_layout(const HandSpec& spec);

/// Keypoint index pairs scored for self-penetration: all unordered pairs
/// except the two that share a link (base-knuckle, knuckle-tip of one finger).
const std::vector<std::pair<int, int>>& self_collision_pairs(const HandSpec& spec);

inline constexpr double kJointMin = 0.0;
inline constexpr double kJointMax = 1.5707963267948966;

}  // namespace flowgrasp
