#include "flowgrasp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "flowgrasp/rng.hpp"

namespace flowgrasp {

std::string to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Capsule: return "capsule";
  }
  return "unknown";
}

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::Sphere;
  if (name == "box") return PrimitiveKind::Box;
  if (name == "capsule") return PrimitiveKind::Capsule;
  throw ConfigError("unknown primitive kind '" + name + "'");
}

ScenePrimitive ScenePrimitive::sphere(const Vec3& c, double r) {
  ScenePrimitive p;
  p.kind = PrimitiveKind::Sphere;
  p.center = c;
  p.radius = r;
  p.validate();
  return p;
}

ScenePrimitive ScenePrimitive::box(const Vec3& c, const Vec3& half_extents) {
  ScenePrimitive p;
  p.kind = PrimitiveKind::Box;
  p.center = c;
  p.half_extents = half_extents;
  p.validate();
  return p;
}

ScenePrimitive ScenePrimitive::capsule(const Vec3& a, const Vec3& b, double r) {
  ScenePrimitive p;
  p.kind = PrimitiveKind::Capsule;
  p.a = a;
  p.b = b;
  p.radius = r;
  p.center = 0.5 * (a + b);
  p.validate();
  return p;
}

void ScenePrimitive::validate() const {
  switch (kind) {
    case PrimitiveKind::Sphere:
      if (!(radius > 0.0)) throw ConfigError("sphere radius must be > 0");
      break;
    case PrimitiveKind::Box:
      if (!(half_extents.array() > 0.0).all()) throw ConfigError("box half extents must be > 0");
      break;
    case PrimitiveKind::Capsule:
      if (!(radius > 0.0)) throw ConfigError("capsule radius must be > 0");
      if ((b - a).norm() == 0.0) throw ConfigError("capsule endpoints must differ");
      break;
  }
}

Vec3 ScenePrimitive::centroid() const {
  return kind == PrimitiveKind::Capsule ? Vec3(0.5 * (a + b)) : center;
}

namespace {

Vec3 closest_on_segment(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double s = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return a + s * ab;
}

}  // namespace

bool ScenePrimitive::contains(const Vec3& p) const {
  switch (kind) {
    case PrimitiveKind::Sphere:
      return (p - center).squaredNorm() < radius * radius;
    case PrimitiveKind::Box:
      return ((p - center).cwiseAbs().array() < half_extents.array()).all();
    case PrimitiveKind::Capsule: {
      // Inside the cylinder slab or one of the two end balls.
      const Vec3 ab = b - a;
      const double s = (p - a).dot(ab) / ab.squaredNorm();
      if (s >= 0.0 && s <= 1.0) {
        const Vec3 radial = (p - a) - s * ab;
        if (radial.squaredNorm() < radius * radius) return true;
      }
      return (p - a).squaredNorm() < radius * radius || (p - b).squaredNorm() < radius * radius;
    }
  }
  return false;
}

bool ScenePrimitive::operator==(const ScenePrimitive& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case PrimitiveKind::Sphere: return center == o.center && radius == o.radius;
    case PrimitiveKind::Box: return center == o.center && half_extents == o.half_extents;
    case PrimitiveKind::Capsule: return a == o.a && b == o.b && radius == o.radius;
  }
  return false;
}

double sdf(const ScenePrimitive& prim, const Vec3& p) {
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      return (p - prim.center).norm() - prim.radius;
    case PrimitiveKind::Box: {
      const Vec3 q = (p - prim.center).cwiseAbs() - prim.half_extents;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case PrimitiveKind::Capsule:
      return (p - closest_on_segment(prim.a, prim.b, p)).norm() - prim.radius;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// KdTree

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points), ids_(points.size()) {
  std::iota(ids_.begin(), ids_.end(), 0);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()));
}

namespace {

constexpr int kLeafSize = 8;

template <typename NodeT>
double box_distance2(const NodeT& n, const Vec3& q) {
  const Vec3 gap = (n.box_min - q).cwiseMax(q - n.box_max).cwiseMax(0.0);
  return gap.squaredNorm();
}

}  // namespace

int KdTree::build(int lo, int hi) {
  Vec3 lo_b = points_[lo], hi_b = points_[lo];
  for (int i = lo + 1; i < hi; ++i) {
    lo_b = lo_b.cwiseMin(points_[i]);
    hi_b = hi_b.cwiseMax(points_[i]);
  }
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({-1, 0.0, -1, -1, lo, hi, lo_b, hi_b});
  if (hi - lo <= kLeafSize) return node;
  // Split along the widest extent of this cell.
  int axis = 0;
  (hi_b - lo_b).maxCoeff(&axis);
  const int mid = lo + (hi - lo) / 2;
  std::vector<int> order(hi - lo);
  std::iota(order.begin(), order.end(), lo);
  std::nth_element(order.begin(), order.begin() + (mid - lo), order.end(), [&](int l, int r) {
    const double a = points_[l][axis], b = points_[r][axis];
    return a < b || (a == b && ids_[l] < ids_[r]);
  });
  std::vector<Vec3> pts(hi - lo);
  std::vector<int> ids(hi - lo);
  for (int i = 0; i < hi - lo; ++i) {
    pts[i] = points_[order[i]];
    ids[i] = ids_[order[i]];
  }
  std::copy(pts.begin(), pts.end(), points_.begin() + lo);
  std::copy(ids.begin(), ids.end(), ids_.begin() + lo);
  const double split = points_[mid][axis];
  const int left = build(lo, mid);
  const int right = build(mid, hi);
  nodes_[node].axis = axis;
  nodes_[node].split = split;
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(int node, const Vec3& q, int& best, double& best_d2) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const double d2 = (points_[i] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && ids_[i] < ids_[best])) {
        best_d2 = d2;
        best = i;
      }
    }
    return;
  }
  const bool left_first = q[n.axis] < n.split;
  const int near = left_first ? n.left : n.right;
  const int far = left_first ? n.right : n.left;
  // Children are pruned by the distance to their bounding boxes; "<=" keeps
  // equal-distance candidates that may carry a lower index.
  if (box_distance2(nodes_[near], q) <= best_d2) search(near, q, best, best_d2);
  if (box_distance2(nodes_[far], q) <= best_d2) search(far, q, best, best_d2);
}

NearestHit KdTree::nearest(const Vec3& q) const {
  NearestHit hit;
  if (nodes_.empty()) return hit;
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, q, best, best_d2);
  if (best < 0) {
    hit.distance = std::numeric_limits<double>::quiet_NaN();
    return hit;
  }
  hit.index = ids_[best];
  hit.point = points_[best];
  hit.distance = std::sqrt(best_d2);
  return hit;
}

// ---------------------------------------------------------------------------
// ObjectCloud

ObjectCloud::ObjectCloud(std::vector<Vec3> points, std::uint64_t seed, const Vec3& centroid)
    : points_(std::move(points)), seed_(seed), centroid_(centroid), index_(points_) {
  if (points_.empty()) throw ConfigError("object cloud must be nonempty");
}

NearestHit ObjectCloud::nearest_linear(const Vec3& q) const {
  NearestHit hit;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d2 = (points_[i] - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      hit.index = static_cast<int>(i);
    }
  }
  if (hit.index < 0) {
    hit.distance = std::numeric_limits<double>::quiet_NaN();
    return hit;
  }
  hit.point = points_[hit.index];
  hit.distance = std::sqrt(best_d2);
  return hit;
}

NearestHit nearest_surface_point(const ObjectCloud& cloud, const Vec3& p) {
  return cloud.nearest(p);
}

namespace {

Vec3 random_direction(Rng& rng) {
  Vec3 d;
  do {
    d = standard_normal(rng, 3);
  } while (d.squaredNorm() < 1e-20);
  return d.normalized();
}

// Orthonormal pair spanning the plane perpendicular to unit vector n.
std::pair<Vec3, Vec3> perpendicular_basis(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = n.cross(helper).normalized();
  return {u, n.cross(u)};
}

}  // namespace

ObjectCloud sample_surface(const ScenePrimitive& prim, int n, std::uint64_t seed) {
  if (n < kMinCloudSize)
    throw ConfigError("sample_surface: need at least " + std::to_string(kMinCloudSize) +
                      " points, got " + std::to_string(n));
  prim.validate();
  Rng rng(seed);
  std::vector<Vec3> pts;
  pts.reserve(n);
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      for (int i = 0; i < n; ++i) pts.push_back(prim.center + prim.radius * random_direction(rng));
      break;
    case PrimitiveKind::Box: {
      const Vec3& e = prim.half_extents;
      // Faces +x,-x,+y,-y,+z,-z with areas 4*e_j*e_k.
      const std::array<double, 6> areas{e.y() * e.z(), e.y() * e.z(), e.x() * e.z(),
                                        e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
      std::discrete_distribution<int> face_dist(areas.begin(), areas.end());
      for (int i = 0; i < n; ++i) {
        const int face = face_dist(rng);
        const int axis = face / 2;
        const double sign = face % 2 == 0 ? 1.0 : -1.0;
        Vec3 local;
        for (int k = 0; k < 3; ++k) local[k] = uniform(rng, -e[k], e[k]);
        local[axis] = sign * e[axis];
        pts.push_back(prim.center + local);
      }
      break;
    }
    case PrimitiveKind::Capsule: {
      const Vec3 axis = prim.b - prim.a;
      const double len = axis.norm();
      const Vec3 dir = axis / len;
      const auto [u, v] = perpendicular_basis(dir);
      const double side_area = 2.0 * std::numbers::pi * prim.radius * len;
      const double cap_area = 2.0 * std::numbers::pi * prim.radius * prim.radius;
      std::discrete_distribution<int> part_dist({side_area, cap_area, cap_area});
      for (int i = 0; i < n; ++i) {
        const int part = part_dist(rng);
        if (part == 0) {
          const double s = uniform01(rng);
          const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
          pts.push_back(prim.a + s * axis +
                        prim.radius * (std::cos(ang) * u + std::sin(ang) * v));
        } else {
          Vec3 d = random_direction(rng);
          const Vec3 outward = part == 1 ? Vec3(-dir) : dir;
          if (d.dot(outward) < 0.0) d -= 2.0 * d.dot(outward) * outward;
          const Vec3& end = part == 1 ? prim.a : prim.b;
          pts.push_back(end + prim.radius * d);
        }
      }
      break;
    }
  }
  return ObjectCloud(std::move(pts), seed, prim.centroid());
}

VecX object_descriptor(const ScenePrimitive& prim) {
  VecX d = VecX::Zero(kDescriptorDim);
  d[static_cast<int>(prim.kind)] = 1.0;
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      d[3] = prim.radius;
      break;
    case PrimitiveKind::Box:
      d.segment<3>(3) = prim.half_extents;
      break;
    case PrimitiveKind::Capsule:
      d[3] = prim.radius;
      d[4] = 0.5 * (prim.b - prim.a).norm();
      break;
  }
  d.segment<3>(7) = prim.centroid();
  return d;
}

Scene make_scene(int id, const ScenePrimitive& prim, int cloud_size, std::uint64_t seed) {
  return Scene{id, prim, sample_surface(prim, cloud_size, seed)};
}

}  // namespace flowgrasp
