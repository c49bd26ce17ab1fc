#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowgrasp/types.hpp"

namespace flowgrasp {

enum class PrimitiveKind { Sphere = 0, Box = 1, Capsule = 2 };

std::string to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& name);

/// Analytic object. Only the fields relevant to `kind` are meaningful;
/// boxes are axis-aligned.
struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 half_extents = Vec3::Ones();
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitZ();

  static ScenePrimitive sphere(const Vec3& c, double r);
  static ScenePrimitive box(const Vec3& c, const Vec3& half_extents);
  static ScenePrimitive capsule(const Vec3& a, const Vec3& b, double r);

  void validate() const;
  /// Analytic center (capsule: midpoint of its segment).
  Vec3 centroid() const;
  /// Closed-form containment predicate, independent of sdf().
  bool contains(const Vec3& p) const;
  bool operator==(const ScenePrimitive& other) const;
};

double sdf(const ScenePrimitive& prim, const Vec3& p);

struct NearestHit {
  int index = -1;
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
};

/// Static 3-d tree over a point set with bucketed leaves. Queries return the
/// exact nearest neighbour with ties resolved towards the lowest point index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points);
  NearestHit nearest(const Vec3& q) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
    Vec3 box_min = Vec3::Zero();
    Vec3 box_max = Vec3::Zero();
  };
  int build(int lo, int hi);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;  // reordered copy
  std::vector<int> ids_;      // original index of each reordered point
  std::vector<Node> nodes_;
};

/// Surface samples of a primitive (P_obj) with its analytic center (c_obj).
class ObjectCloud {
 public:
  ObjectCloud(std::vector<Vec3> points, std::uint64_t seed, const Vec3& centroid);

  const std::vector<Vec3>& points() const { return points_; }
  std::uint64_t seed() const { return seed_; }
  const Vec3& centroid() const { return centroid_; }

  NearestHit nearest(const Vec3& q) const { return index_.nearest(q); }
  NearestHit nearest_linear(const Vec3& q) const;

 private:
  std::vector<Vec3> points_;
  std::uint64_t seed_;
  Vec3 centroid_;
  KdTree index_;
};

inline constexpr int kMinCloudSize = 64;
inline constexpr int kDefaultCloudSize = 512;

ObjectCloud sample_surface(const ScenePrimitive& prim, int n, std::uint64_t seed);

NearestHit nearest_surface_point(const ObjectCloud& cloud, const Vec3& p);

inline constexpr int kDescriptorDim = 10;

/// [one-hot kind (3) | params padded to 4 | centroid (3)].
VecX object_descriptor(const ScenePrimitive& prim);

/// A primitive bundled with its sampled cloud and an identifier.
struct Scene {
  int id = 0;
  ScenePrimitive primitive;
  ObjectCloud cloud;
};

Scene make_scene(int id, const ScenePrimitive& prim, int cloud_size, std::uint64_t seed);

}  // namespace flowgrasp
