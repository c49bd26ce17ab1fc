#include <doctest.h>

#include <array>
#include <cmath>

#include "flowgrasp/rng.hpp"
#include "flowgrasp/scene.hpp"
#include "oracles.hpp"

using namespace flowgrasp;

namespace {

Vec3 random_point(Rng& rng, double half) {
  return Vec3(uniform(rng, -half, half), uniform(rng, -half, half), uniform(rng, -half, half));
}

std::vector<ScenePrimitive> reference_primitives() {
  return {ScenePrimitive::sphere(Vec3(0.1, -0.2, 0.3), 0.6),
          ScenePrimitive::box(Vec3(0.2, 0.0, -0.1), Vec3(0.5, 0.3, 0.4)),
          ScenePrimitive::capsule(Vec3(-0.3, 0.1, -0.4), Vec3(0.4, 0.2, 0.5), 0.25)};
}

}  // namespace

TEST_CASE("sdf closed-form examples") {
  const auto s = ScenePrimitive::sphere(Vec3::Zero(), 1.0);
  CHECK(sdf(s, Vec3::Zero()) == -1.0);
  CHECK(sdf(s, Vec3(2, 0, 0)) == 1.0);
  const auto b = ScenePrimitive::box(Vec3::Zero(), Vec3(1, 1, 1));
  CHECK(sdf(b, Vec3(2, 2, 0)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(sdf(b, Vec3(0.5, 0, 0)) == -0.5);
  const auto c = ScenePrimitive::capsule(Vec3(0, 0, -1), Vec3(0, 0, 1), 0.5);
  CHECK(sdf(c, Vec3(2, 0, 0)) == 1.5);
  CHECK(sdf(c, Vec3(0, 0, 3)) == 1.5);
  CHECK(sdf(c, Vec3::Zero()) == -0.5);
}

TEST_CASE("box sdf matches the dense sampling oracle") {
  const auto b = ScenePrimitive::box(Vec3::Zero(), Vec3(1, 1, 1));
  const auto patches = oracle::surface_patches(b);
  CHECK(std::abs(oracle::dense_signed_distance(b, patches, Vec3(0.5, 0, 0)) + 0.5) < 1e-3);
  CHECK(std::abs(oracle::dense_signed_distance(b, patches, Vec3(2, 2, 0)) - std::sqrt(2.0)) < 1e-3);
}

TEST_CASE("sdf agrees with dense sampling away from the surface") {
  Rng rng(11);
  for (const auto& prim : reference_primitives()) {
    const auto patches = oracle::surface_patches(prim);
    int checked = 0;
    while (checked < 300) {
      const Vec3 q = prim.centroid() + random_point(rng, 1.5);
      const double ref = oracle::dense_signed_distance(prim, patches, q);
      if (std::abs(ref) < 0.05) continue;
      CHECK(std::abs(sdf(prim, q) - ref) < 1e-3);
      ++checked;
    }
  }
}

TEST_CASE("sdf sign, Lipschitz bound and containment") {
  Rng rng(12);
  for (const auto& prim : reference_primitives()) {
    for (int i = 0; i < 10000; ++i) {
      const Vec3 p = prim.centroid() + random_point(rng, 1.5);
      const double d = sdf(prim, p);
      if (std::abs(d) > 1e-12) CHECK((d < 0) == prim.contains(p));
      const Vec3 q = prim.centroid() + random_point(rng, 1.5);
      CHECK(std::abs(d - sdf(prim, q)) <= (p - q).norm() + 1e-12);
    }
  }
}

TEST_CASE("primitive validation") {
  CHECK_THROWS_AS(ScenePrimitive::sphere(Vec3::Zero(), 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(ScenePrimitive::box(Vec3::Zero(), Vec3(1, -1, 1)).validate(), ConfigError);
  CHECK_THROWS_AS(ScenePrimitive::capsule(Vec3::Ones(), Vec3::Ones(), 0.2).validate(), ConfigError);
  CHECK_NOTHROW(ScenePrimitive::capsule(Vec3::Zero(), Vec3::UnitZ(), 0.2).validate());
  CHECK(primitive_kind_from_string("box") == PrimitiveKind::Box);
  CHECK(to_string(PrimitiveKind::Capsule) == "capsule");
  CHECK_THROWS_AS(primitive_kind_from_string("torus"), ConfigError);
}

TEST_CASE("sample_surface places points on the surface") {
  const auto s = ScenePrimitive::sphere(Vec3(1, 0, 0), 2.0);
  const ObjectCloud cloud = sample_surface(s, 512, 3);
  CHECK(cloud.points().size() == 512);
  for (const Vec3& q : cloud.points()) CHECK(std::abs((q - Vec3(1, 0, 0)).norm() - 2.0) <= 1e-9);
  CHECK(cloud.centroid() == Vec3(1, 0, 0));
  CHECK(cloud.seed() == 3);

  for (const auto& prim : reference_primitives()) {
    const ObjectCloud c = sample_surface(prim, 2000, 8);
    for (const Vec3& q : c.points()) CHECK(std::abs(sdf(prim, q)) <= 1e-6);
    CHECK((c.centroid() - prim.centroid()).norm() == 0.0);
  }
  const auto cap = ScenePrimitive::capsule(Vec3(0, 0, -1), Vec3(0, 0, 1), 0.3);
  CHECK(sample_surface(cap, 64, 1).centroid() == Vec3::Zero());
}

TEST_CASE("sample_surface is deterministic and validates n") {
  for (const auto& prim : reference_primitives()) {
    const ObjectCloud a = sample_surface(prim, 256, 42);
    const ObjectCloud b = sample_surface(prim, 256, 42);
    CHECK(a.points() == b.points());
    const ObjectCloud c = sample_surface(prim, 256, 43);
    CHECK(a.points() != c.points());
  }
  CHECK_THROWS_AS(sample_surface(ScenePrimitive::sphere(Vec3::Zero(), 1), 63, 0), ConfigError);
}

TEST_CASE("box face frequencies follow face areas") {
  const Vec3 e(0.2, 0.5, 0.9);
  const auto box = ScenePrimitive::box(Vec3::Zero(), e);
  const int n = 100000;
  const ObjectCloud cloud = sample_surface(box, n, 77);
  // Faces: -x, +x, -y, +y, -z, +z. A sample is assigned to the face whose
  // coordinate sits on the bound.
  std::array<int, 6> counts{};
  for (const Vec3& q : cloud.points()) {
    int face = -1;
    for (int axis = 0; axis < 3 && face < 0; ++axis) {
      if (std::abs(q[axis] - e[axis]) < 1e-12) face = 2 * axis + 1;
      else if (std::abs(q[axis] + e[axis]) < 1e-12) face = 2 * axis;
    }
    REQUIRE(face >= 0);
    ++counts[face];
  }
  const std::array<double, 3> area{e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  const double total = 2 * (area[0] + area[1] + area[2]);
  for (int f = 0; f < 6; ++f) {
    const double p = area[f / 2] / total;
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(counts[f] - n * p) <= 3 * sigma);
  }
}

TEST_CASE("capsule side and cap frequencies follow areas") {
  const double r = 0.3, len = 1.2;
  const auto cap = ScenePrimitive::capsule(Vec3(0, 0, -len / 2), Vec3(0, 0, len / 2), r);
  const int n = 100000;
  const ObjectCloud cloud = sample_surface(cap, n, 5);
  int side = 0;
  for (const Vec3& q : cloud.points()) side += std::abs(q.z()) <= len / 2 ? 1 : 0;
  const double p = (2 * len * r) / (2 * len * r + 4 * r * r);
  CHECK(std::abs(side - n * p) <= 3 * std::sqrt(n * p * (1 - p)));
}

TEST_CASE("nearest neighbour queries") {
  const auto s = ScenePrimitive::sphere(Vec3::Zero(), 1.0);
  const ObjectCloud cloud = sample_surface(s, 512, 9);
  const NearestHit hit = nearest_surface_point(cloud, cloud.points()[7]);
  CHECK(hit.index == 7);
  CHECK(hit.distance == 0.0);
  CHECK(hit.point == cloud.points()[7]);

  const ObjectCloud dense = sample_surface(s, 20000, 1);
  const double d = nearest_surface_point(dense, Vec3(3, 0, 0)).distance;
  CHECK(d >= 2.0);
  CHECK(d < 2.0 + 0.02);
}

TEST_CASE("kd-tree matches a linear scan") {
  Rng rng(21);
  for (const auto& prim : reference_primitives()) {
    const ObjectCloud cloud = sample_surface(prim, 777, 4);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 q = prim.centroid() + random_point(rng, 2.0);
      const NearestHit fast = cloud.nearest(q);
      const NearestHit slow = cloud.nearest_linear(q);
      CHECK(fast.index == slow.index);
      CHECK(fast.index == oracle::brute_force_nearest(cloud.points(), q));
      CHECK(fast.distance == slow.distance);
    }
  }
}

TEST_CASE("kd-tree breaks ties towards the lowest index") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 70; ++i) pts.push_back(Vec3(i % 2 == 0 ? 1.0 : -1.0, 0, 0));
  const ObjectCloud cloud(pts, 0, Vec3::Zero());
  CHECK(cloud.nearest(Vec3::Zero()).index == 0);
  CHECK(cloud.nearest(Vec3(-2, 0, 0)).index == 1);
  CHECK(cloud.nearest_linear(Vec3::Zero()).index == 0);
  const ObjectCloud copy = cloud;
  CHECK(copy.nearest(Vec3(5, 0, 0)).index == 0);
}

TEST_CASE("object descriptor") {
  const VecX d = object_descriptor(ScenePrimitive::sphere(Vec3(1, 2, 3), 0.5));
  VecX expected(10);
  expected << 1, 0, 0, 0.5, 0, 0, 0, 1, 2, 3;
  CHECK(d == expected);

  const VecX b = object_descriptor(ScenePrimitive::box(Vec3::Zero(), Vec3(0.2, 0.3, 0.4)));
  CHECK(b.head<3>() == Vec3(0, 1, 0));
  CHECK(b.segment<4>(3) == Eigen::Vector4d(0.2, 0.3, 0.4, 0));
  const VecX c = object_descriptor(ScenePrimitive::capsule(Vec3(0, 0, -1), Vec3(0, 0, 1), 0.3));
  CHECK(c.head<3>() == Vec3(0, 0, 1));
  CHECK(c.segment<4>(3) == Eigen::Vector4d(0.3, 1.0, 0, 0));
  CHECK(d.head<3>() != b.head<3>());

  Rng rng(30);
  for (int i = 0; i < 100; ++i) {
    const auto prim = ScenePrimitive::sphere(random_point(rng, 1.0), uniform(rng, 0.1, 1.0));
    const Scene s1 = make_scene(0, prim, 64, i);
    const Scene s2 = make_scene(1, prim, 64, i + 1000);
    CHECK(object_descriptor(s1.primitive) == object_descriptor(s2.primitive));
    CHECK(object_descriptor(prim) == object_descriptor(prim));
  }
}
