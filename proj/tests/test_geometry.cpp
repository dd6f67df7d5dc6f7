#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "physloop/geometry.hpp"

using namespace physloop;
using namespace physloop::geometry;

namespace {

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Dense barycentric grid over the triangle.
Vec3 brute_closest(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 best = a;
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double u = double(i) / n, v = double(j) / n;
      const Vec3 q = a + u * (b - a) + v * (c - a);
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
    }
  }
  return best;
}

}  // namespace

TEST(Geometry, BoxMassPropertiesMatchClosedForm) {
  const Vec3 half(0.3, 0.2, 0.1);
  const Vec3 center(1.0, -2.0, 0.5);
  const MassProperties m = mass_properties(make_box(center, half));
  const Vec3 size = 2.0 * half;
  const double v = size.prod();
  EXPECT_NEAR(m.volume, v, 1e-12);
  EXPECT_LT((m.center_of_mass - center).norm(), 1e-12);
  EXPECT_NEAR(m.inertia(0, 0), v * (size.y() * size.y() + size.z() * size.z()) / 12.0, 1e-12);
  EXPECT_NEAR(m.inertia(1, 1), v * (size.x() * size.x() + size.z() * size.z()) / 12.0, 1e-12);
  EXPECT_NEAR(m.inertia(2, 2), v * (size.x() * size.x() + size.y() * size.y()) / 12.0, 1e-12);
  EXPECT_NEAR(m.inertia(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(m.inertia(1, 2), 0.0, 1e-12);
}

TEST(Geometry, RotatedBoxInertiaRotates) {
  const Vec3 half(0.3, 0.2, 0.1);
  const RigidTransform pose{Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix(),
                            Vec3(0.2, 0.1, 0.4)};
  const MassProperties local = mass_properties(make_box(Vec3::Zero(), half));
  const MassProperties world = mass_properties(make_box(pose, half));
  const Mat3 expected = pose.rotation * local.inertia * pose.rotation.transpose();
  EXPECT_LT((world.inertia - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((world.center_of_mass - pose.translation).norm(), 1e-12);
}

TEST(Geometry, IcosphereVolumeApproachesBall) {
  const double r = 0.5;
  const double ball = 4.0 / 3.0 * M_PI * r * r * r;
  double previous_error = 1.0;
  for (int s = 1; s <= 4; ++s) {
    const Mesh sphere = make_icosphere(r, s);
    EXPECT_TRUE(is_watertight(sphere).watertight);
    const double error = std::abs(mass_properties(sphere).volume - ball) / ball;
    EXPECT_LT(error, previous_error);
    previous_error = error;
  }
  EXPECT_LT(previous_error, 0.005);
}

TEST(Geometry, SdfMatchesBoxFormula) {
  const Vec3 center(0.1, -0.2, 0.3);
  const Vec3 half(0.4, 0.25, 0.15);
  const Sdf sdf(make_box(center, half));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = center + Vec3(u(rng), u(rng), u(rng));
    EXPECT_NEAR(sdf.signed_distance(p), box_sdf(p, center, half), 1e-9) << p.transpose();
  }
}

TEST(Geometry, ClosestPointIsOnSurfaceAtReportedDistance) {
  const Sdf sdf(make_icosphere(0.4, 2));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    double d = 0.0;
    const Vec3 q = sdf.closest_point(p, &d);
    EXPECT_NEAR(std::abs(d), (q - p).norm(), 1e-12);
    EXPECT_NEAR(sdf.unsigned_distance(q), 0.0, 1e-12);
  }
}

TEST(Geometry, WindingNumberInsideAndOutside) {
  const Sdf sdf(make_icosphere(0.5, 2));
  EXPECT_NEAR(sdf.winding_number(Vec3::Zero()), 1.0, 1e-9);
  EXPECT_NEAR(sdf.winding_number(Vec3(0.2, -0.1, 0.1)), 1.0, 1e-9);
  EXPECT_NEAR(sdf.winding_number(Vec3(2.0, 0.0, 0.0)), 0.0, 1e-9);
  EXPECT_LT(sdf.signed_distance(Vec3::Zero()), 0.0);
  EXPECT_GT(sdf.signed_distance(Vec3(0.0, 0.0, 0.7)), 0.0);
}

TEST(Geometry, ClosestPointOnTriangleAgreesWithBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
    const Vec3 p = 2.0 * Vec3(u(rng), u(rng), u(rng));
    const Vec3 q = closest_point_on_triangle(p, a, b, c);
    const Vec3 r = brute_closest(p, a, b, c);
    // The grid can only be farther away than the exact answer.
    EXPECT_LE((q - p).norm(), (r - p).norm() + 1e-12);
    EXPECT_NEAR((q - p).norm(), (r - p).norm(), 1e-2);
  }
}

TEST(Geometry, WatertightReports) {
  const WatertightReport box = is_watertight(make_box(Vec3::Zero(), Vec3::Constant(0.5)));
  EXPECT_TRUE(box.watertight);
  EXPECT_TRUE(box.boundary_edges.empty());

  const WatertightReport square = is_watertight(make_unit_square());
  EXPECT_FALSE(square.watertight);
  EXPECT_EQ(square.boundary_edges.size(), 4u);

  Mesh flipped = make_box(Vec3::Zero(), Vec3::Constant(0.5));
  std::swap(flipped.faces[0][1], flipped.faces[0][2]);
  const WatertightReport f = is_watertight(flipped);
  EXPECT_FALSE(f.watertight);
  EXPECT_EQ(f.inconsistent_edges.size(), 3u);
  EXPECT_TRUE(f.boundary_edges.empty());

  Mesh fin = make_box(Vec3::Zero(), Vec3::Constant(0.5));
  const int extra = static_cast<int>(fin.vertices.size());
  fin.vertices.push_back(Vec3(2, 2, 2));
  fin.faces.push_back({fin.faces[0][0], fin.faces[0][1], extra});
  const WatertightReport nm = is_watertight(fin);
  EXPECT_FALSE(nm.watertight);
  EXPECT_FALSE(nm.non_manifold_edges.empty());
}

TEST(Geometry, OpenMeshIsRejectedForVolumeAndSdf) {
  EXPECT_THROW(mass_properties(make_unit_square()), NonWatertightSource);
  EXPECT_THROW(Sdf{make_unit_square()}, NonWatertightSource);
}

TEST(Geometry, MakeMeshValidates) {
  EXPECT_THROW(make_mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 3}}), InvalidArgument);
  EXPECT_THROW(make_mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{-1, 1, 2}}), InvalidArgument);
  // A zero-area face is dropped.
  const Mesh m = make_mesh({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 2.0 * Vec3::UnitX()},
                           {{0, 1, 2}, {0, 1, 3}});
  EXPECT_EQ(m.faces.size(), 1u);
}

TEST(Geometry, ConnectedComponentsSplitParts) {
  const Mesh a = make_box(Vec3::Zero(), Vec3::Constant(0.2));
  const Mesh b = make_box(Vec3(1, 0, 0), Vec3::Constant(0.1));
  const Mesh c = make_icosphere(0.1, 1);
  const std::vector<Mesh> parts = connected_components(merged({a, b, transformed(c, RigidTransform::from_yaw(0.0, {0, 2, 0}))}));
  ASSERT_EQ(parts.size(), 3u);
  double total = 0.0;
  for (const Mesh& p : parts) {
    EXPECT_TRUE(is_watertight(p).watertight);
    total += mass_properties(p).volume;
  }
  EXPECT_NEAR(total, mass_properties(a).volume + mass_properties(b).volume + mass_properties(c).volume, 1e-12);
}

TEST(Geometry, SurfaceSamplesAreDeterministicAndOnSurface) {
  const Mesh box = make_box(Vec3(0, 0, 1), Vec3(0.5, 0.2, 0.1));
  const SurfaceSamples s1 = sample_surface(box, 500, 3);
  const SurfaceSamples s2 = sample_surface(box, 500, 3);
  const SurfaceSamples s3 = sample_surface(box, 500, 4);
  ASSERT_EQ(s1.count(), 500u);
  EXPECT_EQ(s1.points, s2.points);
  EXPECT_NE(s1.points, s3.points);
  const Sdf sdf(box);
  int top = 0;
  for (std::size_t i = 0; i < s1.count(); ++i) {
    EXPECT_NEAR(sdf.unsigned_distance(s1.points[i]), 0.0, 1e-12);
    EXPECT_NEAR(s1.normals[i].norm(), 1.0, 1e-12);
    EXPECT_LT((s1.normals[i] - face_normal(box, s1.faces[i])).norm(), 1e-12);
    if (s1.normals[i].z() > 0.5) ++top;
  }
  // The top face holds 0.4 / 1.68 of the area.
  EXPECT_NEAR(top / 500.0, 0.4 / 1.68, 0.06);
  EXPECT_THROW(sample_surface(box, 0, 1), InvalidArgument);
  EXPECT_THROW(sample_surface(Mesh{}, 10, 1), EmptyMesh);
}

TEST(Geometry, ConvexHullOfCubeCorners) {
  std::vector<Vec3> points;
  for (int i = 0; i < 8; ++i) points.push_back(Vec3(i & 1, (i >> 1) & 1, (i >> 2) & 1));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 50; ++i) points.push_back(Vec3(u(rng), u(rng), u(rng)));
  const Mesh hull = convex_hull(points);
  EXPECT_TRUE(is_watertight(hull).watertight);
  EXPECT_NEAR(mass_properties(hull).volume, 1.0, 1e-12);
  EXPECT_THROW(convex_hull({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), Vec3(1, 1, 0)}), InvalidArgument);
}

TEST(Geometry, ObjRoundTrip) {
  const Mesh sphere = make_icosphere(0.3, 1, "ball");
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "physloop_geometry_test.obj";
  write_obj(sphere, path);
  const Mesh back = read_obj(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.faces, sphere.faces);
  ASSERT_EQ(back.vertices.size(), sphere.vertices.size());
  for (std::size_t i = 0; i < back.vertices.size(); ++i) {
    EXPECT_EQ(back.vertices[i], sphere.vertices[i]);
  }
  // Quads are fan-triangulated and unknown records ignored.
  const Mesh quad = parse_obj("# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3 4\n");
  EXPECT_EQ(quad.faces.size(), 2u);
  EXPECT_THROW(read_obj("/nonexistent/mesh.obj"), MissingAsset);
}
