#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <numbers>
#include <random>

#include "tactex/errors.hpp"
#include "tactex/mesh.hpp"
#include "tactex/primitives.hpp"
#include "test_util.hpp"

using namespace tactex;
using tactex::testing::fd_gradient;

namespace {

// Dense parametric search for the distance to an ellipsoid surface: a coarse
// angular grid followed by a fine grid around the best cell.
double ellipsoid_distance_oracle(const Eigen::Vector3d& r, const Point3& q) {
  auto surf = [&](double th, double ph) {
    return Point3(r.x() * std::sin(th) * std::cos(ph), r.y() * std::sin(th) * std::sin(ph), r.z() * std::cos(th));
  };
  const int nt = 400, np = 800;
  double best = 1e300, bt = 0, bp = 0;
  for (int i = 0; i <= nt; ++i)
    for (int j = 0; j < np; ++j) {
      const double th = std::numbers::pi * i / nt, ph = 2 * std::numbers::pi * j / np;
      const double d = (surf(th, ph) - q).norm();
      if (d < best) best = d, bt = th, bp = ph;
    }
  const double dt = std::numbers::pi / nt, dp = 2 * std::numbers::pi / np;
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      const double th = bt + dt * i / 100.0, ph = bp + dp * j / 100.0;
      best = std::min(best, (surf(th, ph) - q).norm());
    }
  return best;
}

bool near_box_edge(const PrimitiveShape& s, const Point3& p, double zone) {
  const Eigen::Vector3d q = s.pose.inverse().apply(p);
  const Eigen::Vector3d h = 0.5 * s.dims;
  int close = 0;
  for (int i = 0; i < 3; ++i)
    if (std::abs(std::abs(q[i]) - h[i]) < zone) ++close;
  return close >= 2;
}

bool near_cylinder_rim(const PrimitiveShape& s, const Point3& p, double zone) {
  const Eigen::Vector3d q = s.pose.inverse().apply(p);
  const double side = std::sqrt(std::pow(q.x() / s.dims.x(), 2) + std::pow(q.y() / s.dims.y(), 2));
  return std::abs(std::abs(q.z()) - 0.5 * s.dims.z()) < zone && std::abs(side - 1.0) * std::min(s.dims.x(), s.dims.y()) < zone + 1.0;
}

}  // namespace

TEST(SignedDistance, TableExamples) {
  EXPECT_DOUBLE_EQ(signed_distance(PrimitiveShape::sphere(30), Point3(0, 0, 0)), -30.0);
  EXPECT_DOUBLE_EQ(signed_distance(PrimitiveShape::box(60, 60, 60), Point3(30, 0, 0)), 0.0);
  EXPECT_DOUBLE_EQ(signed_distance(PrimitiveShape::cylinder(25, 25, 80), Point3(0, 0, 50)), 10.0);
  EXPECT_NEAR(signed_distance(PrimitiveShape::box(60, 60, 60), Point3(40, 40, 0)), std::sqrt(200.0), 1e-12);
  EXPECT_DOUBLE_EQ(signed_distance(PrimitiveShape::box(60, 60, 90), Point3(0, 0, 0)), -30.0);
}

TEST(SignedDistance, EllipsoidMatchesDenseOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-70, 70);
  for (const Eigen::Vector3d r : {Eigen::Vector3d(30, 30, 45), Eigen::Vector3d(20, 35, 50)}) {
    const auto shape = PrimitiveShape::ball(r.x(), r.y(), r.z());
    for (int k = 0; k < 12; ++k) {
      const Point3 q(u(rng), u(rng), u(rng));
      const double oracle = ellipsoid_distance_oracle(r, q);
      EXPECT_NEAR(std::abs(signed_distance(shape, q)), oracle, 1e-3) << q.transpose();
    }
    // interior points
    for (int k = 0; k < 6; ++k) {
      const Point3 q = 0.6 * Point3(u(rng), u(rng), u(rng)).cwiseProduct(r) / 70.0;
      EXPECT_LT(signed_distance(shape, q), 0.0);
      EXPECT_NEAR(-signed_distance(shape, q), ellipsoid_distance_oracle(r, q), 1e-3);
    }
  }
}

TEST(SignedDistance, EllipticCylinderMatchesDenseOracle) {
  const auto shape = PrimitiveShape::cylinder(25, 37.5, 80);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-70, 70);
  for (int k = 0; k < 20; ++k) {
    const Point3 q(u(rng), u(rng), u(rng));
    double best = 1e300;
    for (int i = 0; i < 4000; ++i) {
      const double t = 2 * std::numbers::pi * i / 4000;
      const double cx = 25 * std::cos(t), cy = 37.5 * std::sin(t);
      const double zc = std::clamp(q.z(), -40.0, 40.0);
      best = std::min(best, (Point3(cx, cy, zc) - q).norm());
      // caps: radial segment from the center to the rim point
      for (double cz : {-40.0, 40.0}) {
        const double s = std::clamp((q.x() * cx + q.y() * cy) / (cx * cx + cy * cy), 0.0, 1.0);
        best = std::min(best, (Point3(s * cx, s * cy, cz) - q).norm());
      }
    }
    EXPECT_NEAR(std::abs(signed_distance(shape, q)), best, 0.05) << q.transpose();
  }
}

TEST(SurfaceNormal, Examples) {
  EXPECT_LT((surface_normal(PrimitiveShape::sphere(30), Point3(30, 0, 0)).vec() - Eigen::Vector3d(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((surface_normal(PrimitiveShape::box(60, 60, 60), Point3(30, 5, 5)).vec() - Eigen::Vector3d(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((surface_normal(PrimitiveShape::ball(30, 30, 45), Point3(0, 0, 45)).vec() - Eigen::Vector3d(0, 0, 1)).norm(), 1e-12);
  // edge tie-break: largest |coordinate| / half-extent wins
  EXPECT_EQ(surface_normal(PrimitiveShape::box(60, 60, 90), Point3(30, 0, 44.9)).vec(), Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(surface_normal(PrimitiveShape::box(60, 60, 90), Point3(29.9, 0, 45)).vec(), Eigen::Vector3d(0, 0, 1));
}

TEST(SurfaceNormal, MatchesFiniteDifferenceGradientAwayFromEdges) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> off(-0.9, 0.9);
  for (const auto& entry : default_suite().objects) {
    const auto& s = entry.shape;
    const PointCloud surf = sample_surface(s, 400, 5);
    int checked = 0;
    for (std::size_t i = 0; i < surf.size(); ++i) {
      const Point3 p = surf.points[i] + off(rng) * (*surf.normals)[i];
      if (s.kind == ShapeKind::Box && near_box_edge(s, p, 1.5)) continue;
      if (s.kind == ShapeKind::Cylinder && near_cylinder_rim(s, p, 1.5)) continue;
      const Eigen::Vector3d g = fd_gradient(s, p, 1e-3).normalized();
      const Eigen::Vector3d n = surface_normal(s, p).vec();
      EXPECT_LT((g - n).norm(), 1e-6) << entry.id << " at " << p.transpose();
      ++checked;
    }
    EXPECT_GT(checked, 200) << entry.id;
  }
}

TEST(SampleSurface, SphereStatistics) {
  const PointCloud c = sample_surface(PrimitiveShape::sphere(30), 10000, 1);
  ASSERT_EQ(c.size(), 10000u);
  double mean_r = 0.0;
  for (const auto& p : c.points) {
    EXPECT_NEAR(p.norm(), 30.0, 1e-6);
    mean_r += p.norm();
  }
  EXPECT_NEAR(mean_r / 1e4, 30.0, 1e-6);
  EXPECT_LT(c.centroid().norm(), 1.0);
}

TEST(SampleSurface, BoxFaceCountsAreBalanced) {
  const auto box = PrimitiveShape::box(60, 60, 60);
  const PointCloud c = sample_surface(box, 6000, 2);
  std::array<int, 6> counts{};
  for (const auto& n : *c.normals) {
    int axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    ++counts[2 * axis + (n[axis] > 0 ? 0 : 1)];
  }
  // binomial sd sqrt(6000 * 1/6 * 5/6) = 28.9; four sd band
  for (int k : counts) EXPECT_NEAR(k, 1000, 116);
}

TEST(SampleSurface, OnSurfaceDeterministicAndSingle) {
  for (const auto& entry : default_suite().objects) {
    const PointCloud a = sample_surface(entry.shape, 2048, 9);
    const PointCloud b = sample_surface(entry.shape, 2048, 9);
    EXPECT_EQ(a.points, b.points);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LT(std::abs(signed_distance(entry.shape, a.points[i])), 1e-6) << entry.id;
      EXPECT_NEAR((*a.normals)[i].norm(), 1.0, 1e-12);
    }
  }
  const PointCloud one = sample_surface(PrimitiveShape::cylinder(25, 25, 80), 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT(std::abs(signed_distance(PrimitiveShape::cylinder(25, 25, 80), one.points[0])), 1e-6);
  EXPECT_THROW(sample_surface(PrimitiveShape::sphere(1), 0, 1), InvalidArgument);
}

TEST(ClosestPoint, LiesOnSurfaceForAllShapes) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-80, 80);
  for (const auto& entry : default_suite().objects) {
    for (int k = 0; k < 300; ++k) {
      const Point3 p(u(rng), u(rng), u(rng));
      const Point3 c = closest_surface_point(entry.shape, p);
      EXPECT_LT(std::abs(signed_distance(entry.shape, c)), 1e-9) << entry.id;
      EXPECT_NEAR((c - p).norm(), std::abs(signed_distance(entry.shape, p)), 1e-9) << entry.id;
    }
  }
}

TEST(Suite, DefinitionFileMatchesReferenceDimensions) {
  const ObjectSuite suite = load_suite(std::filesystem::path(TACTEX_SOURCE_DIR) / "config" / "suite.json");
  ASSERT_EQ(suite.objects.size(), 9u);
  const std::array<std::array<double, 3>, 9> dims{{{30, 30, 30}, {45, 45, 45}, {30, 30, 45},
                                                   {60, 60, 60}, {90, 90, 90}, {60, 60, 90},
                                                   {25, 25, 80}, {37.5, 37.5, 120}, {25, 37.5, 80}}};
  const auto reference = default_suite();
  for (std::size_t i = 0; i < 9; ++i) {
    for (int k = 0; k < 3; ++k) EXPECT_EQ(suite.objects[i].shape.dims[k], dims[i][k]);
    EXPECT_EQ(suite.objects[i].id, reference.objects[i].id);
    EXPECT_LT((suite.objects[i].shape.pose.rotation - reference.objects[i].shape.pose.rotation).norm(), 1e-12);
  }
  EXPECT_DOUBLE_EQ(suite.find("box_dr").rotation_deg, 45.0);
  EXPECT_THROW(suite.find("teapot"), InvalidArgument);
  EXPECT_THROW(suite_from_json(nlohmann::json::parse(R"({"schema_version": 1, "objects": [{"id": "x", "kind": "ball", "dims_mm": [1, -1, 1]}]})")),
               ConfigError);
}

TEST(Mesh, BoxMinimumResolutionAndVolume) {
  const auto box = PrimitiveShape::box(60, 60, 60);
  const TriangleMesh m = to_mesh(box, 1);
  EXPECT_EQ(m.triangles.size(), 12u);
  EXPECT_EQ(m.vertices.size(), 8u);
  EXPECT_TRUE(is_watertight(m));
  EXPECT_NEAR(mesh_volume(m), 216000.0, 1e-6);
  EXPECT_NEAR(mesh_volume(to_mesh(box, 3)), 216000.0, 1e-6);
  EXPECT_THROW(to_mesh(box, 0), InvalidArgument);
}

TEST(Mesh, SphereVerticesOnSurface) {
  const auto sphere = PrimitiveShape::sphere(30);
  const TriangleMesh m = to_mesh(sphere);
  for (const auto& v : m.vertices) EXPECT_NEAR(v.norm(), 30.0, 1e-6);
  EXPECT_TRUE(is_watertight(m));
  EXPECT_GT(mesh_volume(m), 0.0);
}

TEST(Mesh, HausdorffAndOrientationAtDefaultResolution) {
  for (const auto& entry : default_suite().objects) {
    const TriangleMesh m = to_mesh(entry.shape);
    ASSERT_TRUE(is_watertight(m)) << entry.id;
    EXPECT_NEAR(mesh_volume(m), entry.shape.volume(), 0.02 * entry.shape.volume()) << entry.id;

    // mesh -> surface
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> u(0, 1);
    double h1 = 0.0;
    for (const auto& t : m.triangles) {
      for (int k = 0; k < 3; ++k) {
        double a = u(rng), b = u(rng);
        if (a + b > 1) a = 1 - a, b = 1 - b;
        const Point3 p = m.vertices[t[0]] + a * (m.vertices[t[1]] - m.vertices[t[0]]) + b * (m.vertices[t[2]] - m.vertices[t[0]]);
        h1 = std::max(h1, std::abs(signed_distance(entry.shape, p)));
      }
    }
    // surface -> mesh
    double h2 = 0.0;
    const PointCloud s = sample_surface(entry.shape, 300, 4);
    for (const auto& p : s.points) {
      double best = 1e300;
      for (const auto& t : m.triangles)
        best = std::min(best, (tactex::testing::closest_on_triangle(p, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]) - p).norm());
      h2 = std::max(h2, best);
    }
    EXPECT_LT(std::max(h1, h2), 0.5) << entry.id;
  }
}

TEST(Mesh, InsideTestAgreesWithSignedDistance) {
  std::mt19937_64 rng(26);
  for (const auto& entry : default_suite().objects) {
    const TriangleMesh m = to_mesh(entry.shape);
    const double r = entry.shape.bounding_radius() * 1.2;
    std::uniform_real_distribution<double> u(-r, r);
    int disagreements = 0, tested = 0;
    for (int k = 0; k < 100000; ++k) {
      const Point3 p(u(rng), u(rng), u(rng));
      const double d = signed_distance(entry.shape, p);
      if (std::abs(d) < 0.5) continue;
      // points clearly outside the bounding sphere need no winding number
      if (d > 0 && p.norm() > entry.shape.bounding_radius() + 1.0) continue;
      ++tested;
      if ((d < 0) != mesh_contains(m, p)) ++disagreements;
      if (tested >= 4000) break;
    }
    EXPECT_EQ(disagreements, 0) << entry.id;
  }
}

TEST(Mesh, StlAndPlyExport) {
  const auto dir = std::filesystem::temp_directory_path() / "tactex_mesh_test";
  std::filesystem::create_directories(dir);
  const TriangleMesh m = to_mesh(PrimitiveShape::cylinder(25, 37.5, 80, Pose::from_axis_angle({0, 0, 1}, 0.7)));
  write_stl_binary(m, dir / "c.stl");
  const TriangleMesh back = read_stl_binary(dir / "c.stl");
  EXPECT_EQ(back.triangles.size(), m.triangles.size());
  EXPECT_TRUE(is_watertight(back));
  EXPECT_NEAR(mesh_volume(back), mesh_volume(m), 1e-3 * mesh_volume(m));
  write_mesh_ply(m, dir / "c.ply");
  EXPECT_TRUE(std::filesystem::exists(dir / "c.ply"));
  std::filesystem::remove_all(dir);
}
