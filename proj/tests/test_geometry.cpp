#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numbers>
#include <random>

#include "tactex/errors.hpp"
#include "tactex/geometry.hpp"
#include "tactex/kdtree.hpp"
#include "tactex/ply.hpp"
#include "test_util.hpp"

using namespace tactex;
using tactex::testing::random_cloud;

namespace {

double stddev_of_norms(const PointCloud& c) {
  Point3 mean = Point3::Zero();
  for (const auto& p : c.points) mean += p;
  mean /= static_cast<double>(c.size());
  double mu = 0.0;
  for (const auto& p : c.points) mu += (p - mean).norm();
  mu /= static_cast<double>(c.size());
  double var = 0.0;
  for (const auto& p : c.points) var += std::pow((p - mean).norm() - mu, 2);
  return std::sqrt(var / static_cast<double>(c.size()));
}

}  // namespace

TEST(Pose, ComposeMatchesSequentialApplication) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose t1 = tactex::testing::random_pose(rng), t2 = tactex::testing::random_pose(rng);
    const PointCloud c = random_cloud(rng, 20);
    const PointCloud once = transform_cloud(c, t1 * t2);
    const PointCloud twice = transform_cloud(transform_cloud(c, t2), t1);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((once.points[i] - twice.points[i]).norm(), 1e-9);
    EXPECT_TRUE((t1 * t2).is_valid());
  }
}

TEST(TransformCloud, IdentityAndQuarterTurn) {
  std::mt19937_64 rng(2);
  PointCloud c = random_cloud(rng, 10);
  c.normals = std::vector<Eigen::Vector3d>(10, Eigen::Vector3d::UnitX());
  c.timestamps = std::vector<std::int64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const PointCloud same = transform_cloud(c, Pose::identity());
  EXPECT_EQ(same.points, c.points);

  PointCloud unit;
  unit.points = {Point3(1, 0, 0)};
  unit.normals = std::vector<Eigen::Vector3d>{Eigen::Vector3d::UnitX()};
  const auto rotated = transform_cloud(unit, Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2));
  EXPECT_LT((rotated.points[0] - Point3(0, 1, 0)).norm(), 1e-9);
  EXPECT_LT(((*rotated.normals)[0] - Eigen::Vector3d(0, 1, 0)).norm(), 1e-9);

  const auto moved = transform_cloud(c, Pose::from_translation({1, 2, 3}));
  EXPECT_EQ(*moved.timestamps, *c.timestamps);
}

TEST(UnitVec3, RejectsNonUnit) {
  EXPECT_THROW(UnitVec3(Eigen::Vector3d(1, 1, 0)), InvalidArgument);
  EXPECT_THROW(UnitVec3::normalized(Eigen::Vector3d::Zero()), InvalidArgument);
  EXPECT_NEAR(UnitVec3::normalized({3, 4, 0}).vec().norm(), 1.0, 1e-12);
}

TEST(Normalize, ZeroMeanAndSigmaOnRandomClouds) {
  std::mt19937_64 rng(3);
  const auto [out, params] = normalize_cloud(random_cloud(rng, 1000), 2.0);
  EXPECT_LT(out.centroid().norm(), 1e-9);
  EXPECT_NEAR(stddev_of_norms(out), 0.5, 1e-6);
  EXPECT_GT(params.sigma, 0.0);
  EXPECT_EQ(params.lambda, 2.0);
}

TEST(Normalize, FixedPointIsUnchanged) {
  std::mt19937_64 rng(4);
  const auto once = normalize_cloud(random_cloud(rng, 200), 1.0).first;
  const auto twice = normalize_cloud(once, 1.0).first;
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_LT((once.points[i] - twice.points[i]).norm(), 1e-9);
}

TEST(Normalize, DegenerateInputs) {
  PointCloud one;
  one.points = {Point3(1, 2, 3)};
  EXPECT_THROW(normalize_cloud(one), DegenerateCloud);
  PointCloud same;
  same.points = {Point3(1, 2, 3), Point3(1, 2, 3), Point3(1, 2, 3)};
  EXPECT_THROW(normalize_cloud(same), DegenerateCloud);
  // two antipodal points: both centered norms are 1, so their spread is 0
  PointCloud pair;
  pair.points = {Point3(-1, 0, 0), Point3(1, 0, 0)};
  EXPECT_THROW(normalize_cloud(pair), NormalizationUndefined);
}

TEST(Denormalize, RoundTripAndHandComputedShift) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud c = random_cloud(rng, 50, 500.0);
    const auto [n, params] = normalize_cloud(c, 1.5);
    const PointCloud back = denormalize_cloud(n, params);
    for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, (back.points[i] - c.points[i]).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-6);

  PointCloud unit;
  unit.points = {Point3(0, 0, 0), Point3(1, 0, 0)};
  EXPECT_EQ(denormalize_cloud(unit, NormalizationParams{}).points, unit.points);
  // scale lambda * sigma = 2 * 3 = 6, then shift by (10, 0, 0)
  const auto shifted = denormalize_cloud(unit, NormalizationParams{2.0, Point3(10, 0, 0), 3.0});
  EXPECT_EQ(shifted.points[0], Point3(10, 0, 0));
  EXPECT_EQ(shifted.points[1], Point3(16, 0, 0));
}

TEST(Chamfer, HandValuesAndInvariances) {
  std::mt19937_64 rng(6);
  const PointCloud p = random_cloud(rng, 300);
  EXPECT_EQ(chamfer_distance(p, p), 0.0);

  PointCloud a, b;
  a.points = {Point3(0, 0, 0)};
  b.points = {Point3(1, 0, 0)};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 1.0);

  const PointCloud q = random_cloud(rng, 200);
  EXPECT_EQ(chamfer_distance(p, q), chamfer_distance(q, p));
  EXPECT_GT(chamfer_distance(p, q), 0.0);
  const Pose r = tactex::testing::random_pose(rng);
  EXPECT_NEAR(chamfer_distance(transform_cloud(p, r), transform_cloud(q, r)), chamfer_distance(p, q), 1e-9);

  EXPECT_THROW(chamfer_distance(PointCloud{}, p), EmptyCloud);
}

TEST(Chamfer, MatchesBruteForce) {
  std::mt19937_64 rng(7);
  const PointCloud a = random_cloud(rng, 700), b = random_cloud(rng, 500);
  EXPECT_EQ(chamfer_distance(a, b), tactex::testing::brute_chamfer(a, b));
}

TEST(Coverage, ExamplesAndMonotonicity) {
  PointCloud m;
  m.points = {Point3(0, 0, 0), Point3(4, 0, 0)};
  EXPECT_EQ(coverage_distance(Point3(10, 0, 0), m), 6.0);
  EXPECT_EQ(coverage_distance(Point3(4, 0, 0), m), 0.0);
  const double before = coverage_distance(Point3(3, 7, 1), m);
  m.points.emplace_back(5, 5, 5);
  EXPECT_LE(coverage_distance(Point3(3, 7, 1), m), before);
  EXPECT_THROW(coverage_distance(Point3(0, 0, 0), PointCloud{}), EmptyCloud);
}

TEST(KdTree, NearestAndKnnMatchBruteForce) {
  std::mt19937_64 rng(8);
  const PointCloud c = random_cloud(rng, 2000);
  const KdTree tree(c.points);
  const PointCloud queries = random_cloud(rng, 500, 150.0);
  for (const auto& q : queries.points) {
    EXPECT_EQ(tree.nearest(q).distance, tactex::testing::brute_nearest(q, c));
    std::vector<double> all;
    for (const auto& p : c.points) all.push_back((p - q).norm());
    std::sort(all.begin(), all.end());
    const auto nn = tree.knn(q, 7);
    ASSERT_EQ(nn.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(nn[i].distance, all[i], 1e-12);
  }
}

TEST(KdTree, HandlesDuplicates) {
  PointCloud c;
  for (int i = 0; i < 50; ++i) c.points.emplace_back(1, 1, 1);
  c.points.emplace_back(5, 5, 5);
  const KdTree tree(c.points);
  EXPECT_EQ(tree.nearest(Point3(5, 5, 6)).distance, 1.0);
  EXPECT_EQ(tree.knn(Point3(0, 0, 0), 60).size(), 51u);
}

TEST(VoxelVolume, Examples) {
  EXPECT_EQ(voxel_volume(PointCloud{}, 1.0), 0.0);

  PointCloud corners;
  for (int i = 0; i < 8; ++i) corners.points.emplace_back(10.0 * (i & 1), 10.0 * ((i >> 1) & 1), 10.0 * ((i >> 2) & 1));
  EXPECT_EQ(voxel_volume(corners, 1.0), 8.0);

  // 0.25 mm lattice strictly inside [0, 10)^3 occupies 10^3 unit voxels
  PointCloud dense;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      for (int k = 0; k < 40; ++k) dense.points.emplace_back(0.125 + 0.25 * i, 0.125 + 0.25 * j, 0.125 + 0.25 * k);
  EXPECT_EQ(voxel_volume(dense, 1.0), 1000.0);

  std::mt19937_64 rng(9);
  PointCloud shuffled = dense;
  std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
  shuffled.points.insert(shuffled.points.end(), dense.points.begin(), dense.points.begin() + 100);
  EXPECT_EQ(voxel_volume(shuffled, 1.0), 1000.0);
  EXPECT_THROW(voxel_volume(dense, 0.0), InvalidArgument);
}

TEST(EstimateNormals, PlaneSphereAndDegenerate) {
  PointCloud plane;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) plane.points.emplace_back(i, j, 0.0);
  const auto pn = estimate_normals(plane, 8);
  for (const auto& n : *pn.normals) EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-9);

  const PointCloud sphere = sample_surface(PrimitiveShape::sphere(30.0), 2000, 11);
  const auto sn = estimate_normals(sphere, 16);
  int good = 0;
  for (std::size_t i = 0; i < sphere.size(); ++i) {
    const double cosang = (*sn.normals)[i].dot(sphere.points[i].normalized());
    if (cosang > std::cos(5.0 * std::numbers::pi / 180.0)) ++good;
  }
  EXPECT_GE(good, static_cast<int>(0.95 * sphere.size()));

  PointCloud dup;
  for (int i = 0; i < 20; ++i) dup.points.emplace_back(1, 2, 3);
  dup.points.emplace_back(4, 5, 6);
  EXPECT_THROW(estimate_normals(dup, 5), DegenerateNeighborhood);
  EXPECT_THROW(estimate_normals(plane, 200), TooFewPoints);
}

TEST(Ply, RoundTripIsByteExact) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud c = random_cloud(rng, 50, std::pow(10.0, trial % 6 - 2));
    if (trial % 2 == 0) {
      std::vector<Eigen::Vector3d> n;
      for (std::size_t i = 0; i < c.size(); ++i) n.push_back(tactex::testing::random_rotation(rng).col(0));
      c.normals = n;
    }
    if (trial % 3 == 0) {
      std::vector<std::int64_t> ts;
      for (std::size_t i = 0; i < c.size(); ++i) ts.push_back(static_cast<std::int64_t>(i / 3));
      c.timestamps = ts;
    }
    const std::string first = to_ply_string(c, {"lambda 1"});
    const PointCloud back = from_ply_string(first);
    EXPECT_EQ(to_ply_string(back, {"lambda 1"}), first);
    EXPECT_EQ(back.has_normals(), c.has_normals());
    EXPECT_EQ(back.has_timestamps(), c.has_timestamps());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((back.points[i] - c.points[i]).norm(), 1e-6 * (1 + c.points[i].norm()));
  }
}

TEST(Ply, FileRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "tactex_ply_test";
  std::filesystem::create_directories(dir);
  PointCloud c;
  c.points = {Point3(1.5, -2.25, 3), Point3(0.1, 0.2, 0.3)};
  c.timestamps = std::vector<std::int64_t>{4, 5};
  write_ply(c, dir / "c.ply", {"lambda 1"});
  const auto back = read_ply(dir / "c.ply");
  EXPECT_EQ(back.points, c.points);
  EXPECT_EQ(*back.timestamps, *c.timestamps);
  EXPECT_EQ(ply_comments(read_file(dir / "c.ply")), std::vector<std::string>{"lambda 1"});
  EXPECT_THROW(read_ply(dir / "missing.ply"), IoError);
  EXPECT_THROW(from_ply_string("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nend_header\n1\n"), IoError);
  std::filesystem::remove_all(dir);
}
