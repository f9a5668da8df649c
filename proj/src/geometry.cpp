#include "tactex/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "tactex/errors.hpp"
#include "tactex/kdtree.hpp"

namespace tactex {

UnitVec3::UnitVec3(const Eigen::Vector3d& v) : v_(v) {
  if (std::abs(v.norm() - 1.0) > 1e-9) throw InvalidArgument("UnitVec3 requires a unit vector");
}

UnitVec3 UnitVec3::normalized(const Eigen::Vector3d& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("cannot normalize a zero vector");
  return UnitVec3(v / n);
}

Pose Pose::from_translation(const Eigen::Vector3d& t) {
  Pose p;
  p.translation = t;
  return p;
}

Pose Pose::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad, const Eigen::Vector3d& t) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  p.translation = t;
  return p;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.transpose();
  p.translation = -(p.rotation * translation);
  return p;
}

Pose Pose::operator*(const Pose& other) const {
  Pose p;
  p.rotation = rotation * other.rotation;
  p.translation = rotation * other.translation + translation;
  return p;
}

void PointCloud::validate() const {
  if (normals) {
    if (normals->size() != points.size()) throw InvalidArgument("normals length differs from points");
    // 1e-6 admits normals that went through a 9-digit text round trip
    for (const auto& n : *normals)
      if (std::abs(n.norm() - 1.0) > 1e-6) throw InvalidArgument("normal is not unit length");
  }
  if (timestamps) {
    if (timestamps->size() != points.size()) throw InvalidArgument("timestamps length differs from points");
    if (!std::is_sorted(timestamps->begin(), timestamps->end()))
      throw InvalidArgument("timestamps must be non-decreasing");
  }
}

void PointCloud::append(const PointCloud& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  if (has_normals() != other.has_normals() || has_timestamps() != other.has_timestamps())
    throw InvalidArgument("cannot append clouds with different attributes");
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (normals) normals->insert(normals->end(), other.normals->begin(), other.normals->end());
  if (timestamps) timestamps->insert(timestamps->end(), other.timestamps->begin(), other.timestamps->end());
}

Point3 PointCloud::centroid() const {
  if (points.empty()) throw EmptyCloud("centroid of an empty cloud");
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = pose.apply(p);
  if (out.normals)
    for (auto& n : *out.normals) n = pose.rotate(n);
  return out;
}

double norm_sigma(std::span<const Point3> points, const Point3& mean) {
  if (points.empty()) return 0.0;
  std::vector<double> norms;
  norms.reserve(points.size());
  for (const auto& p : points) norms.push_back((p - mean).norm());
  const double mu = std::accumulate(norms.begin(), norms.end(), 0.0) / static_cast<double>(norms.size());
  double var = 0.0;
  for (double n : norms) var += (n - mu) * (n - mu);
  return std::sqrt(var / static_cast<double>(norms.size()));
}

std::pair<PointCloud, NormalizationParams> normalize_cloud(const PointCloud& cloud, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  if (cloud.size() < 2) throw DegenerateCloud("normalization needs at least 2 points");
  const Point3 mean = cloud.centroid();
  double spread = 0.0;
  for (const auto& p : cloud.points) spread = std::max(spread, (p - mean).norm());
  if (spread == 0.0) throw DegenerateCloud("all points coincide");
  const double sigma = norm_sigma(cloud.points, mean);
  // sigma relative to the cloud extent; exact zero is unreachable in floating point
  if (sigma <= 1e-12 * spread) throw NormalizationUndefined("standard deviation of point norms is zero");

  NormalizationParams params{lambda, mean, sigma};
  PointCloud out = cloud;
  const double s = params.scale();
  for (auto& p : out.points) p = (p - mean) / s;
  return {std::move(out), params};
}

PointCloud denormalize_cloud(const PointCloud& cloud, const NormalizationParams& params) {
  PointCloud out = cloud;
  const double s = params.scale();
  for (auto& p : out.points) p = p * s + params.mean;
  return out;
}

namespace {

double directed_mean(const PointCloud& from, const KdTree& to) {
  double sum = 0.0;
  for (const auto& p : from.points) sum += to.nearest(p).distance;
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw EmptyCloud("chamfer distance needs two non-empty clouds");
  const KdTree ta(a.points), tb(b.points);
  // fixed evaluation order keeps the result bitwise symmetric
  const double ab = directed_mean(a, tb);
  const double ba = directed_mean(b, ta);
  return 0.5 * (std::min(ab, ba) + std::max(ab, ba));
}

double normalized_chamfer(const PointCloud& a, const PointCloud& b, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("chamfer scale must be positive");
  return chamfer_distance(a, b) / scale;
}

double reference_scale(const PointCloud& cloud, double lambda) {
  const Point3 c = cloud.centroid();
  double ss = 0.0;
  for (const auto& p : cloud.points) ss += (p - c).squaredNorm();
  const double rms = std::sqrt(ss / static_cast<double>(cloud.size()));
  if (!(rms > 0.0)) throw DegenerateCloud("reference scale of a single-point cloud");
  return lambda * rms;
}

double coverage_distance(const Point3& p, const PointCloud& measured) {
  if (measured.empty()) throw EmptyCloud("coverage distance against an empty cloud");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : measured.points) best = std::min(best, squared_distance(p, q));
  return std::sqrt(best);
}

double voxel_volume(const PointCloud& cloud, double resolution_mm) {
  if (!(resolution_mm > 0.0)) throw InvalidArgument("voxel resolution must be positive");
  std::set<std::tuple<long long, long long, long long>> occupied;
  for (const auto& p : cloud.points) {
    occupied.emplace(static_cast<long long>(std::floor(p.x() / resolution_mm)),
                     static_cast<long long>(std::floor(p.y() / resolution_mm)),
                     static_cast<long long>(std::floor(p.z() / resolution_mm)));
  }
  return static_cast<double>(occupied.size()) * resolution_mm * resolution_mm * resolution_mm;
}

PointCloud estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (k < 3) throw InvalidArgument("estimate_normals needs k >= 3");
  if (cloud.size() < k + 1) throw TooFewPoints("estimate_normals needs at least k+1 points");
  const KdTree tree(cloud.points);
  const Point3 centroid = cloud.centroid();

  PointCloud out = cloud;
  std::vector<Eigen::Vector3d> normals;
  normals.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    // k neighbors besides the query point itself
    const auto nbrs = tree.knn(p, k + 1);
    Point3 mean = Point3::Zero();
    for (const auto& n : nbrs) mean += tree.point(n.index);
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double extent = 0.0;
    for (const auto& n : nbrs) {
      const Eigen::Vector3d d = tree.point(n.index) - mean;
      cov += d * d.transpose();
      extent = std::max(extent, d.norm());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const auto& ev = eig.eigenvalues();
    // a plane needs two non-vanishing principal directions
    if (extent == 0.0 || ev[1] <= 1e-12 * extent * extent)
      throw DegenerateNeighborhood("neighborhood does not span a surface patch");
    Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    if (n.dot(p - centroid) < 0.0) n = -n;
    normals.push_back(n);
  }
  out.normals = std::move(normals);
  return out;
}

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& n) {
  const Eigen::Vector3d helper = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  return n.cross(helper).normalized();
}

}  // namespace tactex
