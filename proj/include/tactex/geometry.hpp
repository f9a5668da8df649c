#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tactex {

/// Cartesian position in millimeters.
using Point3 = Eigen::Vector3d;

/// Direction with unit L2 norm (checked to 1e-9 on construction).
class UnitVec3 {
 public:
  UnitVec3() : v_(0.0, 0.0, 1.0) {}
  explicit UnitVec3(const Eigen::Vector3d& v);

  /// Normalizes `v`; throws InvalidArgument on a zero vector.
  static UnitVec3 normalized(const Eigen::Vector3d& v);

  const Eigen::Vector3d& vec() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  UnitVec3 operator-() const { return UnitVec3(-v_); }

 private:
  Eigen::Vector3d v_;
};

/// Rigid transform, applied as p -> R p + t.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_translation(const Eigen::Vector3d& t);
  static Pose from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                              const Eigen::Vector3d& t = Eigen::Vector3d::Zero());

  /// Orthonormal with determinant +1, within `tol`.
  bool is_valid(double tol = 1e-9) const;

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation * v; }
  Pose inverse() const;

  /// (this * other).apply(p) == this->apply(other.apply(p))
  Pose operator*(const Pose& other) const;
};

/// Ordered point set with optional per-point normals and contact sequence indices.
struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<Eigen::Vector3d>> normals;
  std::optional<std::vector<std::int64_t>> timestamps;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.has_value(); }
  bool has_timestamps() const { return timestamps.has_value(); }

  /// Throws InvalidArgument when attribute lengths, normal norms or timestamp
  /// ordering break the invariants.
  void validate() const;

  /// Appends `other`; attribute presence must match unless this cloud is empty.
  void append(const PointCloud& other);

  Point3 centroid() const;
};

/// Recorded per-sample normalization: p_n = (p - mean) / (lambda * sigma).
struct NormalizationParams {
  double lambda = 1.0;
  Point3 mean = Point3::Zero();
  double sigma = 1.0;

  double scale() const { return lambda * sigma; }
};

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

/// Centers the cloud and divides by lambda times the standard deviation of
/// the centered point norms.
std::pair<PointCloud, NormalizationParams> normalize_cloud(const PointCloud& cloud,
                                                           double lambda = 1.0);

PointCloud denormalize_cloud(const PointCloud& cloud, const NormalizationParams& params);

/// Population standard deviation of the L2 norms of `points - mean`.
double norm_sigma(std::span<const Point3> points, const Point3& mean);

/// Symmetric mean of unsquared nearest-neighbor distances:
/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).
double chamfer_distance(const PointCloud& a, const PointCloud& b);

/// Chamfer distance divided by a reference scale (usually `reference_scale`
/// of the ground-truth cloud), yielding a dimensionless value.
double normalized_chamfer(const PointCloud& a, const PointCloud& b, double scale);

/// Scale used to make Chamfer values dimensionless: lambda times the RMS
/// distance of the points from their centroid.
double reference_scale(const PointCloud& cloud, double lambda = 1.0);

/// Distance from `p` to its nearest point in `measured`.
double coverage_distance(const Point3& p, const PointCloud& measured);

/// Number of distinct occupied voxels times resolution^3. Voxel index is
/// floor(coordinate / resolution) per axis.
double voxel_volume(const PointCloud& cloud, double resolution_mm = 1.0);

/// PCA normals over the k nearest neighbors, oriented away from the centroid.
PointCloud estimate_normals(const PointCloud& cloud, std::size_t k = 16);

/// Exact rotation-vector (log map) of a rotation matrix.
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r);
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w);

/// Any unit vector orthogonal to `n`.
Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& n);

}  // namespace tactex
