#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/geometry.hpp"

namespace tactex {

enum class ShapeKind { Ball, Box, Cylinder };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& s);

/// Parametric object with its pose (object frame -> base frame).
///
/// `dims` depends on `kind`:
///   Ball     (rx, ry, rz) semi-axes of an axis-aligned ellipsoid
///   Box      (w, h, l) full edge lengths along x, y, z
///   Cylinder (rx, ry, h) elliptic cross-section semi-axes, height along z
struct PrimitiveShape {
  ShapeKind kind = ShapeKind::Ball;
  Eigen::Vector3d dims = Eigen::Vector3d::Constant(30.0);
  Pose pose;

  static PrimitiveShape ball(double rx, double ry, double rz, const Pose& pose = {});
  static PrimitiveShape sphere(double r, const Pose& pose = {}) { return ball(r, r, r, pose); }
  static PrimitiveShape box(double w, double h, double l, const Pose& pose = {});
  static PrimitiveShape cylinder(double rx, double ry, double h, const Pose& pose = {});

  /// Throws InvalidArgument unless every dimension is positive and the pose is valid.
  void validate() const;

  /// Radius of a sphere about the pose origin enclosing the shape.
  double bounding_radius() const;
  double surface_area() const;
  double volume() const;
};

/// Signed distance in mm: negative inside, zero on the surface. Exact for
/// every class (ellipse and ellipsoid distances use a bracketed root solve).
double signed_distance(const PrimitiveShape& shape, const Point3& p);

/// Nearest point on the surface.
Point3 closest_surface_point(const PrimitiveShape& shape, const Point3& p);

/// Outward unit normal for a point near the surface. On box edges and
/// corners the face with the largest |coordinate| / half-extent wins (lowest
/// axis on exact ties); on cylinder rims the side with the larger distance
/// term wins.
UnitVec3 surface_normal(const PrimitiveShape& shape, const Point3& p);

/// Area-uniform surface sample with analytic normals; deterministic in `seed`.
PointCloud sample_surface(const PrimitiveShape& shape, std::size_t n, std::uint64_t seed);

struct SuiteEntry {
  std::string id;
  std::string category;   // ball | box | cylinder
  std::string variation;  // small | big | dr
  PrimitiveShape shape;
  Eigen::Vector3d rotation_axis = Eigen::Vector3d::UnitZ();
  double rotation_deg = 0.0;
};

/// Ordered object suite, normally the nine shapes of `default_suite`.
struct ObjectSuite {
  int schema_version = 1;
  std::vector<SuiteEntry> objects;

  const SuiteEntry& find(const std::string& id) const;
};

/// Ball {30, 45, (30,30,45)}, Box {60, 90, (60,60,90)},
/// Cylinder {(25,80), (37.5,120), (25,37.5,80)}; D&R variants rotated 45 deg
/// about the base z axis.
ObjectSuite default_suite();

nlohmann::json suite_to_json(const ObjectSuite& suite);
ObjectSuite suite_from_json(const nlohmann::json& j);
ObjectSuite load_suite(const std::filesystem::path& path);
void save_suite(const ObjectSuite& suite, const std::filesystem::path& path);

nlohmann::json shape_to_json(const PrimitiveShape& shape);
PrimitiveShape shape_from_json(const nlohmann::json& j);
nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

namespace detail {
/// Distance from (y0, y1) to the ellipse (x/e0)^2 + (y/e1)^2 = 1 with
/// e0 >= e1 > 0 and y0, y1 >= 0. Writes the closest point.
double distance_point_ellipse(double e0, double e1, double y0, double y1, double& x0, double& x1);
/// Same for an ellipsoid with e0 >= e1 >= e2 > 0 in the first octant.
double distance_point_ellipsoid(double e0, double e1, double e2, double y0, double y1, double y2,
                                double& x0, double& x1, double& x2);
}  // namespace detail

}  // namespace tactex
