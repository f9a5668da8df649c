#include "tactex/primitives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "tactex/errors.hpp"
#include "tactex/ply.hpp"
#include "tactex/util.hpp"

namespace tactex {

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Ball: return "ball";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "ball") return ShapeKind::Ball;
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  throw InvalidArgument(fmt::format("unknown shape kind '{}'", s));
}

PrimitiveShape PrimitiveShape::ball(double rx, double ry, double rz, const Pose& pose) {
  return {ShapeKind::Ball, {rx, ry, rz}, pose};
}
PrimitiveShape PrimitiveShape::box(double w, double h, double l, const Pose& pose) {
  return {ShapeKind::Box, {w, h, l}, pose};
}
PrimitiveShape PrimitiveShape::cylinder(double rx, double ry, double h, const Pose& pose) {
  return {ShapeKind::Cylinder, {rx, ry, h}, pose};
}

void PrimitiveShape::validate() const {
  if (!(dims.minCoeff() > 0.0) || !dims.allFinite()) throw InvalidArgument("shape dimensions must be positive");
  if (!pose.is_valid(1e-6)) throw InvalidArgument("shape pose is not a rigid transform");
}

double PrimitiveShape::bounding_radius() const {
  switch (kind) {
    case ShapeKind::Ball: return dims.maxCoeff();
    case ShapeKind::Box: return 0.5 * dims.norm();
    case ShapeKind::Cylinder: return std::hypot(std::max(dims.x(), dims.y()), 0.5 * dims.z());
  }
  return 0.0;
}

namespace {

double ellipse_perimeter(double a, double b) {
  // Ramanujan's second approximation; relative error < 1e-9 for the aspect
  // ratios used here
  const double h = (a - b) * (a - b) / ((a + b) * (a + b));
  return std::numbers::pi * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

double ellipsoid_area(double a, double b, double c) {
  // Knud Thomsen approximation (< 1.1% error); only used for weighting
  constexpr double p = 1.6075;
  return 4.0 * std::numbers::pi *
         std::pow((std::pow(a * b, p) + std::pow(a * c, p) + std::pow(b * c, p)) / 3.0, 1.0 / p);
}

}  // namespace

double PrimitiveShape::surface_area() const {
  switch (kind) {
    case ShapeKind::Ball: return ellipsoid_area(dims.x(), dims.y(), dims.z());
    case ShapeKind::Box: return 2.0 * (dims.x() * dims.y() + dims.y() * dims.z() + dims.x() * dims.z());
    case ShapeKind::Cylinder:
      return ellipse_perimeter(dims.x(), dims.y()) * dims.z() + 2.0 * std::numbers::pi * dims.x() * dims.y();
  }
  return 0.0;
}

double PrimitiveShape::volume() const {
  switch (kind) {
    case ShapeKind::Ball: return 4.0 / 3.0 * std::numbers::pi * dims.prod();
    case ShapeKind::Box: return dims.prod();
    case ShapeKind::Cylinder: return std::numbers::pi * dims.prod();
  }
  return 0.0;
}

namespace detail {

namespace {

double robust_length(double a, double b) {
  return std::hypot(a, b);
}
double robust_length(double a, double b, double c) {
  return std::hypot(a, b, c);
}

// Bisection on the monotone root function of the ellipse distance problem.
double ellipse_root(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, z1) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 2200; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double ratio0 = n0 / (s + r0);
    const double ratio1 = z1 / (s + 1.0);
    g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
    if (g > 0.0) s0 = s;
    else if (g < 0.0) s1 = s;
    else break;
  }
  return s;
}

double ellipsoid_root(double r0, double r1, double z0, double z1, double z2, double g) {
  const double n0 = r0 * z0;
  const double n1 = r1 * z1;
  double s0 = z2 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, n1, z2) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 2200; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double ratio0 = n0 / (s + r0);
    const double ratio1 = n1 / (s + r1);
    const double ratio2 = z2 / (s + 1.0);
    g = ratio0 * ratio0 + ratio1 * ratio1 + ratio2 * ratio2 - 1.0;
    if (g > 0.0) s0 = s;
    else if (g < 0.0) s1 = s;
    else break;
  }
  return s;
}

}  // namespace

double distance_point_ellipse(double e0, double e1, double y0, double y1, double& x0, double& x1) {
  if (y1 > 0.0) {
    if (y0 > 0.0) {
      const double z0 = y0 / e0, z1 = y1 / e1;
      const double g = z0 * z0 + z1 * z1 - 1.0;
      if (g != 0.0) {
        const double r0 = (e0 / e1) * (e0 / e1);
        const double sbar = ellipse_root(r0, z0, z1, g);
        x0 = r0 * y0 / (sbar + r0);
        x1 = y1 / (sbar + 1.0);
        return std::hypot(x0 - y0, x1 - y1);
      }
      x0 = y0;
      x1 = y1;
      return 0.0;
    }
    x0 = 0.0;
    x1 = e1;
    return std::abs(y1 - e1);
  }
  const double numer0 = e0 * y0, denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    x0 = e0 * xde0;
    x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xde0 * xde0));
    return std::hypot(x0 - y0, x1);
  }
  x0 = e0;
  x1 = 0.0;
  return std::abs(y0 - e0);
}

double distance_point_ellipsoid(double e0, double e1, double e2, double y0, double y1, double y2, double& x0,
                                double& x1, double& x2) {
  if (y2 > 0.0) {
    if (y1 > 0.0) {
      if (y0 > 0.0) {
        const double z0 = y0 / e0, z1 = y1 / e1, z2 = y2 / e2;
        const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
        if (g != 0.0) {
          const double r0 = (e0 / e2) * (e0 / e2), r1 = (e1 / e2) * (e1 / e2);
          const double sbar = ellipsoid_root(r0, r1, z0, z1, z2, g);
          x0 = r0 * y0 / (sbar + r0);
          x1 = r1 * y1 / (sbar + r1);
          x2 = y2 / (sbar + 1.0);
          return std::hypot(x0 - y0, x1 - y1, x2 - y2);
        }
        x0 = y0;
        x1 = y1;
        x2 = y2;
        return 0.0;
      }
      x0 = 0.0;
      return distance_point_ellipse(e1, e2, y1, y2, x1, x2);
    }
    if (y0 > 0.0) {
      x1 = 0.0;
      return distance_point_ellipse(e0, e2, y0, y2, x0, x2);
    }
    x0 = 0.0;
    x1 = 0.0;
    x2 = e2;
    return std::abs(y2 - e2);
  }
  const double denom0 = e0 * e0 - e2 * e2, denom1 = e1 * e1 - e2 * e2;
  const double numer0 = e0 * y0, numer1 = e1 * y1;
  if (numer0 < denom0 && numer1 < denom1) {
    const double xde0 = numer0 / denom0, xde1 = numer1 / denom1;
    const double discr = 1.0 - xde0 * xde0 - xde1 * xde1;
    if (discr > 0.0) {
      x0 = e0 * xde0;
      x1 = e1 * xde1;
      x2 = e2 * std::sqrt(discr);
      return std::hypot(x0 - y0, x1 - y1, x2);
    }
  }
  x2 = 0.0;
  return distance_point_ellipse(e0, e1, y0, y1, x0, x1);
}

}  // namespace detail

namespace {

// Closest point and unsigned distance to an axis-aligned ellipsoid at the
// origin, for any query point.
double ellipsoid_closest(const Eigen::Vector3d& radii, const Eigen::Vector3d& q, Eigen::Vector3d& closest) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return radii[a] > radii[b]; });
  std::array<double, 3> e{}, y{}, x{};
  for (int i = 0; i < 3; ++i) {
    e[i] = radii[order[i]];
    y[i] = std::abs(q[order[i]]);
  }
  double d = 0.0;
  if (e[0] == e[1] && e[1] == e[2]) {
    // sphere: closed form, also robust at the center
    const double n = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
    if (n == 0.0) {
      x = {0.0, 0.0, e[2]};
    } else {
      for (int i = 0; i < 3; ++i) x[i] = y[i] * e[0] / n;
    }
    d = std::abs(n - e[0]);
  } else {
    d = detail::distance_point_ellipsoid(e[0], e[1], e[2], y[0], y[1], y[2], x[0], x[1], x[2]);
  }
  for (int i = 0; i < 3; ++i) closest[order[i]] = std::copysign(x[i], q[order[i]]);
  return d;
}

double ellipsoid_sdf_local(const Eigen::Vector3d& radii, const Eigen::Vector3d& q, Eigen::Vector3d* closest) {
  Eigen::Vector3d c;
  const double d = ellipsoid_closest(radii, q, c);
  if (closest) *closest = c;
  const double level = q.cwiseQuotient(radii).squaredNorm();
  return level < 1.0 ? -d : d;
}

// Signed 2D distance to the ellipse (x/a)^2 + (y/b)^2 = 1 with closest point.
double ellipse_sdf_2d(double a, double b, double px, double py, double& cx, double& cy) {
  const bool swap = a < b;
  const double e0 = swap ? b : a, e1 = swap ? a : b;
  const double y0 = std::abs(swap ? py : px), y1 = std::abs(swap ? px : py);
  double x0 = 0.0, x1 = 0.0, d = 0.0;
  if (e0 == e1) {
    const double n = std::hypot(y0, y1);
    if (n == 0.0) {
      x0 = 0.0;
      x1 = e1;
    } else {
      x0 = y0 * e0 / n;
      x1 = y1 * e0 / n;
    }
    d = std::abs(n - e0);
  } else {
    d = detail::distance_point_ellipse(e0, e1, y0, y1, x0, x1);
  }
  cx = std::copysign(swap ? x1 : x0, px);
  cy = std::copysign(swap ? x0 : x1, py);
  const double level = (px / a) * (px / a) + (py / b) * (py / b);
  return level < 1.0 ? -d : d;
}

Eigen::Vector3d box_half(const PrimitiveShape& s) { return 0.5 * s.dims; }

double box_sdf_local(const Eigen::Vector3d& h, const Eigen::Vector3d& q) {
  const Eigen::Vector3d d = q.cwiseAbs() - h;
  const double outside = d.cwiseMax(0.0).norm();
  const double inside = std::min(d.maxCoeff(), 0.0);
  return outside + inside;
}

Eigen::Vector3d box_closest_local(const Eigen::Vector3d& h, const Eigen::Vector3d& q) {
  const Eigen::Vector3d d = q.cwiseAbs() - h;
  if (d.maxCoeff() > 0.0) return q.cwiseMax(-h).cwiseMin(h);
  int axis = 0;
  d.maxCoeff(&axis);
  Eigen::Vector3d c = q;
  c[axis] = std::copysign(h[axis], q[axis]);
  return c;
}

Eigen::Vector3d box_normal_local(const Eigen::Vector3d& h, const Eigen::Vector3d& q) {
  int best = 0;
  double best_ratio = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double r = std::abs(q[i]) / h[i];
    if (r > best_ratio) {
      best_ratio = r;
      best = i;
    }
  }
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n[best] = q[best] < 0.0 ? -1.0 : 1.0;
  return n;
}

struct CylinderQuery {
  double d_side;  // signed 2D distance to the elliptic cross-section
  double d_cap;   // |z| - h/2
  double cx, cy;  // closest cross-section boundary point
};

CylinderQuery cylinder_query(const Eigen::Vector3d& dims, const Eigen::Vector3d& q) {
  CylinderQuery r{};
  r.d_side = ellipse_sdf_2d(dims.x(), dims.y(), q.x(), q.y(), r.cx, r.cy);
  r.d_cap = std::abs(q.z()) - 0.5 * dims.z();
  return r;
}

double cylinder_sdf_local(const Eigen::Vector3d& dims, const Eigen::Vector3d& q) {
  const auto c = cylinder_query(dims, q);
  return std::min(std::max(c.d_side, c.d_cap), 0.0) + std::hypot(std::max(c.d_side, 0.0), std::max(c.d_cap, 0.0));
}

Eigen::Vector3d cylinder_closest_local(const Eigen::Vector3d& dims, const Eigen::Vector3d& q) {
  const auto c = cylinder_query(dims, q);
  const double hz = 0.5 * dims.z();
  const double cap_z = std::copysign(hz, q.z());
  if (c.d_side > 0.0 && c.d_cap > 0.0) return {c.cx, c.cy, cap_z};
  if (c.d_side > 0.0) return {c.cx, c.cy, q.z()};
  if (c.d_cap > 0.0) return {q.x(), q.y(), cap_z};
  if (c.d_side > c.d_cap) return {c.cx, c.cy, q.z()};
  return {q.x(), q.y(), cap_z};
}

Eigen::Vector3d cylinder_normal_local(const Eigen::Vector3d& dims, const Eigen::Vector3d& q) {
  const auto c = cylinder_query(dims, q);
  if (c.d_cap > c.d_side) return {0.0, 0.0, q.z() < 0.0 ? -1.0 : 1.0};
  const double a = dims.x(), b = dims.y();
  Eigen::Vector3d n(c.cx / (a * a), c.cy / (b * b), 0.0);
  if (n.squaredNorm() == 0.0) n = Eigen::Vector3d::UnitX();
  return n.normalized();
}

Eigen::Vector3d to_local(const PrimitiveShape& s, const Point3& p) {
  return s.pose.rotation.transpose() * (p - s.pose.translation);
}

}  // namespace

double signed_distance(const PrimitiveShape& shape, const Point3& p) {
  const Eigen::Vector3d q = to_local(shape, p);
  switch (shape.kind) {
    case ShapeKind::Ball: return ellipsoid_sdf_local(shape.dims, q, nullptr);
    case ShapeKind::Box: return box_sdf_local(box_half(shape), q);
    case ShapeKind::Cylinder: return cylinder_sdf_local(shape.dims, q);
  }
  return 0.0;
}

Point3 closest_surface_point(const PrimitiveShape& shape, const Point3& p) {
  const Eigen::Vector3d q = to_local(shape, p);
  Eigen::Vector3d c;
  switch (shape.kind) {
    case ShapeKind::Ball: ellipsoid_sdf_local(shape.dims, q, &c); break;
    case ShapeKind::Box: c = box_closest_local(box_half(shape), q); break;
    case ShapeKind::Cylinder: c = cylinder_closest_local(shape.dims, q); break;
  }
  return shape.pose.apply(c);
}

UnitVec3 surface_normal(const PrimitiveShape& shape, const Point3& p) {
  const Eigen::Vector3d q = to_local(shape, p);
  Eigen::Vector3d n;
  switch (shape.kind) {
    case ShapeKind::Ball: {
      Eigen::Vector3d c;
      ellipsoid_sdf_local(shape.dims, q, &c);
      n = c.cwiseQuotient(shape.dims.cwiseProduct(shape.dims));
      break;
    }
    case ShapeKind::Box: n = box_normal_local(box_half(shape), q); break;
    case ShapeKind::Cylinder: n = cylinder_normal_local(shape.dims, q); break;
  }
  return UnitVec3::normalized(shape.pose.rotate(n));
}

PointCloud sample_surface(const PrimitiveShape& shape, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_surface needs n >= 1");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Vector3d& d = shape.dims;

  // one generator per point: a rejected draw never shifts later points, so
  // nearby shapes give nearby samples
  std::mt19937_64 rng;
  auto draw = [&](Point3& x, Eigen::Vector3d& nn) {
    switch (shape.kind) {
      case ShapeKind::Ball: {
        // map the unit sphere and accept with the local area-stretch factor
        const double stretch_max = 1.0 / d.minCoeff();
        while (true) {
          Eigen::Vector3d u(gauss(rng), gauss(rng), gauss(rng));
          const double un = u.norm();
          if (un == 0.0) continue;
          u /= un;
          const double stretch = u.cwiseQuotient(d).norm();
          if (uni(rng) * stretch_max > stretch) continue;
          x = u.cwiseProduct(d);
          nn = x.cwiseQuotient(d.cwiseProduct(d)).normalized();
          return;
        }
      }
      case ShapeKind::Box: {
        const Eigen::Vector3d h = 0.5 * d;
        const std::array<double, 3> face_area{d.y() * d.z(), d.x() * d.z(), d.x() * d.y()};
        const double total = 2.0 * (face_area[0] + face_area[1] + face_area[2]);
        double pick = uni(rng) * total;
        int face = 0;
        for (; face < 5; ++face) {
          const double a = face_area[face / 2];
          if (pick < a) break;
          pick -= a;
        }
        const int axis = face / 2;
        const double sign = (face % 2 == 0) ? 1.0 : -1.0;
        for (int i = 0; i < 3; ++i) x[i] = (2.0 * uni(rng) - 1.0) * h[i];
        x[axis] = sign * h[axis];
        nn = Eigen::Vector3d::Zero();
        nn[axis] = sign;
        return;
      }
      case ShapeKind::Cylinder: {
        const double a = d.x(), b = d.y(), hz = 0.5 * d.z();
        const double side = ellipse_perimeter(a, b) * d.z();
        const double cap = std::numbers::pi * a * b;
        const double speed_max = std::max(a, b);
        const double pick = uni(rng) * (side + 2.0 * cap);
        if (pick < side) {
          while (true) {
            const double t = 2.0 * std::numbers::pi * uni(rng);
            const double speed = std::hypot(a * std::sin(t), b * std::cos(t));
            if (uni(rng) * speed_max > speed) continue;
            const double z = (2.0 * uni(rng) - 1.0) * hz;
            const double ct = std::cos(t), st = std::sin(t);
            x = {a * ct, b * st, z};
            nn = Eigen::Vector3d(ct / a, st / b, 0.0).normalized();
            return;
          }
        }
        const double sign = pick < side + cap ? 1.0 : -1.0;
        const double r = std::sqrt(uni(rng));
        const double t = 2.0 * std::numbers::pi * uni(rng);
        x = {a * r * std::cos(t), b * r * std::sin(t), sign * hz};
        nn = {0.0, 0.0, sign};
        return;
      }
    }
  };

  PointCloud cloud;
  cloud.points.resize(n);
  cloud.normals.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng.seed(derive_seed(seed, {i}));
    uni.reset();
    gauss.reset();
    draw(cloud.points[i], (*cloud.normals)[i]);
  }
  return transform_cloud(cloud, shape.pose);
}

const SuiteEntry& ObjectSuite::find(const std::string& id) const {
  for (const auto& e : objects)
    if (e.id == id) return e;
  throw InvalidArgument(fmt::format("no object '{}' in suite", id));
}

namespace {

SuiteEntry make_entry(std::string id, std::string category, std::string variation, PrimitiveShape shape,
                      double rotation_deg) {
  SuiteEntry e;
  e.id = std::move(id);
  e.category = std::move(category);
  e.variation = std::move(variation);
  e.rotation_deg = rotation_deg;
  e.rotation_axis = Eigen::Vector3d::UnitZ();
  shape.pose = Pose::from_axis_angle(e.rotation_axis, rotation_deg * std::numbers::pi / 180.0);
  e.shape = shape;
  return e;
}

}  // namespace

ObjectSuite default_suite() {
  ObjectSuite s;
  s.objects = {
      make_entry("ball_small", "ball", "small", PrimitiveShape::ball(30, 30, 30), 0.0),
      make_entry("ball_big", "ball", "big", PrimitiveShape::ball(45, 45, 45), 0.0),
      make_entry("ball_dr", "ball", "dr", PrimitiveShape::ball(30, 30, 45), 45.0),
      make_entry("box_small", "box", "small", PrimitiveShape::box(60, 60, 60), 0.0),
      make_entry("box_big", "box", "big", PrimitiveShape::box(90, 90, 90), 0.0),
      make_entry("box_dr", "box", "dr", PrimitiveShape::box(60, 60, 90), 45.0),
      make_entry("cylinder_small", "cylinder", "small", PrimitiveShape::cylinder(25, 25, 80), 0.0),
      make_entry("cylinder_big", "cylinder", "big", PrimitiveShape::cylinder(37.5, 37.5, 120), 0.0),
      make_entry("cylinder_dr", "cylinder", "dr", PrimitiveShape::cylinder(25, 37.5, 80), 45.0),
  };
  return s;
}

nlohmann::json pose_to_json(const Pose& pose) {
  const Eigen::Vector3d w = rotation_log(pose.rotation);
  return {{"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
          {"rotation_vector", {w.x(), w.y(), w.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  const auto t = j.at("translation").get<std::vector<double>>();
  const auto w = j.at("rotation_vector").get<std::vector<double>>();
  if (t.size() != 3 || w.size() != 3) throw ConfigError("pose needs 3-vectors");
  p.translation = {t[0], t[1], t[2]};
  p.rotation = rotation_exp({w[0], w[1], w[2]});
  return p;
}

nlohmann::json shape_to_json(const PrimitiveShape& shape) {
  return {{"kind", to_string(shape.kind)},
          {"dims", {shape.dims.x(), shape.dims.y(), shape.dims.z()}},
          {"pose", pose_to_json(shape.pose)}};
}

PrimitiveShape shape_from_json(const nlohmann::json& j) {
  PrimitiveShape s;
  s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
  const auto d = j.at("dims").get<std::vector<double>>();
  if (d.size() != 3) throw ConfigError("shape dims need 3 values");
  s.dims = {d[0], d[1], d[2]};
  if (j.contains("pose")) s.pose = pose_from_json(j.at("pose"));
  s.validate();
  return s;
}

nlohmann::json suite_to_json(const ObjectSuite& suite) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& e : suite.objects) {
    const auto& t = e.shape.pose.translation;
    objs.push_back({{"id", e.id},
                    {"category", e.category},
                    {"variation", e.variation},
                    {"kind", to_string(e.shape.kind)},
                    {"dims_mm", {e.shape.dims.x(), e.shape.dims.y(), e.shape.dims.z()}},
                    {"position_mm", {t.x(), t.y(), t.z()}},
                    {"rotation_axis", {e.rotation_axis.x(), e.rotation_axis.y(), e.rotation_axis.z()}},
                    {"rotation_deg", e.rotation_deg}});
  }
  return {{"schema_version", suite.schema_version}, {"objects", objs}};
}

ObjectSuite suite_from_json(const nlohmann::json& j) {
  ObjectSuite s;
  try {
    s.schema_version = j.at("schema_version").get<int>();
    if (s.schema_version != 1) throw ConfigError(fmt::format("unsupported suite schema {}", s.schema_version));
    for (const auto& o : j.at("objects")) {
      SuiteEntry e;
      e.id = o.at("id").get<std::string>();
      e.category = o.value("category", "");
      e.variation = o.value("variation", "");
      e.shape.kind = shape_kind_from_string(o.at("kind").get<std::string>());
      const auto d = o.at("dims_mm").get<std::vector<double>>();
      const auto t = o.value("position_mm", std::vector<double>{0.0, 0.0, 0.0});
      const auto ax = o.value("rotation_axis", std::vector<double>{0.0, 0.0, 1.0});
      if (d.size() != 3 || t.size() != 3 || ax.size() != 3) throw ConfigError("suite vectors need 3 values");
      e.shape.dims = {d[0], d[1], d[2]};
      e.rotation_axis = Eigen::Vector3d(ax[0], ax[1], ax[2]).normalized();
      e.rotation_deg = o.value("rotation_deg", 0.0);
      e.shape.pose = Pose::from_axis_angle(e.rotation_axis, e.rotation_deg * std::numbers::pi / 180.0,
                                           Eigen::Vector3d(t[0], t[1], t[2]));
      e.shape.validate();
      s.objects.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(fmt::format("malformed suite: {}", ex.what()));
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  return s;
}

ObjectSuite load_suite(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(fmt::format("{}: {}", path.string(), ex.what()));
  }
  return suite_from_json(j);
}

void save_suite(const ObjectSuite& suite, const std::filesystem::path& path) {
  write_file_atomic(path, suite_to_json(suite).dump(2) + "\n");
}

}  // namespace tactex
