#include "tactex/completion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <thread>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tactex/errors.hpp"
#include "tactex/ply.hpp"
#include "tactex/util.hpp"

namespace tactex {

namespace {

const double kSqrt2 = std::numbers::sqrt2;
constexpr double kFaceCos = 0.9659258262890683;  // 15 deg
constexpr double kMaxSpread = 50.0;  // fits larger than this many RMS radii of the cloud are rejected

using Vec10 = Eigen::Matrix<double, 10, 1>;
using Mat10 = Eigen::Matrix<double, 10, 10>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

std::vector<std::size_t> subsample(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  const std::size_t stride = std::max<std::size_t>(1, (n + cap - 1) / cap);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  return idx;
}

// Orientation reference that rotates with the cloud and depends only on its
// earliest points, so it stays put while later contacts are appended.
Eigen::Matrix3d reference_frame(const PointCloud& c) {
  const std::size_t m = std::min<std::size_t>(c.size(), 32);
  Point3 mean = Point3::Zero();
  for (std::size_t i = 0; i < m; ++i) mean += c.points[i];
  mean /= static_cast<double>(m);
  Eigen::Vector3d e1 = Eigen::Vector3d::Zero();
  if (c.has_normals())
    for (std::size_t i = 0; i < m; ++i) e1 += (*c.normals)[i];
  if (e1.norm() < 1e-6 * static_cast<double>(m)) e1 = c.points[0] - mean;
  if (e1.norm() < 1e-12) e1 = Eigen::Vector3d::UnitZ();
  e1.normalize();
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    Eigen::Vector3d d = c.points[i] - mean;
    d -= d.dot(e1) * e1;
    w += d / static_cast<double>(i + 1);
  }
  if (w.norm() < 1e-9) w = any_orthogonal(e1);
  const Eigen::Vector3d e2 = w.normalized();
  Eigen::Matrix3d f;
  f.col(0) = e1;
  f.col(1) = e2;
  f.col(2) = e1.cross(e2);
  return f;
}

// Sign of an unsigned axis, fixed by the first reference axis it is not
// orthogonal to.
Eigen::Vector3d orient(const Eigen::Vector3d& v, const Eigen::Matrix3d& f) {
  for (int k = 0; k < 3; ++k) {
    const double d = v.dot(f.col(k));
    if (std::abs(d) > 1e-9) return d < 0.0 ? Eigen::Vector3d(-v) : v;
  }
  return v;
}

// Unit vector orthogonal to `a`, taken from the reference frame.
Eigen::Vector3d reference_orthogonal(const Eigen::Vector3d& a, const Eigen::Matrix3d& f) {
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = f.col(k) - f.col(k).dot(a) * a;
    if (v.norm() > 0.1) return v.normalized();
  }
  return any_orthogonal(a);
}

void require_not_coplanar(const PointCloud& c, const std::vector<std::size_t>& idx) {
  Point3 mean = Point3::Zero();
  for (auto i : idx) mean += c.points[i];
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : idx) {
    const Eigen::Vector3d d = c.points[i] - mean;
    cov += d * d.transpose();
  }
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
  if (ev[0] <= 1e-10 * ev[2]) throw DegenerateConfiguration("points are coplanar");
}

PrimitiveShape posed(PrimitiveShape s, const Eigen::Matrix3d& r, const Point3& t) {
  s.pose.rotation = r;
  s.pose.translation = t;
  return s;
}

void require_bounded(const Eigen::Vector3d& dims, const PointCloud& c) {
  if (!(dims.minCoeff() > 0.0) || !(dims.maxCoeff() < kMaxSpread * reference_scale(c)) || !dims.allFinite())
    throw DegenerateConfiguration("fitted dimensions out of range");
}

// ---- sphere ----------------------------------------------------------------

PrimitiveShape fit_sphere(const PointCloud& c, const std::vector<std::size_t>& idx, const Eigen::Matrix3d& f) {
  require_not_coplanar(c, idx);
  Point3 center;
  double r = 0.0;
  if (c.has_normals()) {
    // p = c + r n for every contact
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
    Eigen::Vector3d nsum = Eigen::Vector3d::Zero();
    for (auto i : idx) {
      const Eigen::Vector3d& n = (*c.normals)[i];
      const Point3& p = c.points[i];
      a.topLeftCorner<3, 3>() += Eigen::Matrix3d::Identity();
      a.topRightCorner<3, 1>() += n;
      a.bottomLeftCorner<1, 3>() += n.transpose();
      a(3, 3) += 1.0;
      rhs.head<3>() += p;
      rhs(3) += n.dot(p);
      nsum += n;
    }
    const double m = static_cast<double>(idx.size());
    if (1.0 - (nsum / m).squaredNorm() < 1e-8) throw DegenerateConfiguration("contact normals are parallel");
    const Eigen::Vector4d x = a.ldlt().solve(rhs);
    center = x.head<3>();
    r = std::abs(x(3));
  } else {
    // |p|^2 = 2 c.p + (r^2 - |c|^2)
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
    for (auto i : idx) {
      const Point3& p = c.points[i];
      const Eigen::Vector4d row(2 * p.x(), 2 * p.y(), 2 * p.z(), 1.0);
      a += row * row.transpose();
      rhs += row * p.squaredNorm();
    }
    const Eigen::Vector4d x = a.ldlt().solve(rhs);
    center = x.head<3>();
    const double r2 = x(3) + center.squaredNorm();
    if (!(r2 > 0.0)) throw DegenerateConfiguration("algebraic sphere fit has no real radius");
    r = std::sqrt(r2);
  }
  // geometric refinement: Gauss-Newton on |p - c| - r
  for (int it = 0; it < 30; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (auto i : idx) {
      const Eigen::Vector3d d = c.points[i] - center;
      const double dn = d.norm();
      if (dn == 0.0) continue;
      Eigen::Vector4d j;
      j.head<3>() = -d / dn;
      j(3) = -1.0;
      jtj += j * j.transpose();
      jtr += j * (dn - r);
    }
    const Eigen::Vector4d step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    center += step.head<3>();
    r += step(3);
    if (step.norm() < 1e-14 * (1.0 + r)) break;
  }
  r = std::abs(r);
  require_bounded(Eigen::Vector3d::Constant(r), c);
  return posed(PrimitiveShape::sphere(r), f, center);
}

// ---- ellipsoid -------------------------------------------------------------

// Quadric coefficients (a11, a22, a33, sqrt2 a12, sqrt2 a13, sqrt2 a23, b, c):
// the scaling keeps the unit-norm constraint rotation invariant.
PrimitiveShape fit_ellipsoid(const PointCloud& c, const std::vector<std::size_t>& idx, const Eigen::Matrix3d& f) {
  require_not_coplanar(c, idx);
  Mat10 dtd = Mat10::Zero();
  for (auto i : idx) {
    const Point3& p = c.points[i];
    const double x = p.x(), y = p.y(), z = p.z();
    Vec10 q;
    q << x * x, y * y, z * z, kSqrt2 * x * y, kSqrt2 * x * z, kSqrt2 * y * z, x, y, z, 1.0;
    dtd += q * q.transpose();
    if (c.has_normals()) {
      Eigen::Matrix<double, 3, 10> g;
      g << 2 * x, 0, 0, kSqrt2 * y, kSqrt2 * z, 0, 1, 0, 0, 0,  //
          0, 2 * y, 0, kSqrt2 * x, 0, kSqrt2 * z, 0, 1, 0, 0,   //
          0, 0, 2 * z, 0, kSqrt2 * x, kSqrt2 * y, 0, 0, 1, 0;
      const Eigen::Vector3d& n = (*c.normals)[i];
      Eigen::Matrix3d nx;
      nx << 0, -n.z(), n.y(), n.z(), 0, -n.x(), -n.y(), n.x(), 0;
      const Eigen::Matrix<double, 3, 10> cr = nx * g;
      dtd += cr.transpose() * cr;
    }
  }
  const Vec10 th = Eigen::SelfAdjointEigenSolver<Mat10>(dtd).eigenvectors().col(0);
  Eigen::Matrix3d a;
  a << th(0), th(3) / kSqrt2, th(4) / kSqrt2, th(3) / kSqrt2, th(1), th(5) / kSqrt2, th(4) / kSqrt2,
      th(5) / kSqrt2, th(2);
  Eigen::Vector3d b = th.segment<3>(6);
  double c0 = th(9);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
  Eigen::Vector3d lam = eig.eigenvalues();
  if (lam(2) < 0.0) {
    a = -a, b = -b, c0 = -c0;
    eig.compute(a);
    lam = eig.eigenvalues();
  }
  if (!(lam(0) > 1e-9 * lam(2))) throw DegenerateConfiguration("quadric is not an ellipsoid");
  const Point3 center = -0.5 * a.ldlt().solve(b);
  const double k = center.dot(a * center) - c0;
  if (!(k > 0.0)) throw DegenerateConfiguration("quadric has no real points");
  Eigen::Vector3d semi;
  for (int i = 0; i < 3; ++i) semi(i) = std::sqrt(k / lam(i));
  require_bounded(semi, c);

  // canonical axes: equal semi-axes take their directions from the reference
  Eigen::Matrix3d v = eig.eigenvectors();
  auto close = [&](int i, int j) { return std::abs(semi(i) - semi(j)) <= 1e-6 * semi.maxCoeff(); };
  Eigen::Matrix3d r;
  if (close(0, 1) && close(1, 2)) {
    r = f;
  } else if (close(0, 1) || close(1, 2)) {
    const int lone = close(0, 1) ? 2 : 0;
    const int p0 = lone == 2 ? 0 : 1, p1 = lone == 2 ? 1 : 2;
    const Eigen::Vector3d ax = orient(v.col(lone), f);
    const Eigen::Vector3d u = reference_orthogonal(ax, f);
    r.col(lone) = ax;
    r.col(p0) = u;
    r.col(p1) = ax.cross(u);
    if (r.determinant() < 0.0) r.col(p1) = -r.col(p1);
  } else {
    r.col(0) = orient(v.col(0), f);
    r.col(1) = orient(v.col(1), f);
    r.col(2) = r.col(0).cross(r.col(1));
  }
  return posed(PrimitiveShape::ball(semi(0), semi(1), semi(2)), r, center);
}

// ---- cylinder --------------------------------------------------------------

struct Ellipse2 {
  Eigen::Vector2d center;
  Eigen::Vector2d semi;  // along axes.col(0), axes.col(1)
  Eigen::Matrix2d axes;
};

// Conic with gradient-parallel-to-normal rows; throws unless it is an ellipse.
Ellipse2 fit_ellipse(const std::vector<Eigen::Vector2d>& pts, const std::vector<Eigen::Vector2d>& nrm) {
  Mat6 dtd = Mat6::Zero();
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i].x(), y = pts[i].y();
    cov += (pts[i] - mean) * (pts[i] - mean).transpose();
    Vec6 q;
    q << x * x, y * y, kSqrt2 * x * y, x, y, 1.0;
    dtd += q * q.transpose();
    const double nx = nrm[i].x(), ny = nrm[i].y();
    Vec6 gx, gy;
    gx << 2 * x, 0, kSqrt2 * y, 1, 0, 0;
    gy << 0, 2 * y, kSqrt2 * x, 0, 1, 0;
    const Vec6 row = ny * gx - nx * gy;
    dtd += row * row.transpose();
  }
  const Eigen::Vector2d cev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  if (cev(0) <= 1e-8 * cev(1)) throw DegenerateConfiguration("cross-section points are collinear");
  const Vec6 th = Eigen::SelfAdjointEigenSolver<Mat6>(dtd).eigenvectors().col(0);
  Eigen::Matrix2d a;
  a << th(0), th(2) / kSqrt2, th(2) / kSqrt2, th(1);
  Eigen::Vector2d b = th.segment<2>(3);
  double c0 = th(5);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(a);
  Eigen::Vector2d lam = eig.eigenvalues();
  if (lam(1) < 0.0) {
    a = -a, b = -b, c0 = -c0;
    eig.compute(a);
    lam = eig.eigenvalues();
  }
  if (!(lam(0) > 1e-9 * lam(1))) throw DegenerateConfiguration("cross-section is not an ellipse");
  Ellipse2 e;
  e.center = -0.5 * a.ldlt().solve(b);
  const double k = e.center.dot(a * e.center) - c0;
  if (!(k > 0.0)) throw DegenerateConfiguration("cross-section has no real points");
  e.semi = {std::sqrt(k / lam(0)), std::sqrt(k / lam(1))};
  e.axes = eig.eigenvectors();
  return e;
}

PrimitiveShape fit_cylinder_axis(const PointCloud& c, const std::vector<std::size_t>& idx, const Eigen::Vector3d& axis,
                                 const Eigen::Matrix3d& f) {
  const Eigen::Vector3d a = orient(axis, f);
  const Eigen::Vector3d u = reference_orthogonal(a, f);
  const Eigen::Vector3d v = a.cross(u);
  std::vector<Eigen::Vector2d> pts, nrm;
  for (auto i : idx) {
    const Eigen::Vector3d& n = (*c.normals)[i];
    if (std::abs(n.dot(a)) >= 0.5) continue;
    const Point3& p = c.points[i];
    pts.emplace_back(p.dot(u), p.dot(v));
    nrm.push_back(Eigen::Vector2d(n.dot(u), n.dot(v)).normalized());
  }
  if (pts.size() < 6) throw DegenerateConfiguration("too few side contacts for this axis");
  const Ellipse2 e = fit_ellipse(pts, nrm);

  double hmin = std::numeric_limits<double>::infinity(), hmax = -hmin;
  double top = 0.0, bottom = 0.0;
  int ntop = 0, nbottom = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double h = c.points[i].dot(a);
    hmin = std::min(hmin, h);
    hmax = std::max(hmax, h);
    const double na = (*c.normals)[i].dot(a);
    if (na > kFaceCos) top += h, ++ntop;
    if (na < -kFaceCos) bottom += h, ++nbottom;
  }
  // an untouched cap sits at the farthest contact, but no closer than three
  // minor semi-axes to the other cap
  const double diameter = 3.0 * e.semi.minCoeff();
  double hi = ntop ? top / ntop : hmax;
  double lo = nbottom ? bottom / nbottom : hmin;
  if (ntop && !nbottom) lo = std::min(lo, hi - diameter);
  if (nbottom && !ntop) hi = std::max(hi, lo + diameter);
  if (!ntop && !nbottom && hi - lo < diameter) {
    const double mid = 0.5 * (hi + lo);
    hi = mid + 0.5 * diameter, lo = mid - 0.5 * diameter;
  }
  if (!(hi > lo)) throw DegenerateConfiguration("cylinder caps overlap");

  Eigen::Vector2d semi = e.semi;
  Eigen::Vector3d major;
  if (std::abs(semi(0) - semi(1)) <= 1e-6 * semi.maxCoeff()) {
    semi.setConstant(0.5 * (semi(0) + semi(1)));
    major = u;
  } else {
    major = orient(e.axes(0, 0) * u + e.axes(1, 0) * v, f);
  }
  Eigen::Matrix3d r;
  r.col(0) = major;
  r.col(1) = a.cross(major);
  r.col(2) = a;
  const Point3 center = e.center.x() * u + e.center.y() * v + 0.5 * (hi + lo) * a;
  const Eigen::Vector3d dims(semi(0), semi(1), hi - lo);
  require_bounded(dims, c);
  return posed(PrimitiveShape::cylinder(dims(0), dims(1), dims(2)), r, center);
}

// ---- box -------------------------------------------------------------------

// Dominant direction among unsigned unit vectors: the member with the most
// neighbors within 15 deg, refined as the principal direction of that cluster.
std::optional<Eigen::Vector3d> dominant_direction(const std::vector<Eigen::Vector3d>& dirs) {
  if (dirs.empty()) return std::nullopt;
  std::size_t best = 0, best_count = 0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    std::size_t count = 0;
    for (const auto& d : dirs) count += std::abs(d.dot(dirs[i])) > kFaceCos;
    if (count > best_count) best = i, best_count = count;
  }
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  for (const auto& d : dirs)
    if (std::abs(d.dot(dirs[best])) > kFaceCos) s += d * d.transpose();
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(s).eigenvectors().col(2);
}

PrimitiveShape fit_box(const PointCloud& c, const std::vector<std::size_t>& idx, const Eigen::Matrix3d& f) {
  if (!c.has_normals()) throw DegenerateConfiguration("box fit needs contact normals");
  std::vector<Eigen::Vector3d> dirs;
  for (auto i : idx) dirs.push_back((*c.normals)[i]);
  const Eigen::Vector3d u1 = *dominant_direction(dirs);
  std::vector<Eigen::Vector3d> side;
  for (const auto& d : dirs) {
    const Eigen::Vector3d t = d - d.dot(u1) * u1;
    if (t.norm() > kFaceCos) side.push_back(t.normalized());
  }
  Eigen::Vector3d u2;
  if (auto d2 = dominant_direction(side)) {
    u2 = (*d2 - d2->dot(u1) * u1).normalized();
  } else {
    u2 = reference_orthogonal(u1, f);
  }
  Eigen::Matrix3d axes;
  axes.col(0) = u1;
  axes.col(1) = u2;
  axes.col(2) = u1.cross(u2);

  std::array<double, 3> lo{}, hi{}, pos{}, neg{};
  std::array<int, 3> npos{}, nneg{};
  for (int k = 0; k < 3; ++k) lo[k] = std::numeric_limits<double>::infinity(), hi[k] = -lo[k];
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double h = c.points[i].dot(axes.col(k));
      lo[k] = std::min(lo[k], h);
      hi[k] = std::max(hi[k], h);
      const double nk = (*c.normals)[i].dot(axes.col(k));
      if (nk > kFaceCos) pos[k] += h, ++npos[k];
      if (nk < -kFaceCos) neg[k] += h, ++nneg[k];
    }
  }
  // an axis without touched faces ends at the farthest contacts; an axis
  // with one touched face is as deep as the smallest other extent
  Eigen::Vector3d dims, center_local;
  std::array<double, 3> a{}, b{};
  double prior = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    a[k] = nneg[k] ? neg[k] / nneg[k] : lo[k];
    b[k] = npos[k] ? pos[k] / npos[k] : hi[k];
    if ((npos[k] == 0) == (nneg[k] == 0)) prior = std::min(prior, b[k] - a[k]);
  }
  if (!std::isfinite(prior))
    for (int k = 0; k < 3; ++k) prior = k ? std::max(prior, hi[k] - lo[k]) : hi[k] - lo[k];
  for (int k = 0; k < 3; ++k) {
    if (npos[k] && !nneg[k]) a[k] = std::min(a[k], b[k] - prior);
    if (nneg[k] && !npos[k]) b[k] = std::max(b[k], a[k] + prior);
    dims(k) = b[k] - a[k];
    center_local(k) = 0.5 * (a[k] + b[k]);
  }
  require_bounded(dims, c);
  const Point3 center = axes * center_local;

  // label and sign the box axes against the reference frame
  Eigen::Matrix3d r;
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  std::array<bool, 3> used{};
  for (int k = 0; k < 2; ++k) {
    int pick = -1;
    for (int j = 0; j < 3; ++j)
      if (!used[j] && (pick < 0 || std::abs(axes.col(j).dot(f.col(k))) > std::abs(axes.col(pick).dot(f.col(k)))))
        pick = j;
    used[pick] = true;
    r.col(k) = axes.col(pick).dot(f.col(k)) < 0.0 ? Eigen::Vector3d(-axes.col(pick)) : Eigen::Vector3d(axes.col(pick));
    d(k) = dims(pick);
  }
  for (int j = 0; j < 3; ++j)
    if (!used[j]) d(2) = dims(j);
  r.col(2) = r.col(0).cross(r.col(1));
  return posed(PrimitiveShape::box(d(0), d(1), d(2)), r, center);
}

void score_fit(FitResult& fit, const PointCloud& c, const FitOptions& o) {
  const double tau = o.inlier_mm / o.mm_per_unit;
  double sum = 0.0, agree = 0.0;
  std::size_t inliers = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double e = std::abs(signed_distance(fit.shape, c.points[i]));
    if (e <= tau) sum += e, ++inliers;
    if (c.has_normals()) agree += surface_normal(fit.shape, c.points[i]).vec().dot((*c.normals)[i]);
  }
  fit.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(c.size());
  fit.residual = inliers ? sum / static_cast<double>(inliers) * o.mm_per_unit : 0.0;
  fit.normals_agree = agree >= 0.0;
}

PrimitiveShape denormalize_shape(PrimitiveShape s, const NormalizationParams& p) {
  s.dims *= p.scale();
  s.pose.translation = p.mean + p.scale() * s.pose.translation;
  return s;
}

// Ball touching the contact centroid from the side the normals point away from.
PrimitiveShape fallback_ball(const PointCloud& c, const Eigen::Matrix3d& f) {
  const Point3 mean = c.centroid();
  double spread = 0.0;
  for (const auto& p : c.points) spread += (p - mean).norm();
  spread = std::max(spread / static_cast<double>(c.size()), 1e-3);
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  if (c.has_normals())
    for (const auto& v : *c.normals) n += v;
  const Point3 center = n.norm() > 1e-9 * static_cast<double>(c.size()) ? Point3(mean - spread * n.normalized()) : mean;
  return posed(PrimitiveShape::sphere(spread), f, center);
}

struct PointLess {
  bool operator()(const Point3& a, const Point3& b) const {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
  }
};

}  // namespace

CompleterInput CompleterInput::from_measured(const PointCloud& measured, double lambda) {
  if (!measured.has_normals()) throw InvalidArgument("completion input needs normals");
  CompleterInput in;
  try {
    auto [cloud, params] = normalize_cloud(measured, lambda);
    in.cloud = std::move(cloud);
    in.params = params;
  } catch (const NormalizationUndefined&) {
    // equidistant points: scale by the RMS radius instead
    in.params.lambda = lambda;
    in.params.mean = measured.centroid();
    in.params.sigma = reference_scale(measured, 1.0);
    in.cloud = measured;
    for (auto& p : in.cloud.points) p = (p - in.params.mean) / in.params.scale();
  }
  return in;
}

void CompleterInput::check() const {
  if (cloud.empty()) throw EmptyCloud("completion input is empty");
  const Point3 mean = cloud.centroid();
  if (mean.norm() > 1e-6) throw InvalidArgument("completion input is not centered");
  const double s = norm_sigma(cloud.points, Point3::Zero());
  const double rms = reference_scale(cloud, 1.0);
  if (std::abs(s - 1.0 / params.lambda) > 1e-6 && std::abs(rms - 1.0 / params.lambda) > 1e-6)
    throw InvalidArgument(fmt::format("completion input has norm sigma {} (expected {})", s, 1.0 / params.lambda));
}

std::string to_string(FitClass c) {
  switch (c) {
    case FitClass::Sphere: return "sphere";
    case FitClass::Cylinder: return "cylinder";
    case FitClass::Ellipsoid: return "ellipsoid";
    case FitClass::Box: return "box";
  }
  return "?";
}

int parameter_count(FitClass c) {
  switch (c) {
    case FitClass::Sphere: return 4;
    case FitClass::Cylinder: return 8;
    case FitClass::Ellipsoid: return 9;
    case FitClass::Box: return 9;
  }
  return 0;
}

FitResult fit_primitive(FitClass cls, const PointCloud& cloud, const FitOptions& options) {
  if (cloud.size() < 8) throw TooFewPoints("primitive fit needs at least 8 points");
  const auto idx = subsample(cloud.size(), options.max_fit_points);
  const Eigen::Matrix3d f = reference_frame(cloud);
  FitResult fit;
  fit.cls = cls;
  switch (cls) {
    case FitClass::Sphere: fit.shape = fit_sphere(cloud, idx, f); break;
    case FitClass::Ellipsoid: fit.shape = fit_ellipsoid(cloud, idx, f); break;
    case FitClass::Box: fit.shape = fit_box(cloud, idx, f); break;
    case FitClass::Cylinder: {
      if (!cloud.has_normals()) throw DegenerateConfiguration("cylinder fit needs contact normals");
      require_not_coplanar(cloud, idx);
      Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
      for (auto i : idx) s += (*cloud.normals)[i] * (*cloud.normals)[i].transpose();
      const Eigen::Matrix3d axes = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(s).eigenvectors();
      std::optional<FitResult> best;
      std::string why = "no axis admits an elliptic cross-section";
      for (int k = 0; k < 3; ++k) {
        FitResult trial;
        trial.cls = cls;
        try {
          trial.shape = fit_cylinder_axis(cloud, idx, axes.col(k), f);
        } catch (const DegenerateConfiguration& e) {
          why = e.what();
          continue;
        }
        score_fit(trial, cloud, options);
        if (!best || trial.inlier_fraction > best->inlier_fraction + 1e-12 ||
            (trial.inlier_fraction >= best->inlier_fraction - 1e-12 && trial.residual < best->residual))
          best = trial;
      }
      if (!best) throw DegenerateConfiguration(why);
      return *best;
    }
  }
  score_fit(fit, cloud, options);
  return fit;
}

FitResult select_model(const std::vector<FitResult>& fits) {
  if (fits.empty()) throw InvalidArgument("select_model needs at least one fit");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : fits) best = std::min(best, f.residual);
  // within 5% of the best (plus a floor for round-off) counts as a tie
  const double tie = 1.05 * best + 1e-6;
  const FitResult* pick = nullptr;
  for (const auto& f : fits) {
    if (f.residual > tie) continue;
    if (!pick || parameter_count(f.cls) < parameter_count(pick->cls) ||
        (parameter_count(f.cls) == parameter_count(pick->cls) && f.residual < pick->residual))
      pick = &f;
  }
  return *pick;
}

bool disjoint(const PointCloud& a, const PointCloud& b) {
  std::vector<Point3> sorted = b.points;
  std::sort(sorted.begin(), sorted.end(), PointLess{});
  for (const auto& p : a.points)
    if (std::binary_search(sorted.begin(), sorted.end(), p, PointLess{})) return false;
  return true;
}

BeliefState complete(const CompleterInput& input, const CompletionOptions& options) {
  if (!input.cloud.has_normals()) throw InvalidArgument("completion input needs normals");
  if (options.n_out == 0) throw InvalidArgument("n_out must be >= 1");
  const PointCloud& c = input.cloud;
  BeliefState belief;
  const Eigen::Matrix3d f = reference_frame(c);
  FitOptions fo;
  fo.inlier_mm = options.inlier_mm;
  fo.mm_per_unit = input.params.scale();

  std::vector<FitResult> usable;
  if (c.size() >= 8) {
    input.check();
    for (FitClass cls : {FitClass::Sphere, FitClass::Cylinder, FitClass::Ellipsoid, FitClass::Box}) {
      ClassAttempt at{cls, std::nullopt, {}};
      try {
        FitResult fit = fit_primitive(cls, c, fo);
        if (!fit.normals_agree)
          at.failure = "body on the outward side of the contact normals";
        else if (fit.inlier_fraction < 0.5)
          at.failure = fmt::format("inlier fraction {:.3f} below 0.5", fit.inlier_fraction);
        else
          usable.push_back(fit);
        fit.shape = denormalize_shape(fit.shape, input.params);
        at.fit = fit;
      } catch (const Error& e) {
        at.failure = e.what();
      }
      belief.attempts.push_back(std::move(at));
    }
  }

  PrimitiveShape shape;
  if (usable.empty()) {
    if (!options.allow_fallback) throw FitFailed("no primitive class explains the contacts");
    belief.fallback = true;
    shape = denormalize_shape(fallback_ball(c, f), input.params);
  } else {
    FitResult chosen = select_model(usable);
    chosen.shape = denormalize_shape(chosen.shape, input.params);
    shape = chosen.shape;
    belief.fit = chosen;
  }

  belief.cloud = sample_surface(shape, options.n_out, options.seed);
  // novel points only: redraw any sample that coincides with a contact
  const PointCloud measured = denormalize_cloud(c, input.params);
  std::vector<Point3> sorted = measured.points;
  std::sort(sorted.begin(), sorted.end(), PointLess{});
  for (std::size_t i = 0; i < belief.cloud.size(); ++i) {
    for (std::uint64_t attempt = 1; std::binary_search(sorted.begin(), sorted.end(), belief.cloud.points[i], PointLess{});
         ++attempt) {
      const PointCloud one = sample_surface(shape, 1, derive_seed(options.seed, {i, attempt}));
      belief.cloud.points[i] = one.points[0];
      (*belief.cloud.normals)[i] = (*one.normals)[0];
    }
  }
  return belief;
}

Completer reference_completer() {
  return [](const CompleterInput& in, const CompletionOptions& o) { return complete(in, o); };
}

BeliefState external_complete(const CompleterInput& input, const std::filesystem::path& exchange_dir,
                              const CompletionOptions& options, std::chrono::milliseconds timeout) {
  std::error_code ec;
  std::filesystem::create_directories(exchange_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", exchange_dir.string(), ec.message()));
  const auto out_path = exchange_dir / "output.ply";
  std::filesystem::remove(out_path, ec);

  const std::string input_text = to_ply_string(input.cloud, {"tactex completion request"});
  const nlohmann::json params = {{"n_out", options.n_out}, {"lambda", input.params.lambda}, {"seed", options.seed}};
  write_file_atomic(exchange_dir / "params.json", params.dump(2) + "\n");
  write_file_atomic(exchange_dir / "input.ply", input_text);

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!std::filesystem::exists(out_path)) {
    if (std::chrono::steady_clock::now() >= deadline)
      throw Timeout(fmt::format("no output.ply in '{}' after {} ms", exchange_dir.string(), timeout.count()));
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  PointCloud out = read_ply(out_path);
  std::filesystem::remove(out_path, ec);
  std::filesystem::remove(exchange_dir / "input.ply", ec);

  if (out.size() != options.n_out)
    throw ContractViolation(fmt::format("external completer returned {} points, expected {}", out.size(), options.n_out));
  // compare against the input as the external side read it
  if (!disjoint(out, from_ply_string(input_text)) || !disjoint(out, input.cloud))
    throw ContractViolation("external completer output reuses input points");
  out.timestamps.reset();
  BeliefState belief;
  belief.cloud = denormalize_cloud(out, input.params);
  return belief;
}

Completer external_completer(std::filesystem::path exchange_dir, std::chrono::milliseconds timeout) {
  return [dir = std::move(exchange_dir), timeout](const CompleterInput& in, const CompletionOptions& o) {
    return external_complete(in, dir, o, timeout);
  };
}

}  // namespace tactex
