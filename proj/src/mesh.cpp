#include "tactex/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numbers>
#include <tuple>

#include <fmt/format.h>

#include "tactex/errors.hpp"
#include "tactex/ply.hpp"

namespace tactex {

namespace {

class VertexPool {
 public:
  int add(const Point3& p) {
    const auto key = std::make_tuple(p.x(), p.y(), p.z());
    const auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    index_.emplace(key, id);
    return id;
  }
  TriangleMesh mesh;

 private:
  std::map<std::tuple<double, double, double>, int> index_;
};

// Primitives are convex and centered at their local origin, so a triangle is
// outward when its normal points away from the origin.
void orient_outward(TriangleMesh& m) {
  for (auto& t : m.triangles) {
    const Point3& a = m.vertices[t[0]];
    const Point3& b = m.vertices[t[1]];
    const Point3& c = m.vertices[t[2]];
    if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(t[1], t[2]);
  }
}

TriangleMesh box_mesh(const Eigen::Vector3d& dims, int n) {
  const Eigen::Vector3d h = 0.5 * dims;
  VertexPool pool;
  for (int axis = 0; axis < 3; ++axis) {
    for (double sign : {1.0, -1.0}) {
      const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
      auto vertex = [&](int i, int j) {
        Point3 p;
        p[axis] = sign * h[axis];
        p[ua] = -h[ua] + 2.0 * h[ua] * i / n;
        p[va] = -h[va] + 2.0 * h[va] * j / n;
        return pool.add(p);
      };
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const int a = vertex(i, j), b = vertex(i + 1, j), c = vertex(i + 1, j + 1), d = vertex(i, j + 1);
          pool.mesh.triangles.push_back({a, b, c});
          pool.mesh.triangles.push_back({a, c, d});
        }
      }
    }
  }
  return std::move(pool.mesh);
}

TriangleMesh ellipsoid_mesh(const Eigen::Vector3d& radii, int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Point3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  m.vertices.reserve(v.size());
  for (const auto& p : v) m.vertices.push_back(p.cwiseProduct(radii));
  m.triangles = std::move(f);
  return m;
}

TriangleMesh cylinder_mesh(const Eigen::Vector3d& dims, int segments) {
  const double a = dims.x(), b = dims.y(), hz = 0.5 * dims.z();
  TriangleMesh m;
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(a * std::cos(t), b * std::sin(t), -hz);
  }
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(a * std::cos(t), b * std::sin(t), hz);
  }
  const int bottom_c = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -hz);
  const int top_c = bottom_c + 1;
  m.vertices.emplace_back(0.0, 0.0, hz);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = i, b1 = j, t0 = segments + i, t1 = segments + j;
    m.triangles.push_back({b0, b1, t1});
    m.triangles.push_back({b0, t1, t0});
    m.triangles.push_back({bottom_c, b1, b0});
    m.triangles.push_back({top_c, t0, t1});
  }
  return m;
}

double max_deviation(const PrimitiveShape& shape, const TriangleMesh& m) {
  double dev = 0.0;
  for (const auto& t : m.triangles) {
    const Point3& a = m.vertices[t[0]];
    const Point3& b = m.vertices[t[1]];
    const Point3& c = m.vertices[t[2]];
    for (const Point3& q : {Point3((a + b + c) / 3.0), Point3(0.5 * (a + b)), Point3(0.5 * (b + c)),
                            Point3(0.5 * (c + a)), a}) {
      dev = std::max(dev, std::abs(signed_distance(shape, q)));
    }
  }
  return dev;
}

}  // namespace

TriangleMesh to_mesh(const PrimitiveShape& shape, int resolution) {
  if (resolution < 1) throw InvalidArgument("mesh resolution must be >= 1");
  TriangleMesh m;
  switch (shape.kind) {
    case ShapeKind::Box: m = box_mesh(shape.dims, resolution); break;
    case ShapeKind::Ball: m = ellipsoid_mesh(shape.dims, resolution - 1); break;
    case ShapeKind::Cylinder: m = cylinder_mesh(shape.dims, 4 << resolution); break;
  }
  orient_outward(m);
  for (auto& v : m.vertices) v = shape.pose.apply(v);
  return m;
}

int default_mesh_resolution(const PrimitiveShape& shape, double max_deviation_mm) {
  if (shape.kind == ShapeKind::Box) return 1;
  for (int r = 1; r < 8; ++r)
    if (max_deviation(shape, to_mesh(shape, r)) <= max_deviation_mm) return r;
  return 8;
}

TriangleMesh to_mesh(const PrimitiveShape& shape) { return to_mesh(shape, default_mesh_resolution(shape)); }

double mesh_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles)
    v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  return v / 6.0;
}

bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    const auto it = directed.find({e.second, e.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

bool mesh_contains(const TriangleMesh& mesh, const Point3& p) {
  double omega = 0.0;
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices[t[0]] - p;
    const Eigen::Vector3d b = mesh.vertices[t[1]] - p;
    const Eigen::Vector3d c = mesh.vertices[t[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    omega += 2.0 * std::atan2(num, den);
  }
  return omega / (4.0 * std::numbers::pi) > 0.5;
}

void write_stl_binary(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::string buf(80, '\0');
  const std::string tag = "tactex binary STL";
  std::memcpy(buf.data(), tag.data(), tag.size());
  auto put_u32 = [&](std::uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); };
  auto put_f32 = [&](double v) {
    const float f = static_cast<float>(v);
    buf.append(reinterpret_cast<const char*>(&f), 4);
  };
  put_u32(static_cast<std::uint32_t>(mesh.triangles.size()));
  for (const auto& t : mesh.triangles) {
    const Point3& a = mesh.vertices[t[0]];
    const Point3& b = mesh.vertices[t[1]];
    const Point3& c = mesh.vertices[t[2]];
    Eigen::Vector3d n = (b - a).cross(c - a);
    if (n.norm() > 0.0) n.normalize();
    for (int k = 0; k < 3; ++k) put_f32(n[k]);
    for (const Point3* v : {&a, &b, &c})
      for (int k = 0; k < 3; ++k) put_f32((*v)[k]);
    buf.append(2, '\0');
  }
  write_file_atomic(path, buf);
}

TriangleMesh read_stl_binary(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 84) throw IoError(fmt::format("{}: truncated STL", path.string()));
  std::uint32_t count = 0;
  std::memcpy(&count, buf.data() + 80, 4);
  if (buf.size() != 84 + 50ull * count) throw IoError(fmt::format("{}: STL size mismatch", path.string()));
  VertexPool pool;
  for (std::uint32_t i = 0; i < count; ++i) {
    const char* rec = buf.data() + 84 + 50ull * i + 12;
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      float xyz[3];
      std::memcpy(xyz, rec + 12 * k, 12);
      tri[k] = pool.add(Point3(xyz[0], xyz[1], xyz[2]));
    }
    pool.mesh.triangles.push_back(tri);
  }
  return std::move(pool.mesh);
}

std::string mesh_to_ply_string(const TriangleMesh& mesh) {
  std::string out = "ply\nformat ascii 1.0\n";
  out += fmt::format("element vertex {}\n", mesh.vertices.size());
  out += "property double x\nproperty double y\nproperty double z\n";
  out += fmt::format("element face {}\n", mesh.triangles.size());
  out += "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) out += fmt::format("{:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
  for (const auto& t : mesh.triangles) out += fmt::format("3 {} {} {}\n", t[0], t[1], t[2]);
  return out;
}

void write_mesh_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  write_file_atomic(path, mesh_to_ply_string(mesh));
}

}  // namespace tactex
