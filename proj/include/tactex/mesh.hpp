#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "tactex/primitives.hpp"

namespace tactex {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise seen from outside
};

/// Tessellates a primitive into a closed, outward-oriented mesh.
///
/// `resolution` >= 1: box edges are split into `resolution` segments
/// (12 * resolution^2 triangles), ellipsoids use an icosphere of level
/// `resolution - 1`, cylinders use 4 * 2^resolution segments around the rim.
TriangleMesh to_mesh(const PrimitiveShape& shape, int resolution);

/// Smallest resolution whose vertices, edge midpoints and face centroids all
/// lie within `max_deviation_mm` of the analytic surface.
int default_mesh_resolution(const PrimitiveShape& shape, double max_deviation_mm = 0.25);
TriangleMesh to_mesh(const PrimitiveShape& shape);

/// Enclosed volume by the divergence theorem.
double mesh_volume(const TriangleMesh& mesh);

/// Every undirected edge is shared by exactly two triangles with opposite
/// orientation.
bool is_watertight(const TriangleMesh& mesh);

/// Generalized winding number inside test.
bool mesh_contains(const TriangleMesh& mesh, const Point3& p);

void write_stl_binary(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_stl_binary(const std::filesystem::path& path);
std::string mesh_to_ply_string(const TriangleMesh& mesh);
void write_mesh_ply(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace tactex
