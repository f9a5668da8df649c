#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tactex/geometry.hpp"

namespace tactex {

/// ASCII PLY for point clouds: vertex properties x y z, optionally nx ny nz,
/// and optionally an int `timestamp`. Reals are printed with 9 significant
/// digits, so write(read(write(c))) is byte-identical to write(c).
std::string to_ply_string(const PointCloud& cloud, const std::vector<std::string>& comments = {});
PointCloud from_ply_string(std::string_view text);

void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               const std::vector<std::string>& comments = {});
PointCloud read_ply(const std::filesystem::path& path);

/// Comment lines of a PLY header (without the leading "comment ").
std::vector<std::string> ply_comments(std::string_view text);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace tactex
