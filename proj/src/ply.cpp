#include "tactex/ply.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tactex/errors.hpp"

namespace tactex {

std::string to_ply_string(const PointCloud& cloud, const std::vector<std::string>& comments) {
  cloud.validate();
  std::string out;
  out.reserve(64 * cloud.size() + 256);
  out += "ply\nformat ascii 1.0\n";
  for (const auto& c : comments) out += fmt::format("comment {}\n", c);
  out += fmt::format("element vertex {}\n", cloud.size());
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.normals) out += "property double nx\nproperty double ny\nproperty double nz\n";
  if (cloud.timestamps) out += "property int timestamp\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out += fmt::format("{:.9g} {:.9g} {:.9g}", p.x(), p.y(), p.z());
    if (cloud.normals) {
      const auto& n = (*cloud.normals)[i];
      out += fmt::format(" {:.9g} {:.9g} {:.9g}", n.x(), n.y(), n.z());
    }
    if (cloud.timestamps) out += fmt::format(" {}", (*cloud.timestamps)[i]);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

double parse_double(std::string_view s) {
  // from_chars for double is available in libstdc++ 11
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError(fmt::format("bad PLY number '{}'", s));
  return v;
}

std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError(fmt::format("bad PLY integer '{}'", s));
  return v;
}

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    return true;
  }
};

}  // namespace

std::vector<std::string> ply_comments(std::string_view text) {
  std::vector<std::string> out;
  LineReader r{text};
  std::string_view line;
  while (r.next(line)) {
    if (line.rfind("end_header", 0) == 0) break;
    if (line.rfind("comment ", 0) == 0) out.emplace_back(line.substr(8));
  }
  return out;
}

PointCloud from_ply_string(std::string_view text) {
  LineReader r{text};
  std::string_view line;
  if (!r.next(line) || split_ws(line).empty() || split_ws(line)[0] != "ply") throw IoError("missing PLY magic");

  std::size_t count = 0;
  bool in_vertex = false;
  std::vector<std::string> props;
  bool header_done = false;
  while (r.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw IoError("only ASCII PLY is supported");
    } else if (tok[0] == "element") {
      in_vertex = tok.size() >= 3 && tok[1] == "vertex";
      if (in_vertex) count = static_cast<std::size_t>(parse_int(tok[2]));
      else if (tok.size() >= 3 && parse_int(tok[2]) != 0) throw IoError("unsupported PLY element with data");
    } else if (tok[0] == "property" && in_vertex) {
      if (tok.size() < 3) throw IoError("malformed PLY property");
      props.emplace_back(tok.back());
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw IoError("PLY header not terminated");

  auto find = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  const int its = find("timestamp");
  if (ix < 0 || iy < 0 || iz < 0) throw IoError("PLY vertex needs x, y, z");
  const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  cloud.points.reserve(count);
  if (has_normals) cloud.normals.emplace().reserve(count);
  if (its >= 0) cloud.timestamps.emplace().reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!r.next(line)) throw IoError("PLY ended before all vertices were read");
    const auto tok = split_ws(line);
    if (tok.size() != props.size()) throw IoError(fmt::format("PLY vertex {} has wrong field count", i));
    cloud.points.emplace_back(parse_double(tok[ix]), parse_double(tok[iy]), parse_double(tok[iz]));
    if (has_normals) cloud.normals->emplace_back(parse_double(tok[inx]), parse_double(tok[iny]), parse_double(tok[inz]));
    if (its >= 0) cloud.timestamps->push_back(parse_int(tok[its]));
  }
  return cloud;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw IoError(fmt::format("write failed for '{}'", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot rename '{}' to '{}': {}", tmp.string(), path.string(), ec.message()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, const std::vector<std::string>& comments) {
  write_file_atomic(path, to_ply_string(cloud, comments));
}

PointCloud read_ply(const std::filesystem::path& path) {
  try {
    return from_ply_string(read_file(path));
  } catch (const IoError& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace tactex
