#include "tactex/gripper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "tactex/errors.hpp"
#include "tactex/ply.hpp"

namespace tactex {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Seating stops when the closest taxel is this fraction of tol from the surface.
constexpr double kSeatFraction = 0.1;

struct ShapeBound {
  Point3 center;
  double radius;
};

ShapeBound bound_of(const PrimitiveShape& s) { return {s.pose.translation, s.bounding_radius()}; }

double min_sdf(const std::vector<Point3>& pts, const PrimitiveShape& shape) {
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  const ShapeBound b = bound_of(shape);
  std::size_t first = 0;
  double first_lb = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double lb = (pts[i] - b.center).norm() - b.radius;
    if (lb < first_lb) first_lb = lb, first = i;
  }
  double best = signed_distance(shape, pts[first]);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == first || (pts[i] - b.center).norm() - b.radius >= best) continue;
    best = std::min(best, signed_distance(shape, pts[i]));
  }
  return best;
}

Pose finger_frame(const GripperModel& m, const FingerSpec& f) {
  return Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), (f.yaw_deg + f.abduction_deg) * kDeg,
                               Eigen::Vector3d(f.base.x(), f.base.y(), m.palm_height(f.base.x(), f.base.y())));
}

void append_world(const std::vector<Point3>& local, const Pose& pose, std::vector<Point3>& out) {
  for (const auto& p : local) out.push_back(pose.apply(p));
}

std::vector<Point3> finger_world(const GripperModel& m, const GripperState& s, int f, double theta) {
  std::vector<Point3> local;
  m.finger_taxels_local(f, theta, local);
  std::vector<Point3> out;
  out.reserve(local.size());
  append_world(local, s.pose, out);
  return out;
}

std::vector<Point3> palm_world(const GripperModel& m, const GripperState& s) {
  std::vector<Point3> out;
  out.reserve(m.palm.size());
  append_world(m.palm_taxels_local(), s.pose, out);
  return out;
}

// Bisects between a clear parameter (clearance > level) and a touching one
// (clearance <= level) and returns the touching end.
template <typename F>
double bisect_seat(F&& clearance, double clear, double touching, double level, int iterations) {
  for (int k = 0; k < iterations; ++k) {
    const double mid = 0.5 * (clear + touching);
    if (clearance(mid) > level)
      clear = mid;
    else
      touching = mid;
  }
  return touching;
}

TaxelArray array_from_json(const nlohmann::json& j, Region r) {
  TaxelArray a{r, j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("pitch_mm").get<double>()};
  return a;
}

nlohmann::json array_to_json(const TaxelArray& a) {
  return {{"rows", a.rows}, {"cols", a.cols}, {"pitch_mm", a.pitch}};
}

}  // namespace

std::string to_string(Region r) {
  switch (r) {
    case Region::Tip: return "tip";
    case Region::Nail: return "nail";
    case Region::Pad: return "pad";
    case Region::Palm: return "palm";
  }
  return "?";
}

GripperModel GripperModel::default_model() {
  GripperModel m;
  m.fingers[0] = {"thumb", {-30.0, -10.0}, 90.0, 0.0, true};
  m.fingers[1] = {"index", {-24.0, 50.0}, 0.0, 0.0, false};
  m.fingers[2] = {"middle", {-8.0, 50.0}, 0.0, 0.0, false};
  m.fingers[3] = {"ring", {8.0, 50.0}, 0.0, 0.0, false};
  m.fingers[4] = {"little", {24.0, 50.0}, 0.0, 0.0, false};
  return m;
}

void GripperModel::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(fmt::format("hand: {} must be positive", what));
  };
  positive(palm_width, "palm width");
  positive(palm_length, "palm length");
  positive(palm_concavity_x, "lateral palm concavity radius");
  positive(palm_concavity_y, "longitudinal palm concavity radius");
  positive(finger_radius, "finger radius");
  positive(link1, "link 1 length");
  positive(link2, "link 2 length");
  positive(theta_max_deg, "theta_max");
  if (rest_extension_deg < 0.0) throw ConfigError("hand: rest extension must be non-negative");
  positive(contact_tol, "contact tolerance");
  positive(approach_step, "approach step");
  positive(curl_step_deg, "curl step");
  if (bisection_steps < 1) throw ConfigError("hand: bisection_steps must be >= 1");
  for (const TaxelArray* a : {&palm, &pad, &nail, &tip}) {
    if (a->rows < 1 || a->cols < 1 || !(a->pitch > 0.0))
      throw ConfigError(fmt::format("hand: bad {} taxel array", to_string(a->region)));
  }
  if (std::count_if(fingers.begin(), fingers.end(), [](const FingerSpec& f) { return f.thumb; }) != 1)
    throw ConfigError("hand: exactly one finger must be the thumb");
}

double GripperModel::theta_max() const { return theta_max_deg * kDeg; }

Region GripperModel::region_of(int taxel) const {
  if (taxel < palm.size()) return Region::Palm;
  const int k = (taxel - palm.size()) % taxels_per_finger();
  if (k < pad.size()) return Region::Pad;
  if (k < pad.size() + nail.size()) return Region::Nail;
  return Region::Tip;
}

int GripperModel::finger_of(int taxel) const {
  if (taxel < palm.size()) return -1;
  return (taxel - palm.size()) / taxels_per_finger();
}

std::vector<Point3> GripperModel::palm_taxels_local() const {
  std::vector<Point3> out;
  out.reserve(palm.size());
  for (int i = 0; i < palm.rows; ++i) {
    for (int j = 0; j < palm.cols; ++j) {
      const double x = (i - 0.5 * (palm.rows - 1)) * palm.pitch;
      const double y = (j - 0.5 * (palm.cols - 1)) * palm.pitch;
      out.emplace_back(x, y, palm_height(x, y));
    }
  }
  return out;
}

double GripperModel::palm_height(double x, double y) const {
  return x * x / (2.0 * palm_concavity_x) + y * y / (2.0 * palm_concavity_y);
}

void GripperModel::finger_taxels_local(int f, double theta, std::vector<Point3>& out) const {
  const Pose frame = finger_frame(*this, fingers[f]);
  const double r = finger_radius;
  const Eigen::Vector3d e = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d a0(0.0, 0.0, -r);
  const double rest = rest_extension_deg * kDeg;
  const double t1 = theta - rest, t2 = 2.0 * theta - rest;
  const Eigen::Vector3d d1(0.0, std::cos(t1), std::sin(t1));
  const Eigen::Vector3d n1(0.0, -std::sin(t1), std::cos(t1));
  const Eigen::Vector3d a1 = a0 + link1 * d1;
  const Eigen::Vector3d d2(0.0, std::cos(t2), std::sin(t2));
  const Eigen::Vector3d n2(0.0, -std::sin(t2), std::cos(t2));

  auto wrap = [&](const TaxelArray& a, const Eigen::Vector3d& origin, const Eigen::Vector3d& d,
                  const Eigen::Vector3d& n, double length) {
    for (int i = 0; i < a.rows; ++i) {
      const double s = 0.5 * length + (i - 0.5 * (a.rows - 1)) * a.pitch;
      for (int j = 0; j < a.cols; ++j) {
        const double alpha = (j - 0.5 * (a.cols - 1)) * a.pitch / r;
        out.push_back(frame.apply(origin + s * d + r * (std::cos(alpha) * n + std::sin(alpha) * e)));
      }
    }
  };
  wrap(pad, a0, d1, n1, link1);
  wrap(nail, a1, d2, n2, link2);
  const Eigen::Vector3d end = a1 + link2 * d2;
  for (int i = 0; i < tip.rows; ++i)
    for (int j = 0; j < tip.cols; ++j)
      out.push_back(frame.apply(end + (i - 0.5 * (tip.rows - 1)) * tip.pitch * n2 + (j - 0.5 * (tip.cols - 1)) * tip.pitch * e));
}

nlohmann::json gripper_to_json(const GripperModel& m) {
  nlohmann::json fingers = nlohmann::json::array();
  for (const auto& f : m.fingers) {
    fingers.push_back({{"name", f.name},
                       {"base_mm", {f.base.x(), f.base.y()}},
                       {"yaw_deg", f.yaw_deg},
                       {"abduction_deg", f.abduction_deg},
                       {"thumb", f.thumb}});
  }
  return {{"schema_version", m.schema_version},
          {"name", m.name},
          {"palm",
           {{"width_mm", m.palm_width},
            {"length_mm", m.palm_length},
            {"concavity_radius_mm", {m.palm_concavity_x, m.palm_concavity_y}},
            {"taxels", array_to_json(m.palm)}}},
          {"finger",
           {{"radius_mm", m.finger_radius},
            {"link_lengths_mm", {m.link1, m.link2}},
            {"theta_max_deg", m.theta_max_deg},
            {"rest_extension_deg", m.rest_extension_deg},
            {"pad", array_to_json(m.pad)},
            {"nail", array_to_json(m.nail)},
            {"tip", array_to_json(m.tip)}}},
          {"fingers", fingers},
          {"contact_tolerance_mm", m.contact_tol},
          {"approach_step_mm", m.approach_step},
          {"bisection_steps", m.bisection_steps},
          {"curl_step_deg", m.curl_step_deg}};
}

GripperModel gripper_from_json(const nlohmann::json& j) {
  try {
    GripperModel m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1) throw ConfigError(fmt::format("unsupported hand schema_version {}", m.schema_version));
    m.name = j.value("name", m.name);
    const auto& palm = j.at("palm");
    m.palm_width = palm.at("width_mm").get<double>();
    m.palm_length = palm.at("length_mm").get<double>();
    const auto concavity = palm.at("concavity_radius_mm").get<std::vector<double>>();
    if (concavity.size() != 2) throw ConfigError("hand: concavity_radius_mm needs 2 values");
    m.palm_concavity_x = concavity[0];
    m.palm_concavity_y = concavity[1];
    m.palm = array_from_json(palm.at("taxels"), Region::Palm);
    const auto& finger = j.at("finger");
    m.finger_radius = finger.at("radius_mm").get<double>();
    const auto links = finger.at("link_lengths_mm").get<std::vector<double>>();
    if (links.size() != 2) throw ConfigError("hand: link_lengths_mm needs 2 values");
    m.link1 = links[0];
    m.link2 = links[1];
    m.theta_max_deg = finger.at("theta_max_deg").get<double>();
    m.rest_extension_deg = finger.at("rest_extension_deg").get<double>();
    m.pad = array_from_json(finger.at("pad"), Region::Pad);
    m.nail = array_from_json(finger.at("nail"), Region::Nail);
    m.tip = array_from_json(finger.at("tip"), Region::Tip);
    const auto& fingers = j.at("fingers");
    if (fingers.size() != kFingerCount) throw ConfigError("hand: exactly 5 fingers required");
    for (int i = 0; i < kFingerCount; ++i) {
      const auto& f = fingers[i];
      const auto base = f.at("base_mm").get<std::vector<double>>();
      if (base.size() != 2) throw ConfigError("hand: base_mm needs 2 values");
      m.fingers[i] = {f.at("name").get<std::string>(), {base[0], base[1]}, f.at("yaw_deg").get<double>(),
                      f.value("abduction_deg", 0.0), f.value("thumb", false)};
    }
    m.contact_tol = j.at("contact_tolerance_mm").get<double>();
    m.approach_step = j.at("approach_step_mm").get<double>();
    m.bisection_steps = j.at("bisection_steps").get<int>();
    m.curl_step_deg = j.at("curl_step_deg").get<double>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("hand description: {}", e.what()));
  }
}

GripperModel load_gripper(const std::filesystem::path& path) {
  try {
    return gripper_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

GripperState standoff_state(const Point3& target, const Eigen::Vector3d& n, double yaw, double standoff) {
  const Eigen::Vector3d z = -n.normalized();
  const Eigen::Vector3d x0 = any_orthogonal(z);
  const Eigen::Vector3d x = Eigen::AngleAxisd(yaw, z) * x0;
  GripperState s;
  s.pose.rotation.col(0) = x;
  s.pose.rotation.col(1) = z.cross(x);
  s.pose.rotation.col(2) = z;
  s.pose.translation = target + standoff * n.normalized();
  return s;
}

PointCloud taxel_positions(const GripperModel& model, const GripperState& state) {
  PointCloud c;
  c.points = palm_world(model, state);
  for (int f = 0; f < kFingerCount; ++f) {
    const auto pts = finger_world(model, state, f, state.curls[f]);
    c.points.insert(c.points.end(), pts.begin(), pts.end());
  }
  return c;
}

double min_clearance(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape, int subset) {
  if (subset == kPalmTaxels) return min_sdf(palm_world(model, state), shape);
  if (subset >= 0) return min_sdf(finger_world(model, state, subset, state.curls[subset]), shape);
  return min_sdf(taxel_positions(model, state).points, shape);
}

ContactEvent detect_contacts(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape,
                             double tol, std::int64_t timestamp) {
  if (!(tol > 0.0)) throw InvalidArgument("contact tolerance must be positive");
  const PointCloud taxels = taxel_positions(model, state);
  const ShapeBound b = bound_of(shape);
  ContactEvent ev;
  ev.state = state;
  ev.cloud.normals.emplace();
  ev.cloud.timestamps.emplace();
  for (std::size_t i = 0; i < taxels.size(); ++i) {
    const Point3& p = taxels.points[i];
    if ((p - b.center).norm() - b.radius > tol) continue;
    const double d = signed_distance(shape, p);
    if (d < -2.0 * tol)
      throw PenetrationTooDeep(fmt::format("taxel {} ({}) at sdf {:.4f} mm", i, to_string(model.region_of(static_cast<int>(i))), d));
    if (d > tol) continue;
    const Point3 q = closest_surface_point(shape, p);
    ev.taxel_ids.push_back(static_cast<int>(i));
    ev.cloud.points.push_back(q);
    ev.cloud.normals->push_back(surface_normal(shape, q).vec());
    ev.cloud.timestamps->push_back(timestamp);
  }
  return ev;
}

ApproachResult approach_until_contact(const GripperModel& model, const GripperState& start, const UnitVec3& direction,
                                      const PrimitiveShape& shape, double step, double max_travel,
                                      std::int64_t timestamp) {
  if (!(step > 0.0)) throw InvalidArgument("approach step must be positive");
  const double tol = model.contact_tol;
  const double level = kSeatFraction * tol;
  auto at = [&](double travel) {
    GripperState s = start;
    s.pose.translation += travel * direction.vec();
    return s;
  };
  auto clearance = [&](double travel) { return min_clearance(model, at(travel), shape); };

  const double m0 = clearance(0.0);
  if (m0 < 0.0) throw PenetrationTooDeep(fmt::format("approach starts in penetration ({:.3f} mm)", m0));
  double travel = 0.0;
  if (m0 > tol) {
    bool touched = false;
    while (travel < max_travel) {
      const double next = std::min(travel + step, max_travel);
      if (clearance(next) <= level) {
        travel = bisect_seat(clearance, travel, next, level, model.bisection_steps);
        touched = true;
        break;
      }
      travel = next;
    }
    if (!touched) throw NoContact(fmt::format("no contact within {:.1f} mm of travel", max_travel));
  }
  ApproachResult r;
  r.state = at(travel);
  r.travel = travel;
  r.event = detect_contacts(model, r.state, shape, tol, timestamp);
  return r;
}

double seat_finger(const GripperModel& model, const GripperState& state, int f, const PrimitiveShape& shape) {
  const double tol = model.contact_tol;
  const double level = kSeatFraction * tol;
  const double step = model.curl_step_deg * kDeg;
  const double tmax = model.theta_max();
  auto clearance = [&](double theta) { return min_sdf(finger_world(model, state, f, theta), shape); };

  const double theta0 = std::clamp(state.curls[f], 0.0, tmax);
  const double m0 = clearance(theta0);
  if (m0 >= 0.0 && m0 <= tol) return theta0;
  if (m0 > tol) {
    double theta = theta0;
    while (theta < tmax) {
      const double next = std::min(theta + step, tmax);
      if (clearance(next) <= level) return bisect_seat(clearance, theta, next, level, model.bisection_steps);
      theta = next;
    }
    return tmax;
  }
  double theta = theta0;
  while (theta > 0.0) {
    const double next = std::max(theta - step, 0.0);
    if (clearance(next) > level) return bisect_seat(clearance, next, theta, level, model.bisection_steps);
    theta = next;
  }
  return 0.0;
}

ApproachResult close_fingers_until_contact(const GripperModel& model, const GripperState& state,
                                           const PrimitiveShape& shape, std::int64_t timestamp) {
  ApproachResult r;
  r.state = state;
  for (int f = 0; f < kFingerCount; ++f) r.state.curls[f] = seat_finger(model, state, f, shape);
  r.event = detect_contacts(model, r.state, shape, model.contact_tol, timestamp);
  return r;
}

}  // namespace tactex
