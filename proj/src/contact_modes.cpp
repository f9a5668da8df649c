#include "tactex/contact_modes.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include <fmt/format.h>

#include "tactex/errors.hpp"

namespace tactex {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void require_contact(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape) {
  if (detect_contacts(model, state, shape, model.contact_tol).empty())
    throw ModeRequiresContact("interaction must start from a hand in contact with the object");
}

void record(InteractionResult& r, ContactEvent ev) {
  if (ev.empty()) return;
  r.merged.append(ev.cloud);
  r.events.push_back(std::move(ev));
  ++r.next_timestamp;
}

// Translates along the palm normal until the closest taxel is back within
// [0, tol]. Returns the seated state, or nothing past `cap` mm of travel.
std::optional<GripperState> reseat_along_normal(const GripperModel& model, const GripperState& s,
                                                const PrimitiveShape& shape, double cap) {
  const double tol = model.contact_tol;
  const double level = 0.1 * tol;
  const Eigen::Vector3d n = s.palm_normal();
  auto at = [&](double travel) {
    GripperState out = s;
    out.pose.translation += travel * n;
    return out;
  };
  auto clearance = [&](double travel) { return min_clearance(model, at(travel), shape); };

  const double m0 = clearance(0.0);
  if (m0 >= 0.0 && m0 <= tol) return s;
  if (m0 > tol) {
    try {
      return approach_until_contact(model, s, UnitVec3(n), shape, model.approach_step, cap).state;
    } catch (const NoContact&) {
      return std::nullopt;
    }
  }
  // penetrating: back off until clear, then bisect back toward the surface
  double touching = 0.0;
  while (true) {
    const double clear = touching - model.approach_step;
    if (-clear > cap) return std::nullopt;
    if (clearance(clear) > level) {
      double lo = clear, hi = touching;
      for (int k = 0; k < model.bisection_steps; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (clearance(mid) > level)
          lo = mid;
        else
          hi = mid;
      }
      return at(hi);
    }
    touching = clear;
  }
}

}  // namespace

std::string to_string(InteractionMode m) {
  switch (m) {
    case InteractionMode::GraspReleasing: return "grasp_releasing";
    case InteractionMode::FingerGrazing: return "finger_grazing";
    case InteractionMode::PalmRolling: return "palm_rolling";
  }
  return "?";
}

InteractionMode interaction_mode_from_string(const std::string& s) {
  if (s == "grasp_releasing" || s == "GR") return InteractionMode::GraspReleasing;
  if (s == "finger_grazing" || s == "FG") return InteractionMode::FingerGrazing;
  if (s == "palm_rolling" || s == "PR") return InteractionMode::PalmRolling;
  throw ConfigError(fmt::format("unknown interaction mode '{}'", s));
}

std::string to_string(RollAxis a) { return a == RollAxis::PalmNormal ? "palm_normal" : "longitudinal"; }

RollAxis roll_axis_from_string(const std::string& s) {
  if (s == "palm_normal") return RollAxis::PalmNormal;
  if (s == "longitudinal") return RollAxis::Longitudinal;
  throw ConfigError(fmt::format("unknown roll axis '{}'", s));
}

nlohmann::json mode_params_to_json(const ModeParams& p) {
  return {{"retract_mm", p.retract_mm}, {"graze_steps", p.graze_steps},   {"roll_deg", p.roll_deg},
          {"pitch_deg", p.pitch_deg},   {"roll_steps", p.roll_steps},     {"roll_axis", to_string(p.roll_axis)},
          {"reseat_travel_cap_mm", p.reseat_travel_cap}};
}

ModeParams mode_params_from_json(const nlohmann::json& j) {
  ModeParams p;
  p.retract_mm = j.value("retract_mm", p.retract_mm);
  p.graze_steps = j.value("graze_steps", p.graze_steps);
  p.roll_deg = j.value("roll_deg", p.roll_deg);
  p.pitch_deg = j.value("pitch_deg", p.pitch_deg);
  p.roll_steps = j.value("roll_steps", p.roll_steps);
  if (j.contains("roll_axis")) p.roll_axis = roll_axis_from_string(j.at("roll_axis").get<std::string>());
  p.reseat_travel_cap = j.value("reseat_travel_cap_mm", p.reseat_travel_cap);
  if (p.graze_steps < 1 || p.roll_steps < 1) throw ConfigError("mode step counts must be >= 1");
  if (p.retract_mm < 0.0 || p.roll_deg < 0.0 || p.pitch_deg < 0.0 || !(p.reseat_travel_cap > 0.0))
    throw ConfigError("mode distances and angles must be non-negative");
  return p;
}

InteractionResult run_grasp_releasing(const GripperModel& model, const GripperState& state,
                                      const PrimitiveShape& shape, std::int64_t first_timestamp) {
  require_contact(model, state, shape);
  InteractionResult r;
  r.next_timestamp = first_timestamp;
  ApproachResult grasp = close_fingers_until_contact(model, state, shape, r.next_timestamp);
  record(r, std::move(grasp.event));
  r.steps = 1;
  r.final_state = state;  // fingers reopened
  return r;
}

InteractionResult run_finger_grazing(const GripperModel& model, const GripperState& state,
                                     const PrimitiveShape& shape, double retract_mm, int steps,
                                     std::int64_t first_timestamp) {
  if (steps < 1) throw InvalidArgument("grazing needs at least one step");
  require_contact(model, state, shape);
  InteractionResult r;
  r.next_timestamp = first_timestamp;
  ApproachResult grasp = close_fingers_until_contact(model, state, shape, r.next_timestamp);
  GripperState s = grasp.state;
  record(r, std::move(grasp.event));
  const Eigen::Vector3d back = -state.palm_normal() * (retract_mm / steps);
  for (int k = 0; k < steps; ++k) {
    s.pose.translation += back;
    for (int f = 0; f < kFingerCount; ++f) s.curls[f] = seat_finger(model, s, f, shape);
    ++r.steps;
    ContactEvent ev = detect_contacts(model, s, shape, model.contact_tol, r.next_timestamp);
    if (ev.empty()) break;
    record(r, std::move(ev));
  }
  r.final_state = s;
  r.final_state.curls.fill(0.0);
  return r;
}

InteractionResult run_palm_rolling(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape,
                                   double roll_deg, double pitch_deg, int steps, std::int64_t first_timestamp,
                                   RollAxis axis, double reseat_travel_cap) {
  if (steps < 1) throw InvalidArgument("rolling needs at least one step");
  GripperState s = state;
  s.curls.fill(0.0);
  require_contact(model, s, shape);
  InteractionResult r;
  r.next_timestamp = first_timestamp;
  record(r, detect_contacts(model, s, shape, model.contact_tol, r.next_timestamp));

  const Eigen::Matrix3d r0 = s.pose.rotation;
  const Eigen::Vector3d roll_axis = axis == RollAxis::PalmNormal ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitY();
  auto orientation = [&](double roll, double pitch) {
    return Eigen::Matrix3d(r0 * Eigen::AngleAxisd(roll * kDeg, roll_axis).toRotationMatrix() *
                           Eigen::AngleAxisd(-pitch * kDeg, Eigen::Vector3d::UnitX()).toRotationMatrix());
  };

  struct Segment {
    double roll0, roll1, pitch0, pitch1;
  };
  const Segment segments[] = {{0.0, roll_deg, 0.0, 0.0},
                              {roll_deg, -roll_deg, 0.0, 0.0},
                              {-roll_deg, 0.0, 0.0, 0.0},
                              {0.0, 0.0, 0.0, pitch_deg}};
  const double unit = std::max(roll_deg, pitch_deg);
  for (const auto& seg : segments) {
    const double sweep = std::max(std::abs(seg.roll1 - seg.roll0), std::abs(seg.pitch1 - seg.pitch0));
    if (sweep == 0.0) continue;
    const int n = std::max(1, static_cast<int>(std::lround(steps * sweep / unit)));
    for (int k = 1; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      // the wrist turns about the palm center; the palm normal translation re-seats it
      s.pose.rotation = orientation(seg.roll0 + t * (seg.roll1 - seg.roll0), seg.pitch0 + t * (seg.pitch1 - seg.pitch0));
      ++r.steps;
      const auto seated = reseat_along_normal(model, s, shape, reseat_travel_cap);
      if (!seated) {
        r.contact_lost = true;
        r.final_state = s;
        return r;
      }
      s = *seated;
      record(r, detect_contacts(model, s, shape, model.contact_tol, r.next_timestamp));
    }
  }
  r.final_state = s;
  return r;
}

InteractionResult run_interaction(InteractionMode mode, const ModeParams& params, const GripperModel& model,
                                  const GripperState& state, const PrimitiveShape& shape,
                                  std::int64_t first_timestamp) {
  switch (mode) {
    case InteractionMode::GraspReleasing: return run_grasp_releasing(model, state, shape, first_timestamp);
    case InteractionMode::FingerGrazing:
      return run_finger_grazing(model, state, shape, params.retract_mm, params.graze_steps, first_timestamp);
    case InteractionMode::PalmRolling:
      return run_palm_rolling(model, state, shape, params.roll_deg, params.pitch_deg, params.roll_steps,
                              first_timestamp, params.roll_axis, params.reseat_travel_cap);
  }
  throw InvalidArgument("unknown interaction mode");
}

}  // namespace tactex
