#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/gripper.hpp"

namespace tactex {

enum class InteractionMode { GraspReleasing, FingerGrazing, PalmRolling };
std::string to_string(InteractionMode m);
InteractionMode interaction_mode_from_string(const std::string& s);

/// Axis of the first rolling phase: the palm normal, or the hand's
/// longitudinal (wrist) axis.
enum class RollAxis { PalmNormal, Longitudinal };
std::string to_string(RollAxis a);
RollAxis roll_axis_from_string(const std::string& s);

struct ModeParams {
  double retract_mm = 30.0;
  int graze_steps = 15;
  double roll_deg = 30.0;
  double pitch_deg = 30.0;
  int roll_steps = 12;  // increments per roll_deg of rotation
  RollAxis roll_axis = RollAxis::Longitudinal;
  double reseat_travel_cap = 30.0;  // mm
};

nlohmann::json mode_params_to_json(const ModeParams& p);
ModeParams mode_params_from_json(const nlohmann::json& j);

struct InteractionResult {
  std::vector<ContactEvent> events;
  PointCloud merged;  // concatenated event clouds
  int steps = 0;      // executed motion increments
  bool contact_lost = false;
  GripperState final_state;
  std::int64_t next_timestamp = 0;
};

/// Closes all fingers once from a palm contact, records one snapshot and
/// reopens.
InteractionResult run_grasp_releasing(const GripperModel& model, const GripperState& state,
                                      const PrimitiveShape& shape, std::int64_t first_timestamp = 0);

/// Grasp snapshot, then `steps` retract increments along the palm normal;
/// after each one every finger re-seats on the surface. Ends early once
/// nothing touches.
InteractionResult run_finger_grazing(const GripperModel& model, const GripperState& state,
                                     const PrimitiveShape& shape, double retract_mm, int steps,
                                     std::int64_t first_timestamp = 0);

/// With fingers open: roll 0 -> +roll -> -roll -> 0 about the roll axis,
/// then pitch 0 -> pitch about the palm's lateral axis (fingers lifting
/// away). Every increment is followed by a translation along the palm
/// normal that restores 0 <= min sdf <= tol. A restore beyond
/// `reseat_travel_cap` ends the sweep with `contact_lost` set.
InteractionResult run_palm_rolling(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape,
                                   double roll_deg, double pitch_deg, int steps, std::int64_t first_timestamp = 0,
                                   RollAxis axis = RollAxis::Longitudinal, double reseat_travel_cap = 30.0);

InteractionResult run_interaction(InteractionMode mode, const ModeParams& params, const GripperModel& model,
                                  const GripperState& state, const PrimitiveShape& shape,
                                  std::int64_t first_timestamp = 0);

}  // namespace tactex
