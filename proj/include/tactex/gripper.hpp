#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/geometry.hpp"
#include "tactex/primitives.hpp"

namespace tactex {

enum class Region { Tip, Nail, Pad, Palm };
std::string to_string(Region r);

/// Regular taxel grid. On the palm rows run along the lateral axis and
/// columns along the finger direction; on finger links rows run along the
/// link and columns wrap around the palmar side.
struct TaxelArray {
  Region region = Region::Palm;
  int rows = 0;
  int cols = 0;
  double pitch = 1.0;  // mm

  int size() const { return rows * cols; }
};

struct FingerSpec {
  std::string name;
  Eigen::Vector2d base = Eigen::Vector2d::Zero();  // on the palm plane, mm
  double yaw_deg = 0.0;        // finger direction at zero curl, about the palm normal
  double abduction_deg = 0.0;  // thumb only, frozen
  bool thumb = false;
};

inline constexpr int kFingerCount = 5;

/// Five-fingered hand. Palm frame: x lateral, y toward the fingers, z the
/// palm normal pointing at the object. The palmar surface is cupped toward
/// the object: z = x^2 / (2 Rx) + y^2 / (2 Ry). Finger bases sit on it.
///
/// Each finger has one curl joint driving both links 1:1. With the fixed rest
/// extension e, link 1 points along angle t - e and link 2 along 2t - e,
/// measured from the finger direction toward the palm normal.
struct GripperModel {
  int schema_version = 1;
  std::string name = "tactile-hand";

  double palm_width = 60.0;
  double palm_length = 100.0;
  double palm_concavity_x = 60.0;  // lateral radius of curvature, mm
  double palm_concavity_y = 60.0;  // longitudinal
  TaxelArray palm{Region::Palm, 8, 14, 6.0};

  double finger_radius = 8.0;
  double link1 = 35.0;
  double link2 = 30.0;
  double theta_max_deg = 110.0;
  double rest_extension_deg = 20.0;  // open fingers bend back from the palm plane
  TaxelArray pad{Region::Pad, 10, 8, 4.0};
  TaxelArray nail{Region::Nail, 12, 8, 3.0};
  TaxelArray tip{Region::Tip, 3, 3, 4.0};
  std::array<FingerSpec, kFingerCount> fingers;

  double contact_tol = 0.5;
  double approach_step = 2.0;
  int bisection_steps = 10;
  double curl_step_deg = 2.0;

  static GripperModel default_model();

  void validate() const;
  double theta_max() const;
  int taxels_per_finger() const { return pad.size() + nail.size() + tip.size(); }
  int taxel_count() const { return palm.size() + kFingerCount * taxels_per_finger(); }
  /// Taxel ids owned by finger `f` are [finger_offset(f), finger_offset(f) + taxels_per_finger()).
  int finger_offset(int f) const { return palm.size() + f * taxels_per_finger(); }
  Region region_of(int taxel) const;
  /// -1 for palm taxels.
  int finger_of(int taxel) const;

  /// Taxel positions in the palm frame for one finger at curl `theta`.
  void finger_taxels_local(int f, double theta, std::vector<Point3>& out) const;
  std::vector<Point3> palm_taxels_local() const;
  double palm_height(double x, double y) const;
};

nlohmann::json gripper_to_json(const GripperModel& m);
GripperModel gripper_from_json(const nlohmann::json& j);
GripperModel load_gripper(const std::filesystem::path& path);

struct GripperState {
  Pose pose;  // palm frame -> base frame
  std::array<double, kFingerCount> curls{};

  Eigen::Vector3d palm_normal() const { return pose.rotation.col(2); }
};

/// Open hand whose palm center sits `standoff` mm out along the outward
/// surface normal `n` at `target`, palm facing the surface, rotated by `yaw`
/// (rad) about the normal.
GripperState standoff_state(const Point3& target, const Eigen::Vector3d& n, double yaw, double standoff);

struct ContactEvent {
  PointCloud cloud;  // snapped points, normals, timestamps
  std::vector<int> taxel_ids;
  GripperState state;

  bool empty() const { return taxel_ids.empty(); }
};

/// One point per taxel in the base frame: palm first, then per finger the
/// pad, nail and tip arrays.
PointCloud taxel_positions(const GripperModel& model, const GripperState& state);

/// Every taxel with sdf <= tol, snapped to the closest surface point. Throws
/// PenetrationTooDeep if any taxel is deeper than 2 * tol.
ContactEvent detect_contacts(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape,
                             double tol, std::int64_t timestamp = 0);

/// Smallest signed distance over all taxels, over the palm only, or over one
/// finger (`finger` >= 0).
inline constexpr int kAllTaxels = -2;
inline constexpr int kPalmTaxels = -1;
double min_clearance(const GripperModel& model, const GripperState& state, const PrimitiveShape& shape,
                     int subset = kAllTaxels);

struct ApproachResult {
  GripperState state;
  ContactEvent event;
  double travel = 0.0;
};

/// Translates the hand from `start` along `direction` in increments of
/// `step` until a taxel comes within tol, then bisects so that the closest
/// taxel ends with 0 <= sdf <= tol. Throws NoContact past `max_travel`.
ApproachResult approach_until_contact(const GripperModel& model, const GripperState& start, const UnitVec3& direction,
                                      const PrimitiveShape& shape, double step, double max_travel,
                                      std::int64_t timestamp = 0);

/// Closes each finger independently from its current curl in fixed
/// increments until one of its taxels is within tol (bisection refined) or
/// the joint limit is reached. A finger that starts in penetration opens
/// until it is clear first.
ApproachResult close_fingers_until_contact(const GripperModel& model, const GripperState& state,
                                           const PrimitiveShape& shape, std::int64_t timestamp = 0);

/// Seats one finger: the curl at which its closest taxel has 0 <= sdf <= tol,
/// searched from `curl` (opening if penetrating, closing otherwise). Returns
/// theta_max when it never touches.
double seat_finger(const GripperModel& model, const GripperState& state, int f, const PrimitiveShape& shape);

}  // namespace tactex
