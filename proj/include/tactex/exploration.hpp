#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/completion.hpp"
#include "tactex/contact_modes.hpp"
#include "tactex/gripper.hpp"
#include "tactex/kdtree.hpp"

namespace tactex {

struct Workspace {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-400.0);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(400.0);

  bool contains(const Point3& p) const;
};

struct ExplorationConfig {
  double coverage_threshold = 5.0;  // mm
  std::size_t k = 500;              // importance samples per iteration
  double sigma = 5.0;               // IG bandwidth, mm
  std::array<double, 6> weights = {1, 1, 1, 50, 50, 50};  // mm and rad coordinates
  int trajectory_steps = 20;
  int convergence_window = 3;         // K
  double convergence_threshold = 0.01;  // belief-to-belief Chamfer, dimensionless
  int max_interactions = 20;
  InteractionMode mode = InteractionMode::FingerGrazing;
  ModeParams mode_params;
  Workspace workspace;
  double clearance = 5.0;        // mm, standoff placement margin
  double extra_standoff = 10.0;  // mm beyond the hand depth
  double approach_overshoot = 60.0;  // mm past the target before giving up
  int resample_rounds = 1;       // fresh candidate draws after all fail
  std::size_t n_pred = 2048;
  double lambda = 1.0;
  double inlier_mm = 3.0;
  int init_retry_cap = 10;
  double init_standoff = 40.0;  // mm beyond the bounding sphere

  void validate() const;
};

nlohmann::json exploration_config_to_json(const ExplorationConfig& c);
ExplorationConfig exploration_config_from_json(const nlohmann::json& j);

/// Self-information of the coverage kernel: d^2 / (2 sigma^2).
double information_gain(double d_min, double sigma);

struct CandidatePose {
  std::size_t index = 0;      // draw order
  std::size_t belief_index = 0;
  Point3 target = Point3::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  GripperState state;         // standoff placement, fingers open
  double d_min = 0.0;
  double ig = 0.0;
  double cost = 0.0;
  double score = 0.0;
  bool checked = false;
  bool feasible = false;
  std::string reason;  // why infeasible
};

/// Hand depth plus the configured clearance.
double standoff_distance(const GripperModel& model, const ExplorationConfig& config);

/// Belief points farther than the coverage threshold from every measured
/// point, k draws with replacement weighted by IG, each turned into a
/// standoff pose facing the point. Throws NothingToExplore.
std::vector<CandidatePose> sample_candidates(const PointCloud& belief, const PointCloud& measured,
                                             const GripperModel& model, const ExplorationConfig& config,
                                             std::uint64_t seed);

/// Signed distance to a point-cloud surface: offset along the normal of the
/// nearest point. Negative inside.
class CloudSurface {
 public:
  explicit CloudSurface(const PointCloud& cloud);
  double signed_distance(const Point3& p) const;
  double min_signed_distance(const PointCloud& pts, double stop_below) const;

 private:
  PointCloud cloud_;
  KdTree tree_;
};

/// Two-stage check of one candidate against an obstacle surface: standoff
/// pose inside the workspace with every taxel at least `clearance` clear,
/// then a straight approach whose first touch is a palm taxel.
void check_feasible(CandidatePose& c, const CloudSurface& obstacle, const GripperModel& model,
                    const ExplorationConfig& config);

/// Flags every candidate; nothing is dropped or reordered.
void filter_feasible(std::vector<CandidatePose>& candidates, const CloudSurface& obstacle, const GripperModel& model,
                     const ExplorationConfig& config);

/// Weighted L1 length of a linearly interpolated path in (x, y, z, rotation
/// vector relative to `from`) coordinates.
double motion_cost(const Pose& from, const Pose& to, const std::array<double, 6>& weights, int steps = 20);

/// Sorts by score, then lower cost, then index.
void rank_candidates(std::vector<CandidatePose>& candidates);

/// score = IG - cost from `current`, then `rank_candidates`.
void score_candidates(std::vector<CandidatePose>& candidates, const Pose& current, const ExplorationConfig& config);

struct IterationRecord {
  int iteration = 0;
  std::size_t events = 0;
  std::size_t interaction_points = 0;
  double contact_volume = 0.0;  // of this interaction alone, mm^3
  bool contact_lost = false;
  std::size_t measured_points = 0;
  std::string belief_class;  // fitted class or "fallback"/"external"
  nlohmann::json belief_fit;
  double chamfer_gt = 0.0;
  std::optional<double> chamfer_prev;
  std::size_t candidates_sampled = 0;
  std::size_t candidates_checked = 0;
  std::size_t approach_failures = 0;
  std::optional<CandidatePose> chosen;
  bool contacts_valid = true;
  double max_abs_sdf = 0.0;
  double min_normal_dot = 1.0;
};

enum class Termination { Converged, Coverage, Cap, NoFeasibleCandidate, InitFailed };
std::string to_string(Termination t);

struct EpisodeRecord {
  std::vector<IterationRecord> iterations;
  PointCloud measured;
  BeliefState belief;
  bool converged = false;
  Termination termination = Termination::Cap;
  int interactions = 0;
  std::string failure;
};

/// Interact, accumulate, complete, sample/filter/score, move; repeat.
/// Stops on K consecutive stable beliefs, coverage saturation, or the cap.
EpisodeRecord run_episode(const PrimitiveShape& shape, const GripperModel& model, const ExplorationConfig& config,
                          std::uint64_t seed, const Completer& completer = reference_completer());

/// Pose of a candidate as JSON.
nlohmann::json candidate_to_json(const CandidatePose& c);
nlohmann::json iteration_to_json(const IterationRecord& r);

}  // namespace tactex
