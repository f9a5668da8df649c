#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tactex/geometry.hpp"
#include "tactex/primitives.hpp"

namespace tactex {

/// Normalized, normal-bearing partial cloud plus the parameters that map it
/// back to the base frame.
struct CompleterInput {
  PointCloud cloud;
  NormalizationParams params;

  /// Normalizes `measured` (which must carry normals). Falls back to the RMS
  /// radius as scale when the norm spread vanishes.
  static CompleterInput from_measured(const PointCloud& measured, double lambda = 1.0);

  /// Throws InvalidArgument unless the cloud has zero mean and norm-sigma 1/lambda.
  void check() const;
};

enum class FitClass { Sphere, Cylinder, Ellipsoid, Box };

std::string to_string(FitClass c);
/// Free parameters of the class (sphere 4, cylinder 8, ellipsoid 9, box 9).
int parameter_count(FitClass c);

struct FitResult {
  FitClass cls = FitClass::Sphere;
  PrimitiveShape shape;        // in the frame of the fitted cloud
  double residual = 0.0;       // mean |sdf| over inliers, mm
  double inlier_fraction = 0.0;
  bool normals_agree = true;   // body on the inward side of the contact normals
};

struct FitOptions {
  double inlier_mm = 3.0;  // |sdf| below this counts as inlier
  double mm_per_unit = 1.0;  // scale of the cloud coordinates
  std::size_t max_fit_points = 1024;
};

/// Least-squares fit of one class. Sphere: normal-line fit plus geometric
/// refinement; ellipsoid: quadric with gradient-parallel-to-normal rows;
/// box: normal clustering into three orthogonal face directions; cylinder:
/// axis from the normal-field null space and an ellipse fit across it.
/// Throws DegenerateConfiguration (coplanar points for the curved classes,
/// non-elliptic quadrics, ...) and TooFewPoints below 8 points.
FitResult fit_primitive(FitClass cls, const PointCloud& cloud, const FitOptions& options = {});

/// Lowest residual wins; fits within 5% of it go to the one with fewer
/// parameters. Throws InvalidArgument on an empty list.
FitResult select_model(const std::vector<FitResult>& fits);

struct ClassAttempt {
  FitClass cls;
  std::optional<FitResult> fit;
  std::string failure;  // empty when `fit` is usable
};

struct BeliefState {
  PointCloud cloud;     // P_pred in the base frame, with normals
  std::optional<FitResult> fit;  // chosen fit, base frame (reference completer)
  std::vector<ClassAttempt> attempts;
  bool fallback = false;  // no class fit; ball prior used
  int generation = 0;
};

struct CompletionOptions {
  std::size_t n_out = 2048;
  std::uint64_t seed = 0;
  double inlier_mm = 3.0;
  bool allow_fallback = true;  // false: FitFailed instead of the ball prior
};

/// Reference completer: fits every class to the normalized input, rejects
/// fits that contradict the contact normals, picks one with `select_model`,
/// and resamples `n_out` novel points on it in the base frame.
BeliefState complete(const CompleterInput& input, const CompletionOptions& options = {});

/// Completer signature used by the exploration loop.
using Completer = std::function<BeliefState(const CompleterInput&, const CompletionOptions&)>;

Completer reference_completer();

/// Completer backed by an external process sharing `exchange_dir`: writes
/// input.ply and params.json, polls for output.ply, validates the point
/// count and disjointness, and denormalizes.
BeliefState external_complete(const CompleterInput& input, const std::filesystem::path& exchange_dir,
                              const CompletionOptions& options = {},
                              std::chrono::milliseconds timeout = std::chrono::seconds(60));

Completer external_completer(std::filesystem::path exchange_dir,
                             std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// True when no point of `a` equals a point of `b` exactly.
bool disjoint(const PointCloud& a, const PointCloud& b);

}  // namespace tactex
