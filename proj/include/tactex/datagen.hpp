#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/geometry.hpp"
#include "tactex/gripper.hpp"
#include "tactex/primitives.hpp"

namespace tactex {

struct DatasetSample {
  std::string shape_id;
  PrimitiveShape shape;
  PointCloud input;   // tactile contacts with normals and timestamps
  PointCloud target;  // dense surface sample
  std::optional<NormalizationParams> normalization;  // of the input, when defined
};

enum class RotationAugment { None, Uniform };

struct AugmentationSpec {
  std::vector<double> truncations = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double noise_sigma = 1.0;  // mm
  RotationAugment rotation = RotationAugment::Uniform;

  void validate() const;
};

struct GenerationOptions {
  std::size_t n_target = 2048;
  double standoff = 40.0;  // mm beyond the bounding sphere
  int retry_cap = 10;
  double lambda = 1.0;
  bool face_away = false;  // palm turned away from the object (error path)
};

/// Four-step contact sequence: random hand placement facing the object,
/// approach to first contact, finger closure, contact extraction. Palm
/// contacts from the approach carry timestamp 0, contacts added by the
/// closure timestamp 1. Throws GenerationFailed after `retry_cap` misses.
DatasetSample generate_sample(const GripperModel& model, const PrimitiveShape& shape, const std::string& shape_id,
                              std::uint64_t seed, const GenerationOptions& options = {});

/// Drops the floor(fraction * M) latest points (timestamp, then index);
/// survivors keep their order.
PointCloud truncate_points(const PointCloud& cloud, double fraction);

/// Per-coordinate i.i.d. Gaussian noise; normals and timestamps unchanged.
PointCloud add_noise(const PointCloud& cloud, double sigma, std::uint64_t seed);

/// The same Haar-random rotation applied to input and target.
DatasetSample random_rotation(const DatasetSample& sample, std::uint64_t seed);

struct DatasetConfig {
  ObjectSuite suite;
  GripperModel hand = GripperModel::default_model();
  std::size_t per_shape = 20;
  std::size_t variants_per_object = 0;  // 0: the suite objects themselves
  AugmentationSpec augment;
  GenerationOptions generation;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Suite objects, or randomized per-axis rescalings in [0.7, 1.3] of each.
std::vector<SuiteEntry> dataset_meshes(const DatasetConfig& config);

/// Writes `<id>_input.ply` / `<id>_target.ply` pairs for every mesh,
/// interaction and truncation level plus `manifest.json`. Returns the manifest.
nlohmann::json build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

/// Reads a dataset config file (suite and hand paths resolve relative to it).
DatasetConfig load_dataset_config(const std::filesystem::path& path, std::filesystem::path* out_dir = nullptr);

}  // namespace tactex
