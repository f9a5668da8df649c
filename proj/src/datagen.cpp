#include "tactex/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "tactex/errors.hpp"
#include "tactex/ply.hpp"
#include "tactex/util.hpp"

namespace tactex {

namespace {

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d u;
  do {
    u = {g(rng), g(rng), g(rng)};
  } while (u.norm() < 1e-9);
  return u.normalized();
}

std::string truncation_tag(double fraction) { return fmt::format("t{:02d}", std::lround(fraction * 100.0)); }

nlohmann::json augment_to_json(const AugmentationSpec& a) {
  return {{"truncations", a.truncations},
          {"noise_sigma_mm", a.noise_sigma},
          {"rotation", a.rotation == RotationAugment::Uniform ? "uniform" : "none"},
          {"noise_and_rotation", "applied at training time, not materialized"}};
}

}  // namespace

void AugmentationSpec::validate() const {
  for (double f : truncations)
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError(fmt::format("truncation fraction {} outside [0, 1)", f));
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
}

DatasetSample generate_sample(const GripperModel& model, const PrimitiveShape& shape, const std::string& shape_id,
                              std::uint64_t seed, const GenerationOptions& options) {
  shape.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> yaw_dist(0.0, 2.0 * std::numbers::pi);
  const Point3 center = shape.pose.translation;
  const double reach = shape.bounding_radius() + options.standoff;

  for (int attempt = 0; attempt < options.retry_cap; ++attempt) {
    const Eigen::Vector3d u = random_direction(rng);
    const double yaw = yaw_dist(rng);
    // (1) palm at a preset distance, facing the object
    const GripperState start = options.face_away ? standoff_state(center + 2.0 * reach * u, -u, yaw, reach)
                                                 : standoff_state(center, u, yaw, reach);
    ApproachResult touch;
    try {
      // (2) approach along the palm normal
      touch = approach_until_contact(model, start, UnitVec3(start.palm_normal()), shape, model.approach_step,
                                     2.0 * reach);
    } catch (const NoContact&) {
      continue;
    } catch (const PenetrationTooDeep&) {
      continue;
    }
    // (3) close the fingers, (4) extract contacts
    const ApproachResult grasp = close_fingers_until_contact(model, touch.state, shape, 1);
    DatasetSample s;
    s.shape_id = shape_id;
    s.shape = shape;
    s.input = touch.event.cloud;
    const std::set<int> seen(touch.event.taxel_ids.begin(), touch.event.taxel_ids.end());
    for (std::size_t i = 0; i < grasp.event.taxel_ids.size(); ++i) {
      if (seen.count(grasp.event.taxel_ids[i])) continue;
      s.input.points.push_back(grasp.event.cloud.points[i]);
      s.input.normals->push_back((*grasp.event.cloud.normals)[i]);
      s.input.timestamps->push_back(1);
    }
    s.target = sample_surface(shape, options.n_target, splitmix64(seed ^ 0x7461726765747321ULL));
    try {
      s.normalization = normalize_cloud(s.input, options.lambda).second;
    } catch (const Error&) {
      s.normalization.reset();
    }
    return s;
  }
  throw GenerationFailed(fmt::format("{}: no contact after {} initializations", shape_id, options.retry_cap));
}

PointCloud truncate_points(const PointCloud& cloud, double fraction) {
  if (!cloud.has_timestamps()) throw MissingTimestamps("truncation needs contact timestamps");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument(fmt::format("truncation fraction {} outside [0, 1)", fraction));
  const std::size_t m = cloud.size();
  const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m)));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const auto& ts = *cloud.timestamps;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ts[a] < ts[b]; });
  std::vector<char> keep(m, 0);
  for (std::size_t k = 0; k < m - drop; ++k) keep[order[k]] = 1;

  PointCloud out;
  if (cloud.has_normals()) out.normals.emplace();
  out.timestamps.emplace();
  for (std::size_t i = 0; i < m; ++i) {
    if (!keep[i]) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.has_normals()) out.normals->push_back((*cloud.normals)[i]);
    out.timestamps->push_back(ts[i]);
  }
  return out;
}

PointCloud add_noise(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& p : out.points)
    for (int k = 0; k < 3; ++k) p[k] += g(rng);
  return out;
}

DatasetSample random_rotation(const DatasetSample& sample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Pose r;
  r.rotation = haar_rotation(rng);
  DatasetSample out = sample;
  out.input = transform_cloud(sample.input, r);
  out.target = transform_cloud(sample.target, r);
  out.shape.pose = r * sample.shape.pose;
  return out;
}

std::vector<SuiteEntry> dataset_meshes(const DatasetConfig& config) {
  if (config.variants_per_object == 0) return config.suite.objects;
  std::vector<SuiteEntry> out;
  for (std::size_t i = 0; i < config.suite.objects.size(); ++i) {
    const auto& base = config.suite.objects[i];
    for (std::size_t v = 0; v < config.variants_per_object; ++v) {
      std::mt19937_64 rng(derive_seed(config.seed, {0x6d657368ULL, i, v}));
      std::uniform_real_distribution<double> scale(0.7, 1.3);
      SuiteEntry e = base;
      e.id = fmt::format("{}_v{:03d}", base.id, v);
      for (int k = 0; k < 3; ++k) e.shape.dims[k] *= scale(rng);
      out.push_back(std::move(e));
    }
  }
  return out;
}

nlohmann::json build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  config.augment.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));

  const std::vector<SuiteEntry> meshes = dataset_meshes(config);
  const std::size_t jobs = meshes.size() * config.per_shape;
  std::vector<nlohmann::json> records(jobs);

  parallel_for(jobs, config.threads, [&](std::size_t job) {
    const std::size_t m = job / config.per_shape, k = job % config.per_shape;
    const std::uint64_t seed = derive_seed(config.seed, {m, k});
    const DatasetSample s = generate_sample(config.hand, meshes[m].shape, meshes[m].id, seed, config.generation);
    nlohmann::json rec = nlohmann::json::array();
    for (double frac : config.augment.truncations) {
      const std::string id = fmt::format("{}_{:03d}_{}", meshes[m].id, k, truncation_tag(frac));
      const PointCloud input = truncate_points(s.input, frac);
      const std::vector<std::string> comments = {fmt::format("sample {}", id), fmt::format("seed {}", seed),
                                                 fmt::format("truncation {}", frac)};
      const std::string in_text = to_ply_string(input, comments);
      const std::string tgt_text = to_ply_string(s.target, comments);
      write_file_atomic(out_dir / (id + "_input.ply"), in_text);
      write_file_atomic(out_dir / (id + "_target.ply"), tgt_text);
      nlohmann::json norm = nullptr;
      if (s.normalization)
        norm = {{"lambda", s.normalization->lambda},
                {"mean", {s.normalization->mean.x(), s.normalization->mean.y(), s.normalization->mean.z()}},
                {"sigma", s.normalization->sigma}};
      rec.push_back({{"id", id},
                     {"mesh", meshes[m].id},
                     {"interaction", k},
                     {"truncation", frac},
                     {"seed", seed},
                     {"input_points", input.size()},
                     {"target_points", s.target.size()},
                     {"normalization", norm},
                     {"input_sha256", sha256_hex(in_text)},
                     {"target_sha256", sha256_hex(tgt_text)}});
    }
    records[job] = std::move(rec);
  });

  nlohmann::json samples = nlohmann::json::array();
  for (auto& rec : records)
    for (auto& r : rec) samples.push_back(std::move(r));
  nlohmann::json mesh_list = nlohmann::json::array();
  for (const auto& m : meshes) mesh_list.push_back({{"id", m.id}, {"category", m.category}, {"shape", shape_to_json(m.shape)}});

  nlohmann::json manifest = {
      {"schema_version", 1},
      {"master_seed", config.seed},
      {"lambda", config.generation.lambda},
      {"n_target", config.generation.n_target},
      {"augmentation", augment_to_json(config.augment)},
      {"counts",
       {{"meshes", meshes.size()},
        {"per_shape", config.per_shape},
        {"truncation_levels", config.augment.truncations.size()},
        {"samples", samples.size()}}},
      {"hand", gripper_to_json(config.hand)},
      {"meshes", mesh_list},
      {"samples", samples}};
  const std::string text = manifest.dump(2) + "\n";
  write_file_atomic(out_dir / "manifest.json", text);
  write_file_atomic(out_dir / "manifest.sha256", sha256_hex(text) + "  manifest.json\n");
  return manifest;
}

DatasetConfig load_dataset_config(const std::filesystem::path& path, std::filesystem::path* out_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  try {
    DatasetConfig c;
    c.suite = j.contains("suite") ? load_suite(resolve(j.at("suite").get<std::string>())) : default_suite();
    if (j.contains("hand")) c.hand = load_gripper(resolve(j.at("hand").get<std::string>()));
    c.per_shape = j.value("per_shape", c.per_shape);
    c.variants_per_object = j.value("variants_per_object", c.variants_per_object);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.generation.n_target = j.value("n_target", c.generation.n_target);
    c.generation.lambda = j.value("lambda", c.generation.lambda);
    c.generation.retry_cap = j.value("retry_cap", c.generation.retry_cap);
    c.generation.standoff = j.value("standoff_mm", c.generation.standoff);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment.truncations = a.value("truncations", c.augment.truncations);
      c.augment.noise_sigma = a.value("noise_sigma_mm", c.augment.noise_sigma);
      const std::string rot = a.value("rotation", std::string("uniform"));
      if (rot != "uniform" && rot != "none") throw ConfigError(fmt::format("unknown rotation augment '{}'", rot));
      c.augment.rotation = rot == "uniform" ? RotationAugment::Uniform : RotationAugment::None;
    }
    c.augment.validate();
    if (!(c.generation.lambda > 0.0)) throw ConfigError("lambda must be positive");
    if (c.generation.n_target < 1) throw ConfigError("n_target must be >= 1");
    if (out_dir) *out_dir = resolve(j.value("out_dir", std::string("dataset")));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace tactex
