#include "tactex/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "tactex/errors.hpp"
#include "tactex/util.hpp"

namespace tactex {

namespace {

// Central-difference gradient of the signed distance just off the surface on
// the side of `n`.
Eigen::Vector3d sdf_gradient(const PrimitiveShape& shape, const Point3& p, const Eigen::Vector3d& n) {
  const Point3 q = p + 1e-3 * n;
  const double h = 1e-5;
  Eigen::Vector3d g;
  for (int k = 0; k < 3; ++k) {
    Point3 a = q, b = q;
    a[k] += h;
    b[k] -= h;
    g[k] = (signed_distance(shape, a) - signed_distance(shape, b)) / (2 * h);
  }
  return g.normalized();
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

bool converged(const std::vector<IterationRecord>& its, const ExplorationConfig& c) {
  const auto k = static_cast<std::size_t>(c.convergence_window);
  if (its.size() < k) return false;
  for (std::size_t i = its.size() - k; i < its.size(); ++i)
    if (!its[i].chamfer_prev || *its[i].chamfer_prev >= c.convergence_threshold) return false;
  return true;
}

nlohmann::json fit_json(const BeliefState& b) {
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& a : b.attempts) {
    nlohmann::json j = {{"class", to_string(a.cls)}, {"failure", a.failure}};
    if (a.fit) j["residual_mm"] = a.fit->residual, j["inlier_fraction"] = a.fit->inlier_fraction;
    attempts.push_back(std::move(j));
  }
  nlohmann::json out = {{"fallback", b.fallback}, {"attempts", attempts}};
  if (b.fit) {
    out["class"] = to_string(b.fit->cls);
    out["shape"] = shape_to_json(b.fit->shape);
    out["residual_mm"] = b.fit->residual;
    out["inlier_fraction"] = b.fit->inlier_fraction;
  }
  return out;
}

}  // namespace

bool Workspace::contains(const Point3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

void ExplorationConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (max_interactions < 1) throw ConfigError("max_interactions must be >= 1");
  if (convergence_window < 1) throw ConfigError("convergence window must be >= 1");
  if (!(coverage_threshold >= 0.0)) throw ConfigError("coverage threshold must be >= 0");
  if (trajectory_steps < 1) throw ConfigError("trajectory steps must be >= 1");
  for (double w : weights)
    if (!(w >= 0.0)) throw ConfigError("motion weights must be >= 0");
  if (n_pred < 1) throw ConfigError("n_pred must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if ((workspace.min.array() >= workspace.max.array()).any()) throw ConfigError("empty workspace box");
}

nlohmann::json exploration_config_to_json(const ExplorationConfig& c) {
  return {{"coverage_threshold_mm", c.coverage_threshold},
          {"k", c.k},
          {"sigma_mm", c.sigma},
          {"motion_weights", c.weights},
          {"trajectory_steps", c.trajectory_steps},
          {"convergence_window", c.convergence_window},
          {"convergence_threshold", c.convergence_threshold},
          {"max_interactions", c.max_interactions},
          {"mode", to_string(c.mode)},
          {"mode_params", mode_params_to_json(c.mode_params)},
          {"workspace", {{"min", vec_json(c.workspace.min)}, {"max", vec_json(c.workspace.max)}}},
          {"clearance_mm", c.clearance},
          {"extra_standoff_mm", c.extra_standoff},
          {"approach_overshoot_mm", c.approach_overshoot},
          {"resample_rounds", c.resample_rounds},
          {"n_pred", c.n_pred},
          {"lambda", c.lambda},
          {"inlier_mm", c.inlier_mm},
          {"init_retry_cap", c.init_retry_cap},
          {"init_standoff_mm", c.init_standoff}};
}

ExplorationConfig exploration_config_from_json(const nlohmann::json& j) {
  ExplorationConfig c;
  try {
    c.coverage_threshold = j.value("coverage_threshold_mm", c.coverage_threshold);
    c.k = j.value("k", c.k);
    c.sigma = j.value("sigma_mm", c.sigma);
    c.weights = j.value("motion_weights", c.weights);
    c.trajectory_steps = j.value("trajectory_steps", c.trajectory_steps);
    c.convergence_window = j.value("convergence_window", c.convergence_window);
    c.convergence_threshold = j.value("convergence_threshold", c.convergence_threshold);
    c.max_interactions = j.value("max_interactions", c.max_interactions);
    if (j.contains("mode")) c.mode = interaction_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("mode_params")) c.mode_params = mode_params_from_json(j.at("mode_params"));
    if (j.contains("workspace")) {
      const auto& w = j.at("workspace");
      const auto lo = w.at("min").get<std::array<double, 3>>(), hi = w.at("max").get<std::array<double, 3>>();
      c.workspace.min = {lo[0], lo[1], lo[2]};
      c.workspace.max = {hi[0], hi[1], hi[2]};
    }
    c.clearance = j.value("clearance_mm", c.clearance);
    c.extra_standoff = j.value("extra_standoff_mm", c.extra_standoff);
    c.approach_overshoot = j.value("approach_overshoot_mm", c.approach_overshoot);
    c.resample_rounds = j.value("resample_rounds", c.resample_rounds);
    c.n_pred = j.value("n_pred", c.n_pred);
    c.lambda = j.value("lambda", c.lambda);
    c.inlier_mm = j.value("inlier_mm", c.inlier_mm);
    c.init_retry_cap = j.value("init_retry_cap", c.init_retry_cap);
    c.init_standoff = j.value("init_standoff_mm", c.init_standoff);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("exploration config: {}", e.what()));
  }
  c.validate();
  return c;
}

double information_gain(double d_min, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (!(d_min >= 0.0)) throw InvalidArgument("d_min must be >= 0");
  return d_min * d_min / (2.0 * sigma * sigma);
}

double standoff_distance(const GripperModel& model, const ExplorationConfig& config) {
  const PointCloud rest = taxel_positions(model, GripperState{});
  double depth = 0.0;
  for (const auto& p : rest.points) depth = std::max(depth, p.z());
  return depth + config.extra_standoff;
}

std::vector<CandidatePose> sample_candidates(const PointCloud& belief, const PointCloud& measured,
                                             const GripperModel& model, const ExplorationConfig& config,
                                             std::uint64_t seed) {
  if (belief.empty() || measured.empty()) throw EmptyCloud("candidate sampling needs belief and measured points");
  const KdTree tree(measured.points);
  const std::vector<double> d = coverage_distances(belief.points, tree);
  std::vector<std::size_t> eligible;
  std::vector<double> weight;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= config.coverage_threshold) continue;
    eligible.push_back(i);
    weight.push_back(information_gain(d[i], config.sigma));
  }
  if (eligible.empty())
    throw NothingToExplore(fmt::format("every predicted point lies within {} mm of a contact", config.coverage_threshold));

  const PointCloud oriented = belief.has_normals() ? belief : estimate_normals(belief);
  const double standoff = standoff_distance(model, config);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
  std::uniform_real_distribution<double> yaw(0.0, 2.0 * std::numbers::pi);
  std::vector<CandidatePose> out(config.k);
  for (std::size_t j = 0; j < config.k; ++j) {
    CandidatePose& c = out[j];
    const std::size_t e = eligible[pick(rng)];
    c.index = j;
    c.belief_index = e;
    c.target = belief.points[e];
    c.normal = (*oriented.normals)[e];
    c.state = standoff_state(c.target, c.normal, yaw(rng), standoff);
    c.d_min = d[e];
    c.ig = information_gain(d[e], config.sigma);
  }
  return out;
}

CloudSurface::CloudSurface(const PointCloud& cloud) : cloud_(cloud), tree_(cloud.points) {
  if (!cloud_.has_normals()) throw InvalidArgument("cloud surface needs normals");
}

double CloudSurface::signed_distance(const Point3& p) const {
  const auto nn = tree_.nearest(p);
  return (p - cloud_.points[nn.index]).dot((*cloud_.normals)[nn.index]);
}

double CloudSurface::min_signed_distance(const PointCloud& pts, double stop_below) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts.points) {
    best = std::min(best, signed_distance(p));
    if (best < stop_below) break;
  }
  return best;
}

void check_feasible(CandidatePose& c, const CloudSurface& obstacle, const GripperModel& model,
                    const ExplorationConfig& config) {
  c.checked = true;
  c.feasible = false;
  if (!config.workspace.contains(c.state.pose.translation)) {
    c.reason = "outside workspace";
    return;
  }
  const PointCloud taxels = taxel_positions(model, c.state);
  if (obstacle.min_signed_distance(taxels, config.clearance) < config.clearance) {
    c.reason = "standoff placement collides";
    return;
  }
  // straight approach along the palm axis: the first touch must be the palm
  const Eigen::Vector3d dir = c.state.palm_normal();
  const double limit = standoff_distance(model, config) + config.approach_overshoot;
  double s = 0.0;
  while (s <= limit) {
    double best = std::numeric_limits<double>::infinity();
    int first = -1;
    for (std::size_t i = 0; i < taxels.size(); ++i) {
      const double v = obstacle.signed_distance(taxels.points[i] + s * dir);
      if (v < best) best = v, first = static_cast<int>(i);
    }
    if (best <= 0.0) {
      if (model.region_of(first) != Region::Palm) {
        c.reason = "fingers touch before the palm";
        return;
      }
      c.feasible = true;
      c.reason.clear();
      return;
    }
    s += std::max(model.approach_step, best - model.approach_step);
  }
  c.reason = "approach misses the predicted surface";
}

void filter_feasible(std::vector<CandidatePose>& candidates, const CloudSurface& obstacle, const GripperModel& model,
                     const ExplorationConfig& config) {
  for (auto& c : candidates) check_feasible(c, obstacle, model, config);
}

double motion_cost(const Pose& from, const Pose& to, const std::array<double, 6>& weights, int steps) {
  for (double w : weights)
    if (!(w >= 0.0)) throw InvalidArgument("motion weights must be >= 0");
  if (steps < 1) throw InvalidArgument("trajectory needs at least one step");
  Eigen::Matrix<double, 6, 1> delta;
  delta.head<3>() = to.translation - from.translation;
  delta.tail<3>() = rotation_log(from.rotation.transpose() * to.rotation);
  double cost = 0.0;
  Eigen::Matrix<double, 6, 1> prev = Eigen::Matrix<double, 6, 1>::Zero();
  for (int t = 1; t <= steps; ++t) {
    const Eigen::Matrix<double, 6, 1> q = delta * (static_cast<double>(t) / steps);
    for (int c = 0; c < 6; ++c) cost += weights[c] * std::abs(q[c] - prev[c]);
    prev = q;
  }
  return cost;
}

void rank_candidates(std::vector<CandidatePose>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const CandidatePose& a, const CandidatePose& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.index < b.index;
  });
}

void score_candidates(std::vector<CandidatePose>& candidates, const Pose& current, const ExplorationConfig& config) {
  for (auto& c : candidates) {
    c.cost = motion_cost(current, c.state.pose, config.weights, config.trajectory_steps);
    c.score = c.ig - c.cost;
  }
  rank_candidates(candidates);
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::Coverage: return "coverage";
    case Termination::Cap: return "cap";
    case Termination::NoFeasibleCandidate: return "no_feasible_candidate";
    case Termination::InitFailed: return "init_failed";
  }
  return "?";
}

EpisodeRecord run_episode(const PrimitiveShape& shape, const GripperModel& model, const ExplorationConfig& config,
                          std::uint64_t seed, const Completer& completer) {
  config.validate();
  shape.validate();
  EpisodeRecord rec;
  const PointCloud gt = sample_surface(shape, config.n_pred, derive_seed(seed, {4}));
  const double gt_scale = reference_scale(gt);
  const std::uint64_t completion_seed = derive_seed(seed, {3});
  const double standoff = standoff_distance(model, config);

  // first touch from a random direction, palm facing the object
  GripperState state;
  {
    std::mt19937_64 rng(derive_seed(seed, {1}));
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> yaw(0.0, 2.0 * std::numbers::pi);
    const double reach = shape.bounding_radius() + config.init_standoff;
    bool touched = false;
    for (int a = 0; a < config.init_retry_cap && !touched; ++a) {
      Eigen::Vector3d u(g(rng), g(rng), g(rng));
      u.normalize();
      const GripperState start = standoff_state(shape.pose.translation, u, yaw(rng), reach);
      try {
        state = approach_until_contact(model, start, UnitVec3(start.palm_normal()), shape, model.approach_step,
                                       2.0 * reach)
                    .state;
        touched = true;
      } catch (const NoContact&) {
      } catch (const PenetrationTooDeep&) {
      }
    }
    if (!touched) {
      rec.termination = Termination::InitFailed;
      rec.failure = "no initial contact";
      return rec;
    }
  }

  std::int64_t ts = 0;
  std::optional<PointCloud> previous;
  for (int iter = 1;; ++iter) {
    IterationRecord it;
    it.iteration = iter;
    const InteractionResult r = run_interaction(config.mode, config.mode_params, model, state, shape, ts);
    ts = r.next_timestamp;
    ++rec.interactions;
    it.events = r.events.size();
    it.interaction_points = r.merged.size();
    it.contact_volume = voxel_volume(r.merged);
    it.contact_lost = r.contact_lost;
    for (std::size_t i = 0; i < r.merged.size(); ++i) {
      const Point3& p = r.merged.points[i];
      const Eigen::Vector3d& n = (*r.merged.normals)[i];
      it.max_abs_sdf = std::max(it.max_abs_sdf, std::abs(signed_distance(shape, p)));
      it.min_normal_dot = std::min(it.min_normal_dot, n.dot(sdf_gradient(shape, p, n)));
    }
    it.contacts_valid = it.max_abs_sdf <= 1e-6 && it.min_normal_dot > 0.99;
    rec.measured.append(r.merged);
    it.measured_points = rec.measured.size();

    CompletionOptions co;
    co.n_out = config.n_pred;
    co.seed = completion_seed;
    co.inlier_mm = config.inlier_mm;
    rec.belief = completer(CompleterInput::from_measured(rec.measured, config.lambda), co);
    rec.belief.generation = iter;
    rec.belief.cloud = estimate_normals(rec.belief.cloud);
    it.belief_class = rec.belief.fit ? to_string(rec.belief.fit->cls) : rec.belief.fallback ? "fallback" : "external";
    it.belief_fit = fit_json(rec.belief);
    it.chamfer_gt = normalized_chamfer(rec.belief.cloud, gt, gt_scale);
    if (previous) it.chamfer_prev = normalized_chamfer(rec.belief.cloud, *previous, reference_scale(*previous));
    previous = rec.belief.cloud;
    rec.iterations.push_back(std::move(it));
    IterationRecord& cur = rec.iterations.back();

    if (converged(rec.iterations, config)) {
      rec.converged = true;
      rec.termination = Termination::Converged;
      break;
    }
    if (iter >= config.max_interactions) {
      rec.termination = Termination::Cap;
      break;
    }

    const CloudSurface obstacle(rec.belief.cloud);
    bool moved = false;
    bool saturated = false;
    for (int round = 0; round <= config.resample_rounds && !moved; ++round) {
      std::vector<CandidatePose> cands;
      try {
        cands = sample_candidates(rec.belief.cloud, rec.measured, model, config,
                                  derive_seed(seed, {2, static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(round)}));
      } catch (const NothingToExplore&) {
        saturated = true;
        break;
      }
      cur.candidates_sampled += cands.size();
      score_candidates(cands, r.final_state.pose, config);
      // feasibility in score order; the first executable candidate wins
      for (auto& c : cands) {
        check_feasible(c, obstacle, model, config);
        ++cur.candidates_checked;
        if (!c.feasible) continue;
        try {
          state = approach_until_contact(model, c.state, UnitVec3(c.state.palm_normal()), shape, model.approach_step,
                                         standoff + config.approach_overshoot)
                      .state;
        } catch (const NoContact&) {
          ++cur.approach_failures;
          continue;
        } catch (const PenetrationTooDeep&) {
          ++cur.approach_failures;
          continue;
        }
        cur.chosen = c;
        moved = true;
        break;
      }
    }
    if (saturated) {
      rec.converged = true;
      rec.termination = Termination::Coverage;
      break;
    }
    if (!moved) {
      rec.termination = Termination::NoFeasibleCandidate;
      rec.failure = "no feasible candidate reached the object";
      break;
    }
  }
  return rec;
}

nlohmann::json candidate_to_json(const CandidatePose& c) {
  return {{"index", c.index},
          {"belief_index", c.belief_index},
          {"target", vec_json(c.target)},
          {"normal", vec_json(c.normal)},
          {"pose", pose_to_json(c.state.pose)},
          {"d_min_mm", c.d_min},
          {"ig", c.ig},
          {"cost", c.cost},
          {"score", c.score},
          {"feasible", c.feasible}};
}

nlohmann::json iteration_to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"events", r.events},
          {"interaction_points", r.interaction_points},
          {"contact_volume_mm3", r.contact_volume},
          {"contact_lost", r.contact_lost},
          {"measured_points", r.measured_points},
          {"belief_class", r.belief_class},
          {"belief_fit", r.belief_fit},
          {"chamfer_gt", r.chamfer_gt},
          {"chamfer_prev", r.chamfer_prev ? nlohmann::json(*r.chamfer_prev) : nlohmann::json(nullptr)},
          {"candidates_sampled", r.candidates_sampled},
          {"candidates_checked", r.candidates_checked},
          {"approach_failures", r.approach_failures},
          {"chosen", r.chosen ? candidate_to_json(*r.chosen) : nlohmann::json(nullptr)},
          {"contacts_valid", r.contacts_valid},
          {"max_abs_sdf_mm", r.max_abs_sdf},
          {"min_normal_dot", r.min_normal_dot}};
}

}  // namespace tactex
