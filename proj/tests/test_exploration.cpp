#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tactex/errors.hpp"
#include "tactex/exploration.hpp"
#include "tactex/util.hpp"
#include "test_util.hpp"

using namespace tactex;

namespace {

const GripperModel& hand() {
  static const GripperModel m = GripperModel::default_model();
  return m;
}

PointCloud with_up_normals(std::vector<Point3> pts) {
  PointCloud c;
  c.points = std::move(pts);
  c.normals.emplace(c.points.size(), Eigen::Vector3d::UnitZ());
  return c;
}

CandidatePose at(const Eigen::Vector3d& t, double ig, std::size_t index) {
  CandidatePose c;
  c.index = index;
  c.ig = ig;
  c.state.pose.translation = t;
  return c;
}

std::vector<std::size_t> order(const std::vector<CandidatePose>& cs) {
  std::vector<std::size_t> out;
  for (const auto& c : cs) out.push_back(c.index);
  return out;
}

Completer oracle(const PrimitiveShape& shape) {
  return [shape](const CompleterInput&, const CompletionOptions& o) {
    BeliefState b;
    b.cloud = sample_surface(shape, o.n_out, 99);
    return b;
  };
}

}  // namespace

TEST(InformationGain, Examples) {
  EXPECT_EQ(information_gain(0.0, 5.0), 0.0);
  EXPECT_EQ(information_gain(5.0, 5.0), 0.5);
  EXPECT_EQ(information_gain(10.0, 5.0), 2.0);
  EXPECT_THROW(information_gain(1.0, 0.0), InvalidArgument);
  EXPECT_THROW(information_gain(1.0, -2.0), InvalidArgument);
  EXPECT_THROW(information_gain(-1.0, 5.0), InvalidArgument);
}

TEST(InformationGain, GridMonotoneAndScaling) {
  for (double sigma : {0.5, 1.0, 5.0, 12.5}) {
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
      const double d = 0.7 * i;
      const double ig = information_gain(d, sigma);
      EXPECT_EQ(ig, d * d / (2.0 * sigma * sigma));
      EXPECT_GT(ig, prev);
      prev = ig;
      for (double c : {0.5, 2.0, 3.0}) EXPECT_NEAR(information_gain(d, c * sigma), ig / (c * c), 1e-12 * (1.0 + ig));
    }
  }
}

TEST(SampleCandidates, SaturatedBeliefHasNothingToExplore) {
  const PointCloud belief = with_up_normals({{0, 0, 0}, {3, 0, 0}, {0, 4.9, 0}});
  const PointCloud measured = with_up_normals({{0, 0, 0}});
  EXPECT_THROW(sample_candidates(belief, measured, hand(), {}, 1), NothingToExplore);
  EXPECT_THROW(sample_candidates({}, measured, hand(), {}, 1), EmptyCloud);
}

TEST(SampleCandidates, FarPointDominatesDraws) {
  // three points just past the threshold (IG 0.72 each) and one at 50 mm (IG 50)
  std::vector<Point3> pts;
  for (int i = 0; i < 40; ++i) pts.emplace_back(0.1 * i, 0, 0);
  pts.emplace_back(0, 6, 0);
  pts.emplace_back(0, -6, 0);
  pts.emplace_back(-6, 0, 0);
  pts.emplace_back(0, 50, 0);
  const PointCloud belief = with_up_normals(pts);
  const PointCloud measured = with_up_normals({{0, 0, 0}, {4, 0, 0}});
  ExplorationConfig cfg;
  cfg.k = 10000;
  const auto cands = sample_candidates(belief, measured, hand(), cfg, 3);
  ASSERT_EQ(cands.size(), 10000u);
  std::size_t far = 0;
  for (const auto& c : cands) {
    EXPECT_GT(c.d_min, cfg.coverage_threshold);
    if (c.belief_index == pts.size() - 1) ++far;
  }
  EXPECT_GT(far, 9000u);
}

TEST(SampleCandidates, PalmFacesTargetAndDeterministic) {
  const auto sphere = PrimitiveShape::sphere(30);
  const PointCloud belief = sample_surface(sphere, 1024, 1);
  const PointCloud measured = with_up_normals({{0, 0, 30}});
  const auto a = sample_candidates(belief, measured, hand(), {}, 5);
  const auto b = sample_candidates(belief, measured, hand(), {}, 5);
  ASSERT_EQ(a.size(), 500u);
  const double standoff = standoff_distance(hand(), {});
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& c = a[i];
    EXPECT_GT(c.state.palm_normal().dot(c.target - c.state.pose.translation), 0.0);
    EXPECT_NEAR((c.state.pose.translation - c.target).norm(), standoff, 1e-9);
    EXPECT_NEAR(c.ig, information_gain(c.d_min, 5.0), 1e-12);
    EXPECT_EQ(c.state.pose.translation, b[i].state.pose.translation);
    EXPECT_EQ(c.state.pose.rotation, b[i].state.pose.rotation);
  }
}

TEST(Feasibility, Examples) {
  const auto sphere = PrimitiveShape::sphere(30);
  const CloudSurface obstacle(sample_surface(sphere, 2048, 2));
  const ExplorationConfig cfg;
  const double standoff = standoff_distance(hand(), cfg);

  CandidatePose inside;
  inside.state = standoff_state({0, 0, 0}, Eigen::Vector3d::UnitZ(), 0.0, 5.0);
  check_feasible(inside, obstacle, hand(), cfg);
  EXPECT_TRUE(inside.checked);
  EXPECT_FALSE(inside.feasible);

  CandidatePose far;
  far.state = standoff_state({600, 0, 0}, Eigen::Vector3d::UnitX(), 0.0, standoff);
  check_feasible(far, obstacle, hand(), cfg);
  EXPECT_FALSE(far.feasible);
  EXPECT_EQ(far.reason, "outside workspace");

  CandidatePose top;
  top.state = standoff_state({0, 0, 30}, Eigen::Vector3d::UnitZ(), 0.4, standoff);
  check_feasible(top, obstacle, hand(), cfg);
  EXPECT_TRUE(top.feasible) << top.reason;
  // the planned approach really reaches the object
  EXPECT_NO_THROW(approach_until_contact(hand(), top.state, UnitVec3(top.state.palm_normal()), sphere,
                                         hand().approach_step, standoff + cfg.approach_overshoot));
}

TEST(Feasibility, FilterOnlyFlags) {
  const auto box = PrimitiveShape::box(60, 60, 90);
  const PointCloud belief = estimate_normals(sample_surface(box, 2048, 3));
  const PointCloud measured = with_up_normals({{0, 0, 45}});
  auto cands = sample_candidates(belief, measured, hand(), {}, 8);
  const auto before = cands;
  filter_feasible(cands, CloudSurface(belief), hand(), {});
  ASSERT_EQ(cands.size(), before.size());
  std::size_t feasible = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    EXPECT_TRUE(cands[i].checked);
    EXPECT_EQ(cands[i].index, before[i].index);
    EXPECT_EQ(cands[i].target, before[i].target);
    EXPECT_EQ(cands[i].state.pose.translation, before[i].state.pose.translation);
    EXPECT_EQ(cands[i].ig, before[i].ig);
    feasible += cands[i].feasible;
  }
  EXPECT_GT(feasible, 0u);
  EXPECT_LE(feasible, cands.size());
}

TEST(CloudSurface, SignMatchesShape) {
  const auto sphere = PrimitiveShape::sphere(30);
  const CloudSurface s(sample_surface(sphere, 4096, 4));
  EXPECT_LT(s.signed_distance({0, 0, 0}), 0.0);
  EXPECT_NEAR(s.signed_distance({0, 0, 50}), 20.0, 1.0);
  PointCloud bare;
  bare.points = {{0, 0, 0}};
  EXPECT_THROW(CloudSurface{bare}, InvalidArgument);
}

TEST(MotionCost, Examples) {
  const std::array<double, 6> ones = {1, 1, 1, 1, 1, 1};
  std::mt19937_64 rng(6);
  const Pose p = tactex::testing::random_pose(rng);
  EXPECT_EQ(motion_cost(p, p, ones), 0.0);
  EXPECT_EQ(motion_cost(p, p, {1, 1, 1, 50, 50, 50}), 0.0);

  const Pose to = Pose::from_translation({100, 0, 0});
  for (int steps : {1, 2, 7, 20, 100}) EXPECT_NEAR(motion_cost({}, to, ones, steps), 100.0, 1e-9);

  const Pose turn = Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
  EXPECT_NEAR(motion_cost({}, turn, {1, 1, 1, 50, 50, 50}), 25.0 * std::numbers::pi, 1e-9);
  EXPECT_THROW(motion_cost({}, to, {1, 1, 1, -1, 1, 1}), InvalidArgument);
  EXPECT_THROW(motion_cost({}, to, ones, 0), InvalidArgument);
}

TEST(MotionCost, LinearInWeightsAndAdditive) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(0.0, 10.0);
  for (int i = 0; i < 50; ++i) {
    const Pose a = tactex::testing::random_pose(rng), b = tactex::testing::random_pose(rng);
    std::array<double, 6> wt, twice;
    for (int k = 0; k < 6; ++k) wt[k] = w(rng), twice[k] = 2.0 * wt[k];
    const double c = motion_cost(a, b, wt);
    EXPECT_NEAR(motion_cost(a, b, twice), 2.0 * c, 1e-9 * (1.0 + c));
    EXPECT_GT(c, 0.0);
  }
  // concatenating two legs of a straight path
  const Pose a = Pose::from_translation({0, 0, 0}), mid = Pose::from_translation({30, -10, 5}),
             end = Pose::from_translation({90, -30, 15});
  const std::array<double, 6> wt = {1, 2, 3, 50, 50, 50};
  EXPECT_NEAR(motion_cost(a, mid, wt) + motion_cost(mid, end, wt), motion_cost(a, end, wt), 1e-9);
}

TEST(ScoreCandidates, Examples) {
  ExplorationConfig cfg;
  cfg.weights = {1, 1, 1, 1, 1, 1};
  std::vector<CandidatePose> cs = {at({2, 0, 0}, 3.0, 0), at({1, 0, 0}, 3.0, 1)};
  score_candidates(cs, {}, cfg);
  EXPECT_EQ(order(cs), (std::vector<std::size_t>{1, 0}));
  EXPECT_NEAR(cs[0].cost, 1.0, 1e-12);
  EXPECT_NEAR(cs[1].cost, 2.0, 1e-12);

  std::vector<CandidatePose> one = {at({0.5, 0, 0}, 2.0, 0)};
  score_candidates(one, {}, cfg);
  EXPECT_NEAR(one[0].score, 1.5, 1e-12);

  // full ties fall back to the draw index
  std::vector<CandidatePose> tie = {at({1, 0, 0}, 1.0, 4), at({0, 1, 0}, 1.0, 2), at({0, 0, 1}, 1.0, 3)};
  score_candidates(tie, {}, cfg);
  EXPECT_EQ(order(tie), (std::vector<std::size_t>{2, 3, 4}));
}

TEST(ScoreCandidates, ConstantCostShiftKeepsRanking) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<CandidatePose> cs;
    for (std::size_t i = 0; i < 200; ++i) {
      CandidatePose c;
      c.index = i;
      c.ig = std::floor(u(rng));
      c.cost = std::floor(u(rng)) / 4.0;
      c.score = c.ig - c.cost;
      cs.push_back(c);
    }
    auto shifted = cs;
    for (auto& c : shifted) c.cost += 17.25, c.score = c.ig - c.cost;
    rank_candidates(cs);
    rank_candidates(shifted);
    EXPECT_EQ(order(cs), order(shifted));
    for (std::size_t i = 1; i < cs.size(); ++i) EXPECT_GE(cs[i - 1].score, cs[i].score);
  }
}

TEST(ExplorationConfig, JsonRoundTripAndValidation) {
  ExplorationConfig c;
  c.k = 123;
  c.sigma = 2.5;
  c.mode = InteractionMode::PalmRolling;
  c.workspace.min = {-1, -2, -3};
  const auto j = exploration_config_to_json(c);
  const ExplorationConfig back = exploration_config_from_json(j);
  EXPECT_EQ(exploration_config_to_json(back), j);
  EXPECT_EQ(back.k, 123u);
  EXPECT_EQ(back.mode, InteractionMode::PalmRolling);

  EXPECT_THROW(exploration_config_from_json({{"sigma_mm", 0.0}}), ConfigError);
  EXPECT_THROW(exploration_config_from_json({{"k", 0}}), ConfigError);
  EXPECT_THROW(exploration_config_from_json({{"max_interactions", 0}}), ConfigError);
  EXPECT_THROW(exploration_config_from_json({{"sigma_mm", "wide"}}), ConfigError);
  EXPECT_THROW(exploration_config_from_json({{"mode", "juggling"}}), ConfigError);
}

TEST(RunEpisode, SmallSphereGrazingConverges) {
  ExplorationConfig cfg;
  cfg.mode = InteractionMode::FingerGrazing;
  const auto ball = default_suite().find("ball_small").shape;
  const EpisodeRecord r = run_episode(ball, hand(), cfg, 11);
  EXPECT_TRUE(r.converged) << to_string(r.termination);
  EXPECT_LE(r.interactions, 20);
  ASSERT_FALSE(r.iterations.empty());
  EXPECT_LT(r.iterations.back().chamfer_gt, 0.08);
  EXPECT_EQ(static_cast<int>(r.iterations.size()), r.interactions);
  for (const auto& it : r.iterations) EXPECT_TRUE(it.contacts_valid);
}

TEST(RunEpisode, CapOfOne) {
  ExplorationConfig cfg;
  cfg.max_interactions = 1;
  const EpisodeRecord r = run_episode(PrimitiveShape::box(60, 60, 60), hand(), cfg, 3);
  EXPECT_EQ(r.interactions, 1);
  EXPECT_EQ(r.iterations.size(), 1u);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.termination, Termination::Cap);
  EXPECT_FALSE(r.iterations[0].chamfer_prev.has_value());
}

TEST(RunEpisode, SameSeedSameRecord) {
  for (InteractionMode m : {InteractionMode::GraspReleasing, InteractionMode::PalmRolling}) {
    ExplorationConfig cfg;
    cfg.mode = m;
    const auto cyl = default_suite().find("cylinder_dr").shape;
    const EpisodeRecord a = run_episode(cyl, hand(), cfg, 21), b = run_episode(cyl, hand(), cfg, 21);
    ASSERT_EQ(a.iterations.size(), b.iterations.size());
    for (std::size_t i = 0; i < a.iterations.size(); ++i)
      EXPECT_EQ(iteration_to_json(a.iterations[i]).dump(), iteration_to_json(b.iterations[i]).dump());
    EXPECT_EQ(a.measured.points, b.measured.points);
    EXPECT_EQ(a.belief.cloud.points, b.belief.cloud.points);
  }
}

TEST(RunEpisode, OracleCompleterConvergesInWindowPlusOne) {
  for (const auto& e : default_suite().objects) {
    ExplorationConfig cfg;
    const EpisodeRecord r = run_episode(e.shape, hand(), cfg, 4, oracle(e.shape));
    EXPECT_TRUE(r.converged) << e.id;
    EXPECT_LE(r.interactions, cfg.convergence_window + 1) << e.id;
  }
}

TEST(RunEpisode, MeasuredCloudGrowsWithIncreasingTimestamps) {
  ExplorationConfig cfg;
  cfg.mode = InteractionMode::FingerGrazing;
  cfg.convergence_window = 20;  // run to the cap
  cfg.max_interactions = 6;
  const EpisodeRecord r = run_episode(default_suite().find("box_dr").shape, hand(), cfg, 17);
  ASSERT_TRUE(r.measured.has_timestamps());
  std::size_t prev_size = 0, start = 0;
  std::int64_t prev_max = -1;
  for (const auto& it : r.iterations) {
    EXPECT_GE(it.measured_points, prev_size);
    EXPECT_EQ(it.measured_points - prev_size, it.interaction_points);
    for (std::size_t i = start; i < it.measured_points; ++i) {
      const std::int64_t t = (*r.measured.timestamps)[i];
      EXPECT_GT(t, prev_max) << "iteration " << it.iteration;
      if (i > start) EXPECT_GE(t, (*r.measured.timestamps)[i - 1]);
    }
    for (std::size_t i = start; i < it.measured_points; ++i) prev_max = std::max(prev_max, (*r.measured.timestamps)[i]);
    start = prev_size = it.measured_points;
  }
  EXPECT_LE(r.interactions, cfg.max_interactions);
}

TEST(RunEpisode, RejectsInvalidConfig) {
  ExplorationConfig cfg;
  cfg.sigma = 0.0;
  EXPECT_THROW(run_episode(PrimitiveShape::sphere(30), hand(), cfg, 1), ConfigError);
}
