// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "tactex/completion.hpp"
#include "tactex/datagen.hpp"
#include "tactex/exploration.hpp"
#include "tactex/harness.hpp"
#include "tactex/kdtree.hpp"
#include "tactex/ply.hpp"
#include "tactex/util.hpp"
#include "test_util.hpp"

using namespace tactex;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  fmt::print("[{}] {:>2} {:<28} {}\n", pass ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
  failures += !pass;
}

// 1 ------------------------------------------------------------------------
void normalization() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> extent(0.1, 500.0), offset(-1000.0, 1000.0), lam(0.25, 4.0);
  double worst_mean = 0, worst_sigma = 0, worst_idem = 0, worst_trip = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 10 + rng() % 2000;
    PointCloud c = tactex::testing::random_cloud(rng, n, 1.0);
    const Eigen::Vector3d stretch(extent(rng), extent(rng), extent(rng)), shift(offset(rng), offset(rng), offset(rng));
    for (auto& p : c.points) p = p.cwiseProduct(stretch) + shift;
    const double lambda = lam(rng);
    const auto [out, params] = normalize_cloud(c, lambda);
    worst_mean = std::max(worst_mean, out.centroid().norm());
    worst_sigma = std::max(worst_sigma, std::abs(norm_sigma(out.points, Point3::Zero()) - 1.0 / lambda));
    const auto again = normalize_cloud(out, lambda).first;
    const PointCloud back = denormalize_cloud(out, params);
    for (std::size_t k = 0; k < n; ++k) {
      worst_idem = std::max(worst_idem, (again.points[k] - out.points[k]).norm());
      worst_trip = std::max(worst_trip, (back.points[k] - c.points[k]).norm());
    }
  }
  const double s = seconds_since(t0);
  const bool pass = worst_mean < 1e-6 && worst_sigma < 1e-6 && worst_idem < 1e-6 && worst_trip < 1e-6 && s < 5.0;
  report(1, "normalization", pass,
         fmt::format("1000 clouds: |mean| {:.1e}, |sigma-1/lambda| {:.1e}, idempotence {:.1e}, round trip {:.1e}; {:.2f} s",
                     worst_mean, worst_sigma, worst_idem, worst_trip, s));
}

// 2 ------------------------------------------------------------------------
void information_gain_suite() {
  const auto t0 = Clock::now();
  bool exact = true, monotone = true, scaling = true;
  double worst_scale = 0.0;
  for (double sigma : {0.5, 1.0, 2.5, 5.0, 10.0}) {
    double prev = -1.0;
    for (int i = 0; i < 100; ++i) {
      const double d = 0.5 * i;
      const double ig = information_gain(d, sigma);
      exact = exact && ig == d * d / (2.0 * sigma * sigma);
      monotone = monotone && ig > prev;
      prev = ig;
      for (double c : {0.5, 2.0, 3.0}) {
        const double lhs = information_gain(d, c * sigma), rhs = ig / (c * c);
        const double err = std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs));
        worst_scale = std::max(worst_scale, err);
        scaling = scaling && err < 1e-12;
      }
    }
  }
  const double s = seconds_since(t0);
  report(2, "information gain", exact && monotone && scaling && s < 1.0,
         fmt::format("500 points: exact {}, monotone {}, scaling err {:.1e}; {:.3f} s", exact, monotone, worst_scale, s));
}

// 3 ------------------------------------------------------------------------
void spatial_index() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::size_t mismatches = 0, queries = 0;
  for (int cloud = 0; cloud < 5; ++cloud) {
    const PointCloud c = tactex::testing::random_cloud(rng, 5000, 100.0);
    const KdTree tree(c.points);
    const PointCloud q = tactex::testing::random_cloud(rng, 200, 120.0);
    for (const auto& p : q.points) {
      ++queries;
      const double brute = tactex::testing::brute_nearest(p, c);
      mismatches += tree.nearest(p).distance != brute;
      mismatches += coverage_distance(p, c) != brute;
    }
  }
  const PointCloud a = tactex::testing::random_cloud(rng, 5000), b = tactex::testing::random_cloud(rng, 5000);
  const bool chamfer_equal = chamfer_distance(a, b) == tactex::testing::brute_chamfer(a, b);
  const double s = seconds_since(t0);
  report(3, "index vs brute force", mismatches == 0 && chamfer_equal && s < 30.0,
         fmt::format("{} queries on 5000-point clouds: {} mismatches; chamfer equal {}; {:.2f} s", queries, mismatches,
                     chamfer_equal, s));
}

// 5 ------------------------------------------------------------------------
void truncation() {
  std::mt19937_64 rng(5);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + rng() % 300;
    PointCloud c;
    c.timestamps.emplace();
    c.normals.emplace();
    for (std::size_t i = 0; i < m; ++i) {
      c.points.emplace_back(static_cast<double>(i), 0.0, 0.0);
      c.normals->push_back(Eigen::Vector3d::UnitZ());
      c.timestamps->push_back(static_cast<std::int64_t>(rng() % 25));
    }
    const double frac = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const PointCloud out = truncate_points(c, frac);

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return (*c.timestamps)[x] < (*c.timestamps)[y];
    });
    order.resize(m - static_cast<std::size_t>(std::floor(frac * static_cast<double>(m))));
    std::sort(order.begin(), order.end());

    bool same = out.size() == order.size() && out.timestamps && out.timestamps->size() == order.size();
    for (std::size_t k = 0; same && k < order.size(); ++k)
      same = out.points[k] == c.points[order[k]] && (*out.timestamps)[k] == (*c.timestamps)[order[k]];
    mismatches += !same;
  }
  report(5, "truncation oracle", mismatches == 0, fmt::format("500 clouds: {} mismatches", mismatches));
}

// 6 (equivariance half) ------------------------------------------------------
PointCloud visible_patch(const PrimitiveShape& s, const Eigen::Vector3d& view, std::size_t n, std::uint64_t seed) {
  const PointCloud all = sample_surface(s, 8 * n, seed);
  PointCloud out;
  out.normals.emplace();
  for (std::size_t i = 0; i < all.size() && out.size() < n; ++i) {
    if ((*all.normals)[i].dot(view) <= 0.1) continue;
    out.points.push_back(all.points[i]);
    out.normals->push_back((*all.normals)[i]);
  }
  return out;
}

PointCloud similarity(const PointCloud& c, double s, const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  PointCloud out = c;
  for (auto& p : out.points) p = s * (r * p) + t;
  if (out.normals)
    for (auto& n : *out.normals) n = r * n;
  return out;
}

// Completer wrapper that checks the novel-point contract on every call.
struct ContractAudit {
  std::atomic<std::size_t> calls{0}, violations{0};

  Completer wrap() {
    return [this](const CompleterInput& in, const CompletionOptions& o) {
      BeliefState b = reference_completer()(in, o);
      const PointCloud input = denormalize_cloud(in.cloud, in.params);
      const KdTree tree(input.points);
      bool clean = disjoint(b.cloud, input);
      for (const auto& p : b.cloud.points) clean = clean && tree.nearest(p).distance > 1e-9;
      ++calls;
      violations += !clean;
      return b;
    };
  }
};

struct EquivarianceResult {
  int cases = 0;
  double worst = 0.0;
};

EquivarianceResult equivariance(ContractAudit& audit) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dim(20.0, 50.0), scale(0.5, 2.0);
  const Completer complete_fn = audit.wrap();
  EquivarianceResult res;
  for (int i = 0; i < 50; ++i) {
    PrimitiveShape shape;
    switch (i % 3) {
      case 0: shape = PrimitiveShape::sphere(dim(rng)); break;
      case 1: shape = PrimitiveShape::box(2 * dim(rng), 2 * dim(rng), 2 * dim(rng)); break;
      default: shape = PrimitiveShape::cylinder(dim(rng), dim(rng), 2.5 * dim(rng)); break;
    }
    shape.pose = tactex::testing::random_pose(rng, 50.0);
    const Eigen::Vector3d view = tactex::testing::random_rotation(rng).col(0);
    const PointCloud patch = visible_patch(shape, view, 400, 100 + i);
    const double s = scale(rng);
    const Eigen::Matrix3d r = tactex::testing::random_rotation(rng);
    const Eigen::Vector3d t = tactex::testing::random_pose(rng, 200.0).translation;
    CompletionOptions o;
    o.seed = 31;
    const BeliefState a = complete_fn(CompleterInput::from_measured(patch), o);
    const BeliefState b = complete_fn(CompleterInput::from_measured(similarity(patch, s, r, t)), o);
    const PointCloud moved = similarity(a.cloud, s, r, t);
    res.worst = std::max(res.worst, normalized_chamfer(b.cloud, moved, reference_scale(moved)));
    ++res.cases;
  }
  return res;
}

// Grid ---------------------------------------------------------------------
struct CellRun {
  GridCell cell;
  std::uint64_t seed = 0;
  EpisodeRecord record;
  std::string log;
  std::size_t contacts = 0, bad_sdf = 0, bad_normal = 0;
};

void check_contacts(CellRun& run, const PrimitiveShape& shape) {
  const PointCloud& m = run.record.measured;
  for (std::size_t i = 0; i < m.size(); ++i) {
    ++run.contacts;
    const Point3& p = m.points[i];
    const Eigen::Vector3d& n = (*m.normals)[i];
    run.bad_sdf += !(std::abs(signed_distance(shape, p)) <= 1e-6);
    run.bad_normal += !(n.dot(tactex::testing::outward_gradient(shape, p, n)) > 0.99);
  }
}

}  // namespace

int main() {
  const auto start = Clock::now();
  normalization();
  information_gain_suite();
  spatial_index();

  // full 9 x 3 x 5 grid with the audited reference completer
  ContractAudit audit;
  ExperimentGrid grid;
  grid.seed = 0;
  const fs::path root = fs::temp_directory_path() / "tactex_acceptance";
  fs::remove_all(root);
  const fs::path logs = root / "logs";
  fs::create_directories(logs);
  const auto cells = grid_cells(grid);
  std::vector<CellRun> runs(cells.size());
  const Completer audited = audit.wrap();
  const auto grid_t0 = Clock::now();
  const int threads = std::max(1u, std::thread::hardware_concurrency());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    CellRun& run = runs[i];
    run.cell = cells[i];
    run.seed = cell_seed(grid.seed, run.cell.object->id, run.cell.mode, run.cell.trial);
    ExplorationConfig cfg = grid.exploration;
    cfg.mode = run.cell.mode;
    run.record = run_episode(run.cell.object->shape, grid.hand, cfg, run.seed, audited);
    run.log = episode_log(grid, run.cell, run.seed, run.record);
    write_file_atomic(cell_log_path(logs, run.cell), run.log);
    check_contacts(run, run.cell.object->shape);
  });
  const double grid_s = seconds_since(grid_t0);
  const nlohmann::json rep = write_report(logs, root / "report");

  // 4
  {
    std::size_t contacts = 0, bad_sdf = 0, bad_normal = 0, interactions = 0;
    for (const auto& r : runs) {
      contacts += r.contacts, bad_sdf += r.bad_sdf, bad_normal += r.bad_normal;
      interactions += r.record.iterations.size();
    }
    const auto& cv = rep.at("contact_validity");
    const bool pass = contacts > 0 && bad_sdf == 0 && bad_normal == 0 && cv.at("invalid_iterations").get<int>() == 0;
    report(4, "contact validity", pass,
           fmt::format("{} contacts over {} interactions: {} with |sdf| > 1e-6, {} with normal dot <= 0.99", contacts,
                       interactions, bad_sdf, bad_normal));
  }

  truncation();

  // 6
  {
    const EquivarianceResult eq = equivariance(audit);
    const bool pass = audit.violations == 0 && eq.cases == 50 && eq.worst < 0.02;
    report(6, "completer contracts", pass,
           fmt::format("{} completer calls, {} echoed an input point; {} similarity cases, worst chamfer {:.4f}",
                       audit.calls.load(), audit.violations.load(), eq.cases, eq.worst));
  }

  // 7
  {
    bool episodes_equal = true;
    for (std::size_t i : {std::size_t{0}, cells.size() / 2, cells.size() - 1}) {
      const CellRun& run = runs[i];
      ExplorationConfig cfg = grid.exploration;
      cfg.mode = run.cell.mode;
      const EpisodeRecord again = run_episode(run.cell.object->shape, grid.hand, cfg, run.seed);
      episodes_equal = episodes_equal && episode_log(grid, run.cell, run.seed, again) == run.log;
    }
    ExperimentGrid sub = grid;
    sub.objects = {"ball_dr", "box_dr", "cylinder_small"};
    sub.trials = 1;
    sub.out_dir = root / "sub_a";
    sub.parallel = threads;
    const auto a = run_grid(sub, false);
    sub.out_dir = root / "sub_b";
    sub.parallel = 1;
    const auto b = run_grid(sub, false);
    auto read_all = [](const fs::path& dir) {
      std::map<std::string, std::string> out;
      for (const auto& f : fs::directory_iterator(dir)) out[f.path().filename().string()] = read_file(f.path());
      return out;
    };
    const auto la = read_all(a.logs_dir), lb = read_all(b.logs_dir);
    bool grid_equal = la == lb && read_all(a.report_dir) == read_all(b.report_dir) && la.size() == 9;
    for (const auto& [name, text] : la) grid_equal = grid_equal && read_file(logs / name) == text;
    report(7, "determinism", episodes_equal && grid_equal,
           fmt::format("episode re-runs identical {}; {} grid logs identical across re-runs and parallelism {}",
                       episodes_equal, la.size(), grid_equal));
  }

  const auto& ms = rep.at("mode_summary");
  auto mode_value = [&](InteractionMode m, const char* key) { return ms.at(to_string(m)).at(key).get<double>(); };
  const double v_gr = mode_value(InteractionMode::GraspReleasing, "mean_volume_per_interaction_mm3");
  const double v_fg = mode_value(InteractionMode::FingerGrazing, "mean_volume_per_interaction_mm3");
  const double v_pr = mode_value(InteractionMode::PalmRolling, "mean_volume_per_interaction_mm3");
  const double n_gr = mode_value(InteractionMode::GraspReleasing, "mean_interactions");
  const double n_fg = mode_value(InteractionMode::FingerGrazing, "mean_interactions");
  const double n_pr = mode_value(InteractionMode::PalmRolling, "mean_interactions");
  const bool all_completed = rep.at("completed").get<int>() == static_cast<int>(cells.size());

  // 8
  report(8, "contact volume ordering", all_completed && v_fg >= 2.0 * v_gr && v_pr >= 2.0 * v_gr,
         fmt::format("mm^3 per interaction: grasp {:.1f}, grazing {:.1f} ({:.2f}x), rolling {:.1f} ({:.2f}x); {} episodes",
                     v_gr, v_fg, v_fg / v_gr, v_pr, v_pr / v_gr, rep.at("completed").get<int>()));
  // 9
  report(9, "interaction count ordering", all_completed && n_fg <= n_gr && n_pr <= n_gr,
         fmt::format("mean interactions: grasp {:.2f}, grazing {:.2f}, rolling {:.2f}", n_gr, n_fg, n_pr));
  // 10
  {
    double worst = 0.0;
    std::string worst_id;
    bool pass = all_completed;
    for (const auto& row : rep.at("rows")) {
      const auto& c = row.at("modes").at(to_string(InteractionMode::FingerGrazing));
      const double cd = c.at("mean_chamfer").get<double>();
      pass = pass && cd < 0.10 && c.at("completed").get<int>() == grid.trials;
      if (cd > worst) worst = cd, worst_id = row.at("object").get<std::string>();
    }
    int max_n = 0;
    for (const auto& r : runs) max_n = std::max(max_n, r.record.interactions);
    pass = pass && max_n <= 20 && rep.at("max_interactions").get<int>() <= 20;
    report(10, "grazing reconstruction", pass,
           fmt::format("worst per-object chamfer {:.4f} ({}); max interactions {} of 20", worst, worst_id, max_n));
  }
  // 11
  {
    const auto& cmp = rep.at("comparisons");
    const double box = cmp.at("rolling_volume_box").get<double>(), ball = cmp.at("rolling_volume_ball").get<double>();
    report(11, "rolling on flat surfaces", box < ball,
           fmt::format("rolling mm^3 per interaction: box {:.1f}, ball {:.1f}", box, ball));
  }

  fmt::print("grid: {} episodes in {:.1f} s; report in {}\n", cells.size(), grid_s, (root / "report").string());
  fmt::print("{} of 11 criteria failed; total {:.1f} s\n", failures, seconds_since(start));
  return failures ? 1 : 0;
}
