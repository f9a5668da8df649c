#include "tactex/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "tactex/datagen.hpp"
#include "tactex/errors.hpp"
#include "tactex/ply.hpp"
#include "tactex/util.hpp"

namespace tactex {

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* v = std::getenv("TACTEX_LOG_LEVEL");
    const std::string s = v ? v : "info";
    if (s == "error" || s == "quiet") return Level::Error;
    if (s == "warn") return Level::Warn;
    if (s == "debug") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

template <typename... Args>
void log(Level l, fmt::format_string<Args...> f, Args&&... args) {
  static std::mutex mu;
  if (l > log_level()) return;
  const std::lock_guard lock(mu);
  fmt::print(stderr, f, std::forward<Args>(args)...);
  std::fputc('\n', stderr);
}

std::uint64_t text_hash(const std::string& s) {
  const std::string hex = sha256_hex(s);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

int category_rank(const std::string& c) {
  static const std::vector<std::string> order = {"ball", "box", "cylinder"};
  const auto it = std::find(order.begin(), order.end(), c);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

int variation_rank(const std::string& v) {
  static const std::vector<std::string> order = {"small", "big", "dr"};
  const auto it = std::find(order.begin(), order.end(), v);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

int mode_rank(const std::string& m) { return static_cast<int>(interaction_mode_from_string(m)); }

nlohmann::json mean_or_null(double sum, std::size_t n) { return n ? nlohmann::json(sum / n) : nlohmann::json(nullptr); }

std::string fixed(const nlohmann::json& v, int digits) {
  return v.is_null() ? std::string("-") : fmt::format("{:.{}f}", v.get<double>(), digits);
}

std::string csv_num(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  return fmt::format("{}", v.get<double>());
}

}  // namespace

void ExperimentGrid::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (parallel < 1) throw ConfigError("parallel must be >= 1");
  if (modes.empty()) throw ConfigError("modes must not be empty");
  if (suite.objects.empty()) throw ConfigError("suite has no objects");
  std::set<InteractionMode> seen_modes;
  for (auto m : modes)
    if (!seen_modes.insert(m).second) throw ConfigError(fmt::format("mode '{}' listed twice", to_string(m)));
  std::set<std::string> seen;
  for (const auto& id : objects) {
    if (!seen.insert(id).second) throw ConfigError(fmt::format("object '{}' listed twice", id));
    try {
      (void)suite.find(id);
    } catch (const Error&) {
      throw ConfigError(fmt::format("unknown object '{}'", id));
    }
  }
  exploration.validate();
}

std::vector<const SuiteEntry*> ExperimentGrid::selected() const {
  std::vector<const SuiteEntry*> out;
  if (objects.empty())
    for (const auto& e : suite.objects) out.push_back(&e);
  else
    for (const auto& id : objects) out.push_back(&suite.find(id));
  return out;
}

nlohmann::json grid_to_json(const ExperimentGrid& g) {
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : g.modes) modes.push_back(to_string(m));
  nlohmann::json objects = nlohmann::json::array();
  for (const auto* e : g.selected()) objects.push_back(e->id);
  nlohmann::json exploration = exploration_config_to_json(g.exploration);
  exploration.erase("mode");
  return {{"schema_version", kGridSchemaVersion},
          {"objects", objects},
          {"modes", modes},
          {"trials", g.trials},
          {"seed", g.seed},
          {"out_dir", g.out_dir.string()},
          {"parallel", g.parallel},
          {"suite", suite_to_json(g.suite)},
          {"hand", gripper_to_json(g.hand)},
          {"exploration", exploration}};
}

ExperimentGrid grid_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
  };
  ExperimentGrid g;
  try {
    if (!j.is_object()) throw ConfigError("grid config must be a JSON object");
    const int version = j.value("schema_version", kGridSchemaVersion);
    if (version != kGridSchemaVersion)
      throw ConfigError(fmt::format("grid schema_version {} (expected {})", version, kGridSchemaVersion));
    if (j.contains("suite")) {
      const auto& s = j.at("suite");
      g.suite = s.is_string() ? load_suite(resolve(s.get<std::string>())) : suite_from_json(s);
    }
    if (j.contains("hand")) {
      const auto& h = j.at("hand");
      g.hand = h.is_string() ? load_gripper(resolve(h.get<std::string>())) : gripper_from_json(h);
    }
    g.objects = j.value("objects", g.objects);
    if (j.contains("modes")) {
      g.modes.clear();
      for (const auto& m : j.at("modes")) g.modes.push_back(interaction_mode_from_string(m.get<std::string>()));
    }
    g.trials = j.value("trials", g.trials);
    g.seed = j.value("seed", g.seed);
    g.parallel = j.value("parallel", g.parallel);
    g.out_dir = resolve(j.value("out_dir", g.out_dir.string()));
    if (j.contains("exploration")) {
      if (j.at("exploration").contains("mode")) throw ConfigError("exploration.mode is set per cell; use 'modes'");
      g.exploration = exploration_config_from_json(j.at("exploration"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  g.validate();
  return g;
}

ExperimentGrid load_grid_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(fmt::format("config file not found: {}", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  try {
    return grid_from_json(j, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<GridCell> grid_cells(const ExperimentGrid& g) {
  std::vector<GridCell> cells;
  for (const auto* e : g.selected())
    for (auto m : g.modes)
      for (int t = 0; t < g.trials; ++t) cells.push_back({e, m, t});
  return cells;
}

std::uint64_t cell_seed(std::uint64_t master, const std::string& object_id, InteractionMode mode, int trial) {
  return derive_seed(master, {text_hash(object_id), static_cast<std::uint64_t>(mode), static_cast<std::uint64_t>(trial)});
}

std::string cell_name(const GridCell& c) { return fmt::format("{}__{}__t{:02d}", c.object->id, to_string(c.mode), c.trial); }

std::filesystem::path cell_log_path(const std::filesystem::path& logs_dir, const GridCell& c) {
  return logs_dir / (cell_name(c) + ".jsonl");
}

namespace {

nlohmann::json log_header(const ExperimentGrid& g, const GridCell& c, std::uint64_t seed) {
  ExplorationConfig cfg = g.exploration;
  cfg.mode = c.mode;
  return {{"type", "header"},
          {"schema_version", kLogSchemaVersion},
          {"object", c.object->id},
          {"category", c.object->category},
          {"variation", c.object->variation},
          {"mode", to_string(c.mode)},
          {"trial", c.trial},
          {"master_seed", g.seed},
          {"seed", seed},
          {"shape", shape_to_json(c.object->shape)},
          {"exploration", exploration_config_to_json(cfg)}};
}

}  // namespace

std::string episode_log(const ExperimentGrid& g, const GridCell& c, std::uint64_t seed, const EpisodeRecord& r) {
  std::string out = log_header(g, c, seed).dump() + "\n";
  double volume = 0.0;
  bool valid = true;
  for (const auto& it : r.iterations) {
    nlohmann::json line = iteration_to_json(it);
    line["type"] = "iteration";
    out += line.dump() + "\n";
    volume += it.contact_volume;
    valid = valid && it.contacts_valid;
  }
  const nlohmann::json summary = {
      {"type", "summary"},
      {"status", "ok"},
      {"converged", r.converged},
      {"termination", to_string(r.termination)},
      {"interactions", r.interactions},
      {"final_chamfer", r.iterations.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.iterations.back().chamfer_gt)},
      {"mean_contact_volume_mm3", mean_or_null(volume, r.iterations.size())},
      {"measured_points", r.measured.size()},
      {"final_belief", r.iterations.empty() ? nlohmann::json(nullptr) : r.iterations.back().belief_fit},
      {"contacts_valid", valid},
      {"failure", r.failure}};
  return out + summary.dump() + "\n";
}

std::string failed_episode_log(const ExperimentGrid& g, const GridCell& c, std::uint64_t seed,
                               const std::string& error) {
  const nlohmann::json summary = {{"type", "summary"}, {"status", "error"}, {"error", error}};
  return log_header(g, c, seed).dump() + "\n" + summary.dump() + "\n";
}

EpisodeLog parse_episode_log(const std::string& text, const std::string& name) {
  EpisodeLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaMismatch(fmt::format("{}:{}: {}", name, lineno, e.what()));
    }
    const std::string type = j.is_object() ? j.value("type", std::string()) : std::string();
    if (lineno == 1) {
      if (type != "header") throw SchemaMismatch(fmt::format("{}: first line is not a header", name));
      if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
        throw SchemaMismatch(fmt::format("{}: unversioned log", name));
      const int v = j.at("schema_version").get<int>();
      if (v != kLogSchemaVersion)
        throw SchemaMismatch(fmt::format("{}: schema_version {} (expected {})", name, v, kLogSchemaVersion));
      for (const char* key : {"object", "category", "variation", "mode", "trial"})
        if (!j.contains(key)) throw SchemaMismatch(fmt::format("{}: header lacks '{}'", name, key));
      log.header = std::move(j);
    } else if (type == "iteration") {
      if (log.summary) throw SchemaMismatch(fmt::format("{}:{}: iteration after summary", name, lineno));
      log.iterations.push_back(std::move(j));
    } else if (type == "summary") {
      if (log.summary) throw SchemaMismatch(fmt::format("{}:{}: second summary", name, lineno));
      log.summary = std::move(j);
    } else {
      throw SchemaMismatch(fmt::format("{}:{}: unknown line type '{}'", name, lineno, type));
    }
  }
  if (lineno == 0) throw SchemaMismatch(fmt::format("{}: empty log", name));
  return log;
}

bool log_complete(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) return false;
  try {
    return parse_episode_log(read_file(path), path.string()).summary.has_value();
  } catch (const Error&) {
    return false;
  }
}

GridRunResult run_grid(const ExperimentGrid& g, bool resume,
                       const std::function<void(const GridCell&, const std::string&)>& on_cell) {
  g.validate();
  GridRunResult res;
  res.logs_dir = g.out_dir / "logs";
  res.report_dir = g.out_dir / "report";
  std::error_code ec;
  std::filesystem::create_directories(res.logs_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", res.logs_dir.string(), ec.message()));

  const std::string config_text = grid_to_json(g).dump(2) + "\n";
  const auto config_path = g.out_dir / "config.json";
  if (resume && std::filesystem::exists(config_path)) {
    nlohmann::json old = nlohmann::json::parse(read_file(config_path), nullptr, false);
    nlohmann::json now = nlohmann::json::parse(config_text);
    old.erase("parallel");
    now.erase("parallel");
    if (old != now) throw ConfigError(fmt::format("{} differs from the current config; cannot resume", config_path.string()));
  }
  if (!resume)
    for (const auto& f : std::filesystem::directory_iterator(res.logs_dir))
      if (f.path().extension() == ".jsonl") std::filesystem::remove(f.path());
  write_file_atomic(config_path, config_text);

  const auto cells = grid_cells(g);
  res.cells = cells.size();
  std::vector<int> outcome(cells.size(), 0);  // 0 ran, 1 skipped, 2 failed
  std::mutex mu;
  parallel_for(cells.size(), g.parallel, [&](std::size_t i) {
    const GridCell& c = cells[i];
    const auto path = cell_log_path(res.logs_dir, c);
    if (resume && log_complete(path)) {
      outcome[i] = 1;
      log(Level::Debug, "skip {}", cell_name(c));
      return;
    }
    const std::uint64_t seed = cell_seed(g.seed, c.object->id, c.mode, c.trial);
    ExplorationConfig cfg = g.exploration;
    cfg.mode = c.mode;
    std::string text, status;
    try {
      const EpisodeRecord r = run_episode(c.object->shape, g.hand, cfg, seed);
      text = episode_log(g, c, seed, r);
      status = fmt::format("{} after {} interactions, chamfer {:.4f}", to_string(r.termination), r.interactions,
                           r.iterations.empty() ? 0.0 : r.iterations.back().chamfer_gt);
    } catch (const std::exception& e) {
      text = failed_episode_log(g, c, seed, e.what());
      status = fmt::format("failed: {}", e.what());
      outcome[i] = 2;
    }
    write_file_atomic(path, text);
    log(outcome[i] == 2 ? Level::Warn : Level::Info, "{}: {}", cell_name(c), status);
    if (on_cell) {
      const std::lock_guard lock(mu);
      on_cell(c, status);
    }
  });
  for (int o : outcome) {
    if (o == 0) ++res.ran;
    if (o == 1) ++res.skipped;
    if (o == 2) ++res.failed;
  }
  write_report(res.logs_dir, res.report_dir);
  return res;
}

nlohmann::json build_report(const std::filesystem::path& logs_dir) {
  if (!std::filesystem::is_directory(logs_dir)) throw ConfigError(fmt::format("not a directory: {}", logs_dir.string()));
  std::vector<std::filesystem::path> files;
  for (const auto& f : std::filesystem::directory_iterator(logs_dir))
    if (f.is_regular_file() && f.path().extension() == ".jsonl") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError(fmt::format("no episode logs (*.jsonl) in {}", logs_dir.string()));

  struct Episode {
    std::string object, category, variation, mode;
    int trial = 0;
    bool ok = false, complete = false, converged = false;
    int interactions = 0;
    double chamfer = 0.0, volume = 0.0;
    std::vector<double> progression;
    std::size_t invalid_iterations = 0;
    double max_abs_sdf = 0.0, min_normal_dot = 1.0;
  };
  std::vector<Episode> episodes;
  for (const auto& f : files) {
    const EpisodeLog log = parse_episode_log(read_file(f), f.filename().string());
    Episode e;
    try {
      e.object = log.header.at("object").get<std::string>();
      e.category = log.header.at("category").get<std::string>();
      e.variation = log.header.at("variation").get<std::string>();
      e.mode = to_string(interaction_mode_from_string(log.header.at("mode").get<std::string>()));
      e.trial = log.header.at("trial").get<int>();
      e.complete = log.summary.has_value();
      e.ok = e.complete && log.summary->value("status", std::string()) == "ok" && !log.iterations.empty();
      double vol = 0.0;
      for (const auto& it : log.iterations) {
        e.progression.push_back(it.at("chamfer_gt").get<double>());
        vol += it.at("contact_volume_mm3").get<double>();
        if (!it.at("contacts_valid").get<bool>()) ++e.invalid_iterations;
        e.max_abs_sdf = std::max(e.max_abs_sdf, it.at("max_abs_sdf_mm").get<double>());
        e.min_normal_dot = std::min(e.min_normal_dot, it.at("min_normal_dot").get<double>());
      }
      if (e.ok) {
        e.converged = log.summary->at("converged").get<bool>();
        e.interactions = log.summary->at("interactions").get<int>();
        e.chamfer = e.progression.back();
        e.volume = vol / log.iterations.size();
      }
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaMismatch(fmt::format("{}: {}", f.filename().string(), ex.what()));
    } catch (const ConfigError& ex) {
      throw SchemaMismatch(fmt::format("{}: {}", f.filename().string(), ex.what()));
    }
    episodes.push_back(std::move(e));
  }

  struct Acc {
    std::size_t total = 0, completed = 0, converged = 0;
    double chamfer = 0.0, interactions = 0.0, volume = 0.0;
    int max_interactions = 0;
    void add(const Episode& e) {
      ++total;
      if (!e.ok) return;
      ++completed;
      converged += e.converged;
      chamfer += e.chamfer;
      interactions += e.interactions;
      volume += e.volume;
      max_interactions = std::max(max_interactions, e.interactions);
    }
    nlohmann::json json() const {
      return {{"trials", total},
              {"completed", completed},
              {"converged", converged},
              {"mean_chamfer", mean_or_null(chamfer, completed)},
              {"mean_interactions", mean_or_null(interactions, completed)},
              {"mean_volume_per_interaction_mm3", mean_or_null(volume, completed)},
              {"max_interactions", max_interactions}};
    }
  };

  auto object_less = [](const std::tuple<int, int, std::string>& a, const std::tuple<int, int, std::string>& b) {
    return a < b;
  };
  std::map<std::tuple<int, int, std::string>, std::pair<std::string, std::string>, decltype(object_less)> objects(
      object_less);
  std::map<int, std::string> modes;
  std::map<std::pair<std::string, std::string>, Acc> cells;  // (object, mode)
  std::map<std::string, Acc> by_mode;
  std::map<std::pair<std::string, std::string>, Acc> by_mode_category;
  std::map<std::string, std::vector<std::pair<double, std::size_t>>> prog;  // mode -> per iteration (sum, n)
  std::size_t iterations = 0, invalid = 0;
  double max_sdf = 0.0, min_dot = 1.0;
  std::size_t sphere_runs = 0, sphere_monotone = 0;
  for (const auto& e : episodes) {
    objects.emplace(std::make_tuple(category_rank(e.category), variation_rank(e.variation), e.object),
                    std::make_pair(e.category, e.variation));
    modes.emplace(mode_rank(e.mode), e.mode);
    cells[{e.object, e.mode}].add(e);
    by_mode[e.mode].add(e);
    by_mode_category[{e.mode, e.category}].add(e);
    iterations += e.progression.size();
    invalid += e.invalid_iterations;
    max_sdf = std::max(max_sdf, e.max_abs_sdf);
    min_dot = std::min(min_dot, e.min_normal_dot);
    if (!e.ok) continue;
    auto& p = prog[e.mode];
    if (p.size() < e.progression.size()) p.resize(e.progression.size());
    for (std::size_t i = 0; i < e.progression.size(); ++i) p[i].first += e.progression[i], ++p[i].second;
    if (e.category == "ball" && e.converged) {
      ++sphere_runs;
      bool monotone = true;
      for (std::size_t i = 3; i < e.progression.size(); ++i) monotone = monotone && e.progression[i] <= e.progression[i - 1];
      sphere_monotone += monotone;
    }
  }

  nlohmann::json mode_list = nlohmann::json::array();
  for (const auto& [_, m] : modes) mode_list.push_back(m);

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, cv] : objects) {
    const std::string& id = std::get<2>(key);
    nlohmann::json per_mode = nlohmann::json::object();
    for (const auto& [_, m] : modes) {
      const auto it = cells.find({id, m});
      per_mode[m] = it == cells.end() ? Acc{}.json() : it->second.json();
    }
    rows.push_back({{"object", id}, {"category", cv.first}, {"variation", cv.second}, {"modes", per_mode}});
  }

  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [_, m] : modes) summary[m] = by_mode[m].json();

  nlohmann::json categories = nlohmann::json::object();
  for (const auto& [key, acc] : by_mode_category) categories[key.first][key.second] = acc.json();

  nlohmann::json progression = nlohmann::json::object();
  for (const auto& [_, m] : modes) {
    nlohmann::json list = nlohmann::json::array();
    const auto& p = prog[m];
    for (std::size_t i = 0; i < p.size(); ++i)
      list.push_back({{"iteration", i + 1}, {"episodes", p[i].second}, {"mean_chamfer", mean_or_null(p[i].first, p[i].second)}});
    progression[m] = list;
  }

  auto volume_of = [&](const std::string& m) -> nlohmann::json {
    return summary.contains(m) ? summary[m]["mean_volume_per_interaction_mm3"] : nlohmann::json(nullptr);
  };
  auto ratio = [](const nlohmann::json& a, const nlohmann::json& b) -> nlohmann::json {
    if (a.is_null() || b.is_null() || !(b.get<double>() > 0.0)) return nullptr;
    return a.get<double>() / b.get<double>();
  };
  auto category_volume = [&](const std::string& m, const std::string& c) -> nlohmann::json {
    if (!categories.contains(m) || !categories[m].contains(c)) return nullptr;
    return categories[m][c]["mean_volume_per_interaction_mm3"];
  };
  const std::string gr = to_string(InteractionMode::GraspReleasing), fg = to_string(InteractionMode::FingerGrazing),
                    pr = to_string(InteractionMode::PalmRolling);
  const nlohmann::json comparisons = {
      {"volume_ratio_grazing_to_grasp", ratio(volume_of(fg), volume_of(gr))},
      {"volume_ratio_rolling_to_grasp", ratio(volume_of(pr), volume_of(gr))},
      {"rolling_volume_box", category_volume(pr, "box")},
      {"rolling_volume_ball", category_volume(pr, "ball")},
      {"rolling_volume_ratio_box_to_ball", ratio(category_volume(pr, "box"), category_volume(pr, "ball"))}};

  std::size_t total = episodes.size(), completed = 0, incomplete = 0;
  int max_interactions = 0;
  for (const auto& e : episodes) {
    completed += e.ok;
    incomplete += !e.complete;
    max_interactions = std::max(max_interactions, e.interactions);
  }

  return {{"schema_version", kLogSchemaVersion},
          {"episodes", total},
          {"completed", completed},
          {"failed", total - completed - incomplete},
          {"incomplete", incomplete},
          {"max_interactions", max_interactions},
          {"modes", mode_list},
          {"rows", rows},
          {"mode_summary", summary},
          {"category_summary", categories},
          {"comparisons", comparisons},
          {"contact_validity",
           {{"iterations", iterations},
            {"invalid_iterations", invalid},
            {"max_abs_sdf_mm", max_sdf},
            {"min_normal_dot", min_dot}}},
          {"progression", progression},
          {"sphere_progression",
           {{"converged_runs", sphere_runs},
            {"non_increasing_after_2", sphere_monotone},
            {"fraction", sphere_runs ? nlohmann::json(static_cast<double>(sphere_monotone) / sphere_runs)
                                     : nlohmann::json(nullptr)}}}};
}

std::string report_table(const nlohmann::json& r) {
  const auto& modes = r.at("modes");
  std::string out;
  out += fmt::format("Episodes: {} ({} completed, {} failed, {} incomplete); max interactions {}\n\n",
                     r.at("episodes").get<std::size_t>(), r.at("completed").get<std::size_t>(),
                     r.at("failed").get<std::size_t>(), r.at("incomplete").get<std::size_t>(),
                     r.at("max_interactions").get<int>());

  constexpr int kCell = 33;
  auto cells = [&](const nlohmann::json& acc) {
    return fmt::format("{:>8} {:>6} {:>9} {:>2}/{:<2}", fixed(acc.at("mean_chamfer"), 4),
                       fixed(acc.at("mean_interactions"), 2), fixed(acc.at("mean_volume_per_interaction_mm3"), 1),
                       acc.at("completed").get<std::size_t>(), acc.at("trials").get<std::size_t>());
  };
  std::string head1 = fmt::format("{:<9} {:<9}", "shape", "variation");
  std::string head2 = fmt::format("{:<19}", "");
  for (const auto& m : modes) {
    head1 += fmt::format(" | {:<{}}", m.get<std::string>(), kCell - 3);
    head2 += fmt::format(" | {:>8} {:>6} {:>9} {:>5}", "chamfer", "inter", "vol/int", "n");
  }
  out += head1 + "\n" + head2 + "\n" + std::string(head2.size(), '-') + "\n";
  for (const auto& row : r.at("rows")) {
    std::string line = fmt::format("{:<9} {:<9}", row.at("category").get<std::string>(), row.at("variation").get<std::string>());
    for (const auto& m : modes) line += " | " + cells(row.at("modes").at(m.get<std::string>()));
    out += line + "\n";
  }
  std::string mean = fmt::format("{:<19}", "mean");
  for (const auto& m : modes) mean += " | " + cells(r.at("mode_summary").at(m.get<std::string>()));
  out += std::string(head2.size(), '-') + "\n" + mean + "\n\n";

  out += "Contact volume per interaction by category (mm^3)\n";
  std::string ch = fmt::format("{:<16}", "mode");
  for (const char* c : {"ball", "box", "cylinder"}) ch += fmt::format(" {:>9}", c);
  out += ch + "\n";
  for (const auto& m : modes) {
    const auto& cat = r.at("category_summary").at(m.get<std::string>());
    std::string line = fmt::format("{:<16}", m.get<std::string>());
    for (const char* c : {"ball", "box", "cylinder"})
      line += fmt::format(" {:>9}", cat.contains(c) ? fixed(cat.at(c).at("mean_volume_per_interaction_mm3"), 1) : "-");
    out += line + "\n";
  }
  const auto& cmp = r.at("comparisons");
  out += fmt::format("\nvolume ratio grazing/grasp  {}\n", fixed(cmp.at("volume_ratio_grazing_to_grasp"), 3));
  out += fmt::format("volume ratio rolling/grasp  {}\n", fixed(cmp.at("volume_ratio_rolling_to_grasp"), 3));
  out += fmt::format("rolling volume box/ball     {}\n", fixed(cmp.at("rolling_volume_ratio_box_to_ball"), 3));

  const auto& cv = r.at("contact_validity");
  out += fmt::format("\nContact validity: {} of {} iterations invalid; max |sdf| {:.3e} mm; min normal dot {:.6f}\n",
                     cv.at("invalid_iterations").get<std::size_t>(), cv.at("iterations").get<std::size_t>(),
                     cv.at("max_abs_sdf_mm").get<double>(), cv.at("min_normal_dot").get<double>());

  out += "\nChamfer by interaction (mean over episodes still running)\n";
  std::string ph = fmt::format("{:>4}", "iter");
  std::size_t rows = 0;
  for (const auto& m : modes) {
    ph += fmt::format(" | {:<16}", m.get<std::string>());
    rows = std::max(rows, r.at("progression").at(m.get<std::string>()).size());
  }
  out += ph + "\n";
  for (std::size_t i = 0; i < rows; ++i) {
    std::string line = fmt::format("{:>4}", i + 1);
    for (const auto& m : modes) {
      const auto& p = r.at("progression").at(m.get<std::string>());
      if (i < p.size())
        line += fmt::format(" | {:>8} ({:>3})  ", fixed(p[i].at("mean_chamfer"), 4), p[i].at("episodes").get<std::size_t>());
      else
        line += fmt::format(" | {:<16}", "");
    }
    out += line + "\n";
  }
  const auto& sp = r.at("sphere_progression");
  out += fmt::format("\nConverged ball runs non-increasing after iteration 2: {} of {}\n",
                     sp.at("non_increasing_after_2").get<std::size_t>(), sp.at("converged_runs").get<std::size_t>());
  std::string trimmed;
  std::istringstream lines(out);
  for (std::string line; std::getline(lines, line);) trimmed += line.substr(0, line.find_last_not_of(' ') + 1) + "\n";
  return trimmed;
}

std::string report_csv(const nlohmann::json& r) {
  std::string out =
      "object,category,variation,mode,trials,completed,converged,mean_chamfer,mean_interactions,"
      "mean_volume_per_interaction_mm3,max_interactions\n";
  for (const auto& row : r.at("rows"))
    for (const auto& m : r.at("modes")) {
      const auto& a = row.at("modes").at(m.get<std::string>());
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", row.at("object").get<std::string>(),
                         row.at("category").get<std::string>(), row.at("variation").get<std::string>(),
                         m.get<std::string>(), csv_num(a.at("trials")), csv_num(a.at("completed")),
                         csv_num(a.at("converged")), csv_num(a.at("mean_chamfer")), csv_num(a.at("mean_interactions")),
                         csv_num(a.at("mean_volume_per_interaction_mm3")), csv_num(a.at("max_interactions")));
    }
  return out;
}

std::string progression_csv(const nlohmann::json& r) {
  std::string out = "mode,iteration,episodes,mean_chamfer\n";
  for (const auto& m : r.at("modes"))
    for (const auto& p : r.at("progression").at(m.get<std::string>()))
      out += fmt::format("{},{},{},{}\n", m.get<std::string>(), csv_num(p.at("iteration")), csv_num(p.at("episodes")),
                         csv_num(p.at("mean_chamfer")));
  return out;
}

nlohmann::json write_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir) {
  const nlohmann::json report = build_report(logs_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));
  write_file_atomic(out_dir / "report.json", report.dump(2) + "\n");
  write_file_atomic(out_dir / "report.csv", report_csv(report));
  write_file_atomic(out_dir / "progression.csv", progression_csv(report));
  write_file_atomic(out_dir / "report.txt", report_table(report));
  return report;
}

int cmd_generate_dataset(const std::filesystem::path& config) {
  try {
    if (!std::filesystem::is_regular_file(config))
      throw ConfigError(fmt::format("config file not found: {}", config.string()));
    std::filesystem::path out_dir;
    const DatasetConfig c = load_dataset_config(config, &out_dir);
    const nlohmann::json manifest = build_dataset(c, out_dir);
    const std::string hash = sha256_hex(manifest.dump(2) + "\n");
    const auto& counts = manifest.at("counts");
    fmt::print("dataset {}\n", out_dir.string());
    fmt::print("meshes {} x interactions {} x truncations {} = {} samples\n", counts.at("meshes").get<std::size_t>(),
               counts.at("per_shape").get<std::size_t>(), counts.at("truncation_levels").get<std::size_t>(),
               counts.at("samples").get<std::size_t>());
    fmt::print("manifest sha256 {}\n", hash);
    return 0;
  } catch (const ConfigError& e) {
    log(Level::Error, "{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, "{}", e.what());
    return 1;
  }
}

int cmd_run_grid(const std::filesystem::path& config, std::optional<int> parallel, bool resume) {
  try {
    ExperimentGrid g = load_grid_config(config);
    if (parallel) {
      if (*parallel < 1) throw ConfigError("--parallel must be >= 1");
      g.parallel = *parallel;
    }
    const GridRunResult r = run_grid(g, resume);
    fmt::print("cells {}: ran {}, skipped {}, failed {}\n", r.cells, r.ran, r.skipped, r.failed);
    fmt::print("logs {}\nreport {}\n", r.logs_dir.string(), r.report_dir.string());
    if (r.cells > 0 && r.failed == r.cells) {
      log(Level::Error, "every cell failed");
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    log(Level::Error, "{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, "{}", e.what());
    return 1;
  }
}

int cmd_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir) {
  try {
    const nlohmann::json report = write_report(logs_dir, out_dir);
    fmt::print("{}", report_table(report));
    return 0;
  } catch (const ConfigError& e) {
    log(Level::Error, "{}", e.what());
    return 2;
  } catch (const SchemaMismatch& e) {
    log(Level::Error, "{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, "{}", e.what());
    return 1;
  }
}

}  // namespace tactex
