#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tactex/exploration.hpp"
#include "tactex/gripper.hpp"
#include "tactex/primitives.hpp"

namespace tactex {

inline constexpr int kLogSchemaVersion = 1;
inline constexpr int kGridSchemaVersion = 1;

/// Objects x modes x trials, one episode per cell.
struct ExperimentGrid {
  ObjectSuite suite = default_suite();
  std::vector<std::string> objects;  // ids in the suite; empty means all
  std::vector<InteractionMode> modes = {InteractionMode::GraspReleasing, InteractionMode::FingerGrazing,
                                        InteractionMode::PalmRolling};
  int trials = 5;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "grid";
  int parallel = 1;
  GripperModel hand = GripperModel::default_model();
  ExplorationConfig exploration;  // mode is overridden per cell

  void validate() const;
  std::vector<const SuiteEntry*> selected() const;
};

/// Every field, defaults included.
nlohmann::json grid_to_json(const ExperimentGrid& g);
/// Relative paths (suite, hand, out_dir) resolve against `base`.
ExperimentGrid grid_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
ExperimentGrid load_grid_config(const std::filesystem::path& path);

struct GridCell {
  const SuiteEntry* object = nullptr;
  InteractionMode mode = InteractionMode::GraspReleasing;
  int trial = 0;
};

/// Object-major, then mode, then trial.
std::vector<GridCell> grid_cells(const ExperimentGrid& g);

/// Independent of the cell's position in the grid.
std::uint64_t cell_seed(std::uint64_t master, const std::string& object_id, InteractionMode mode, int trial);

std::string cell_name(const GridCell& c);
std::filesystem::path cell_log_path(const std::filesystem::path& logs_dir, const GridCell& c);

/// JSONL: header, one line per iteration, summary.
std::string episode_log(const ExperimentGrid& g, const GridCell& c, std::uint64_t seed, const EpisodeRecord& r);
/// Same layout for a cell whose episode threw.
std::string failed_episode_log(const ExperimentGrid& g, const GridCell& c, std::uint64_t seed,
                               const std::string& error);

/// Parsed log lines. Throws SchemaMismatch on a missing or different version.
struct EpisodeLog {
  nlohmann::json header;
  std::vector<nlohmann::json> iterations;
  std::optional<nlohmann::json> summary;
};
EpisodeLog parse_episode_log(const std::string& text, const std::string& name = "log");

/// True when the file parses and ends with a summary line.
bool log_complete(const std::filesystem::path& path);

struct GridRunResult {
  std::size_t cells = 0;
  std::size_t ran = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::filesystem::path logs_dir;
  std::filesystem::path report_dir;
};

/// Writes <out>/config.json, <out>/logs/*.jsonl and <out>/report/. With
/// `resume`, cells whose log is complete are not rerun.
GridRunResult run_grid(const ExperimentGrid& g, bool resume,
                       const std::function<void(const GridCell&, const std::string&)>& on_cell = {});

/// Aggregates from the logs alone.
nlohmann::json build_report(const std::filesystem::path& logs_dir);
std::string report_table(const nlohmann::json& report);
std::string report_csv(const nlohmann::json& report);
std::string progression_csv(const nlohmann::json& report);

/// report.json, report.csv, progression.csv, report.txt.
nlohmann::json write_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir);

// CLI entry points, returning process exit codes.
int cmd_generate_dataset(const std::filesystem::path& config);
int cmd_run_grid(const std::filesystem::path& config, std::optional<int> parallel, bool resume);
int cmd_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir);

}  // namespace tactex
