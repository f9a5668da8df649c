#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tactex/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Tactile exploration experiments"};
  app.require_subcommand(1);

  std::string dataset_config;
  auto* gen = app.add_subcommand("generate-dataset", "Generate the contact-grasp completion dataset");
  gen->add_option("--config", dataset_config, "Dataset config (JSON)")->required();

  std::string grid_config;
  std::optional<int> parallel;
  bool resume = false;
  auto* grid = app.add_subcommand("run-grid", "Run every (object, mode, trial) cell and write logs and a report");
  grid->add_option("--config", grid_config, "Grid config (JSON)")->required();
  grid->add_option("--parallel", parallel, "Concurrent cells");
  grid->add_flag("--resume", resume, "Skip cells that already have a complete log");

  std::string logs, out;
  auto* report = app.add_subcommand("report", "Aggregate episode logs");
  report->add_option("--logs", logs, "Directory of episode logs")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*gen) return tactex::cmd_generate_dataset(dataset_config);
  if (*grid) return tactex::cmd_run_grid(grid_config, parallel, resume);
  return tactex::cmd_report(logs, out);
}
