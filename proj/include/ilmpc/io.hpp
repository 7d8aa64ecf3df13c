#pragma once

#include <string>
#include <vector>

#include "ilmpc/orchestrator.hpp"

namespace ilmpc {

// ---- configuration -------------------------------------------------------

/// The benchmark configuration as JSON text, every field at its default.
std::string default_config_text();

/// Parses and validates a configuration. `overrides` are "dotted.key=value"
/// strings applied on top of the file (values parsed as JSON, falling back to
/// plain strings). Throws ConfigError naming the offending field.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
/// Input files named in the file itself are resolved relative to its directory.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

// ---- network parameters --------------------------------------------------

void save_certificate(const std::string& path, const Certificate& cert, const TaskSpec& task);
Certificate load_certificate(const std::string& path);
void save_policy(const std::string& path, const Policy& policy);
Policy load_policy(const std::string& path);

// ---- trajectories --------------------------------------------------------

/// JSON Lines, one record per step: {iteration, t, x, u, cost_to_go}.
void save_dataset(const std::string& path, const TrajectoryDataset& data);
/// Support points are written with t = -1.
TrajectoryDataset load_dataset(const std::string& path);
void save_trajectory(const std::string& path, const TaskSpec& task, const Trajectory& traj,
                     int iteration = 0);
Trajectory load_trajectory(const std::string& path);

// ---- CSV -----------------------------------------------------------------

void write_iteration_log(const std::string& path, const std::vector<StepLog>& steps);
std::vector<StepLog> read_iteration_log(const std::string& path);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows);
std::vector<TimingRow> read_timing_csv(const std::string& path);

void write_heatmap_csv(const std::string& path, const std::vector<HeatmapCell>& cells);
std::vector<HeatmapCell> read_heatmap_csv(const std::string& path);

/// Boundary loops as rows (loop, vertex, z, y).
void write_alpha_csv(const std::string& path, const std::vector<std::vector<Point2>>& loops);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// ---- run directory -------------------------------------------------------

/// Writes run artifacts under a directory; every method is a no-op when the
/// directory is empty.
struct Artifacts {
  explicit Artifacts(std::string dir);
  std::string dir;

  bool enabled() const { return !dir.empty(); }
  std::string path(const std::string& name) const;
  void networks(int j, const Certificate& cert, const Policy& policy, const TaskSpec& task) const;
  void dataset(const TrajectoryDataset& data) const;
  void iteration(const IterationReport& report) const;
  void heatmap(int j, const Certificate& cert, const TaskSpec& task, const HeatmapConfig& cfg) const;
  void alpha(int j, const AlphaShape& shape) const;
  void summary(const std::vector<IterationReport>& reports,
               const std::vector<IterationReport>& baseline = {}) const;
};

std::string heatmap_file_name(int j, double theta);

}  // namespace ilmpc
