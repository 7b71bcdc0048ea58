#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gvfl {

struct TraceRow {
  double reward = 0.0;
  double speed = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double steer = 0.0;
  double speed_cmd = 0.0;
};

// Aggregate driving-quality metrics over one rollout.  Comfort terms use
// first/second differences of the executed actions (env units); jerkiness is
// the population standard deviation of per-step action deltas.
struct MetricSet {
  double reward_per_second = 0.0;
  double average_speed = 0.0;
  double offcenteredness = 0.0;       // mean |alpha|
  double absolute_road_angle = 0.0;   // mean |beta|
  double near_out_of_lane = 0.0;      // fraction with |alpha| > 0.75
  double comfort1_steer = 0.0;
  double comfort1_speed = 0.0;
  double comfort2_steer = 0.0;
  double comfort2_speed = 0.0;
  double jerkiness_steer = 0.0;
  double jerkiness_speed = 0.0;
  double total_reward = 0.0;
  // Lane departures during the rollout; filled by the evaluation driver
  // (compute_metrics cannot see resets), zero otherwise.
  double departures = 0.0;

  std::map<std::string, double> as_map() const;
};

MetricSet compute_metrics(const std::vector<TraceRow>& trace, double dt);

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& trace);
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path, const MetricSet& m);
std::map<std::string, double> read_metrics_csv(
    const std::filesystem::path& path);

}  // namespace gvfl
