#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"

namespace gvfl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Action {
  double steer = 0.0;      // radians, +left
  double speed_cmd = 0.0;  // m/s
};

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, world frame
  double speed = 0.0;    // m/s
};

struct GroundTruth {
  double alpha = 0.0;            // signed lane centeredness, clipped to [-1, 1]
  double alpha_unclipped = 0.0;  // signed perpendicular offset / half lane width
  double beta = 0.0;             // road angle, clipped to [-pi/2, pi/2]
  double tangent_angle = 0.0;
  size_t nearest_index = 0;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

enum class TrackKind { RectangleRounded, Oval, Complex, Random };
TrackKind track_kind_from_name(const std::string& name);
const char* track_kind_name(TrackKind k);

struct TrackSpec {
  std::string id;
  std::vector<Vec2> centerline;  // closed loop, uniform spacing
  double half_lane_width = 0.38;
  double spacing = 0.025;
  double marking_segment_len = 0.25;
  std::vector<Segment> markings;      // left chain then right chain
  std::vector<uint8_t> damage_mask;   // per marking segment, 1 = missing

  size_t size() const { return centerline.size(); }
};

// Derives marking segments from the centerline (call after editing it).
void rebuild_markings(TrackSpec& track);

TrackSpec generate_track(TrackKind kind, uint64_t seed, double half_lane_width,
                         double spacing, double marking_segment_len);

// Marks a deterministic fraction of marking segments as missing.
void apply_damage(TrackSpec& track, double fraction, uint64_t seed);

// Traversal direction flip (waypoint order reversed, markings re-derived).
TrackSpec reverse_track(const TrackSpec& track);

// Reflection across the world x axis (y negated); used by tests.
TrackSpec mirror_track(const TrackSpec& track);

// Textual format: "H=<meters>" and "M=<meters>" headers (half lane width,
// marking segment length) then one "x y" line per waypoint.  The damage mask
// goes to <path>.damage as one 0/1 line per segment.
void save_track(const TrackSpec& track, const std::filesystem::path& path);
TrackSpec load_track(const std::filesystem::path& path);

// Smallest-distance waypoint.  With hint >= 0 only indices within `window`
// of the hint are searched (wrapping), matching how labels are produced
// incrementally along a trajectory.
size_t nearest_centerline(const TrackSpec& track, Vec2 p, long hint = -1,
                          int window = 10);

GroundTruth ground_truth(const TrackSpec& track, const VehicleState& s,
                         long hint = -1);

double wrap_angle(double a);  // to (-pi, pi]

struct SimConfig {
  double dt = 0.1;
  int max_steps = 1200;
  double heading_rate_gain = 1.5;
  double speed_lag = 1.0;
  double speed_max = 0.6;
  int render_w = 32;
  int render_h = 24;
  double window_width = 2.0;  // metres across at the vehicle
  double window_ahead = 3.0;  // metres ahead of the vehicle
  int texture = 0;            // brightness variant
  double marking_width_px = 1.0;
};

VehicleState step_dynamics(const VehicleState& s, const Action& a,
                           const SimConfig& cfg);

double lane_reward(double speed, double alpha, double beta, double scale,
                   double alpha_sign);

// Top-down local window, vehicle at bottom-centre heading up, row 0 at the
// far edge.  Returns render_w * render_h floats in [0, 1], row-major.
std::vector<float> render_frame(const TrackSpec& track, const VehicleState& s,
                                const SimConfig& cfg, bool use_damage);

std::vector<float> mirror_frame(const std::vector<float>& frame, int w, int h);

using FramePtr = std::shared_ptr<const std::vector<float>>;

struct Observation {
  FramePtr frame_prev;
  FramePtr frame_cur;
  double speed = 0.0;
  Action last_action;
};

struct StepResult {
  double reward = 0.0;
  bool departed = false;  // |alpha_unclipped| >= 1 at the post-step state
};

// Flat network input: both frames (raw [0,1] pixels), then normalized speed,
// last steer and last speed command, each mapped to [-1, 1].
size_t obs_feature_width(const SimConfig& cfg);
void obs_features(const Observation& obs, const SimConfig& cfg,
                  std::vector<double>& out);

class World {
 public:
  World(TrackSpec track, SimConfig cfg, double reward_scale = 1.0,
        double reward_alpha_sign = -1.0);

  void reset(size_t start_index = 0, bool use_damage = false);
  StepResult step(const Action& a);

  const TrackSpec& track() const { return track_; }
  const SimConfig& config() const { return cfg_; }
  const VehicleState& state() const { return state_; }
  const GroundTruth& truth() const { return gt_; }
  const Observation& observation() const { return obs_; }
  int steps() const { return steps_; }
  bool departed() const { return std::abs(gt_.alpha_unclipped) >= 1.0; }
  bool time_limit_reached() const { return steps_ >= cfg_.max_steps; }
  bool use_damage() const { return use_damage_; }

  // Places the vehicle at an arbitrary pose (probe/oracle support).
  void reset_to_state(const VehicleState& s, const Action& last_action,
                      bool use_damage = false);

 private:
  void refresh_observation(bool duplicate_prev);

  TrackSpec track_;
  SimConfig cfg_;
  double reward_scale_;
  double reward_alpha_sign_;
  VehicleState state_;
  GroundTruth gt_;
  Observation obs_;
  int steps_ = 0;
  bool use_damage_ = false;
  long idx_hint_ = -1;
};

// Exponential preference for rarely-used tracks: p_i proportional to
// exp(-counts[i] / kappa) with kappa = mean(counts), or 1 if the mean is 0.
size_t sample_track_priority(const std::vector<uint64_t>& counts, Rng& rng);

}  // namespace gvfl
