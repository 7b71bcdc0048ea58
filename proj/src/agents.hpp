#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "approx.hpp"
#include "simworld.hpp"

namespace gvfl {

// Ornstein-Uhlenbeck exploration noise, one process per action dimension.
struct OuProcess {
  double theta = 1.0;
  double sigma = 0.1;
  double dt = 0.01;
  std::array<double, 2> x{0.0, 0.0};

  void reset() { x = {0.0, 0.0}; }
  std::array<double, 2> sample(Rng& rng) {
    for (double& v : x)
      v += theta * (0.0 - v) * dt + sigma * std::sqrt(dt) * rng.normal();
    return x;
  }
};

// Replay tuple over precomputed features; raw actions live in [-1, 1]^2
// (policy coordinates).  Features are float to keep image replays small.
struct RlTransition {
  std::vector<float> feat;
  std::array<double, 2> action;
  double reward = 0.0;
  std::vector<float> next_feat;
  bool terminal = false;
};

struct DdpgConfig {
  int feat_dim = 0;
  std::vector<int> actor_hidden{64, 32};
  std::vector<int> critic_hidden{64, 32};
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double gamma = 0.99;
  double polyak = 0.001;
  double reward_scale = 1.0;
  double speed_floor_frac = 0.5;  // raw -1 maps to this fraction of the cap
  double speed_max = 0.6;
};

class DdpgAgent {
 public:
  DdpgAgent(const DdpgConfig& cfg, Rng& rng);
  DdpgAgent(const DdpgConfig& cfg, Net actor, Net critic, Net actor_t,
            Net critic_t);

  // Deterministic policy output in [-1, 1]^2 (tanh head).
  std::array<double, 2> act_raw(std::span<const double> feat) const;
  // Adds OU noise and clips back into the box.
  std::array<double, 2> act_explore(std::span<const double> feat, OuProcess& ou,
                                    Rng& rng) const;
  // steer = raw0 * pi/2; speed_cmd in [floor, 1] * cap.
  Action to_env(const std::array<double, 2>& raw, double speed_cap) const;

  struct Stats {
    double critic_loss = 0.0;
    double actor_q = 0.0;
  };
  Stats update(std::span<const RlTransition* const> batch);

  const Net& actor() const { return actor_; }
  const Net& critic() const { return critic_; }
  void save(const std::filesystem::path& dir) const;
  static DdpgAgent load(const DdpgConfig& cfg, const std::filesystem::path& dir);

 private:
  DdpgConfig cfg_;
  AdamHyper actor_hyper_, critic_hyper_;
  Net actor_, critic_, actor_t_, critic_t_;
  // scratch
  Tape tape_;
  std::vector<double> grad_, feat_, ga_, out1_;
};

struct BcqConfig {
  int feat_dim = 0;
  int hidden = 64;
  int latent_dim = 4;
  double lr = 1e-4;
  double gamma = 0.99;
  double polyak = 0.001;
  double kl_weight = 0.5;
  int n_candidates = 10;
  double perturbation = 0.05;
  double reward_scale = 1.0;
  // Action box in policy coordinates: steer in [-1, 1], speed coordinate
  // limited to the dataset-safe band.
  double speed_lo = 0.1;
  double speed_hi = 0.6;
  double speed_max = 0.6;
};

class BcqAgent {
 public:
  BcqAgent(const BcqConfig& cfg, Rng& rng);

  std::array<double, 2> act_raw(std::span<const double> feat, Rng& rng) const;
  Action to_env(const std::array<double, 2>& raw) const;

  struct Stats {
    double vae_loss = 0.0;
    double critic_loss = 0.0;
  };
  Stats update(std::span<const RlTransition* const> batch, Rng& rng);

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

  double speed_lo_raw() const;
  double speed_hi_raw() const;

  const Net& vae_enc() const { return enc_; }
  const Net& vae_dec() const { return dec_; }
  const Net& perturb_net() const { return actor_; }
  const Net& critic1() const { return critic1_; }
  const Net& critic2() const { return critic2_; }

 private:
  std::array<double, 2> clip_box(std::array<double, 2> a) const;
  std::array<double, 2> decode(std::span<const double> z) const;

  BcqConfig cfg_;
  AdamHyper hyper_;
  Net enc_, dec_, actor_, critic1_, critic2_, critic1_t_, critic2_t_;
  // scratch
  mutable Tape tape_;
  std::vector<double> grad1_, grad2_;
};

// Steering from the two lane signals; speed backs off with steering effort.
Action classical_act(const GroundTruth& gt, double k_alpha, double k_beta,
                     double k_speed, double v_max);

struct ExplorerConfig {
  double v_init = 0.35;
  double v_lo = 0.2;
  double v_hi = 0.5;
  double arrival_radius = 0.025;
  double pos_noise_std = 0.02;
  double pos_clip = 0.3;
  double v_noise_std = 0.02;
  // Pursuit lead.  A car with a bounded turning radius cannot chase a point
  // abeam of it; the target waypoint is kept at least this far ahead.
  double lookahead_m = 0.85;
};

// Pure-pursuit chaser of a noisy waypoint cursor; the offset and target speed
// random-walk each time a waypoint is reached.
struct Explorer {
  ExplorerConfig cfg;
  size_t k = 0;
  double eps_x = 0.0, eps_y = 0.0;
  double v_target = 0.0;
  bool started = false;

  void reset() {
    k = 0;
    eps_x = eps_y = 0.0;
    v_target = cfg.v_init;
    started = false;
  }
  Action act(const TrackSpec& track, const VehicleState& s, Rng& rng);
};

}  // namespace gvfl
