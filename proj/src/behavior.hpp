#pragma once

#include <span>
#include <vector>

#include "approx.hpp"
#include "gvf.hpp"
#include "simworld.hpp"

namespace gvfl {

// Uniform proposal over the action box: steer in [-pi/2, pi/2], speed command
// expressed as a fraction of speed_max in [0, 1].  Joint density is measured
// per (radian x fraction), i.e. 1/pi.
Action eta_sample(Rng& rng, double speed_max);
double eta_density();

// Density-ratio trick: mu_hat(a|s) = g/(1-g) * eta(a|s), with the
// discriminator output clamped away from {0, 1}.
double estimate_mu(double g, double eta_dens, double clamp_eps);

struct BehaviorStats {
  double bce = 0.0;
};

// Binary classifier g(s, a): buffer actions are labelled 1, actions redrawn
// from eta are labelled 0.  Each update relabels a random half of the batch.
class BehaviorLearner {
 public:
  BehaviorLearner(SimConfig sim, const std::vector<int>& hidden, double lr,
                  double clamp_eps, Rng& rng);
  BehaviorLearner(SimConfig sim, Net net, double lr, double clamp_eps);

  const Net& net() const { return net_; }
  Net& net() { return net_; }

  double discriminate(const Observation& obs, const Action& a) const;
  double mu_hat(const Observation& obs, const Action& a) const;

  BehaviorStats update(std::span<const Transition* const> batch, Rng& rng);

 private:
  void action_features(const Action& a, double* out) const;
  double forward_clamped(const std::vector<double>& feat) const;

  SimConfig sim_;
  AdamHyper hyper_;
  double clamp_eps_;
  Net net_;
  // scratch
  Tape tape_;
  std::vector<double> grad_, feat_;
};

}  // namespace gvfl
