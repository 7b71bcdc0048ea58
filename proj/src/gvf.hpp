#pragma once

#include <span>
#include <vector>

#include "approx.hpp"
#include "simworld.hpp"

namespace gvfl {

enum class CumulantKind { LaneCenteredness, RoadAngle };

// Bank of predictive questions: for each cumulant kind, one head per
// timescale.  Head order: lane-centeredness across gammas (ascending as
// given), then road-angle across gammas.
struct GvfSpec {
  std::vector<double> gammas;

  size_t n_heads() const { return 2 * gammas.size(); }
  double gamma(size_t head) const { return gammas.at(head % gammas.size()); }
  CumulantKind kind(size_t head) const {
    return head < gammas.size() ? CumulantKind::LaneCenteredness
                                : CumulantKind::RoadAngle;
  }
};

// Cumulants are scaled by (1 - gamma) so discounted sums stay in [-1, 1];
// the gamma = 0 head predicts the raw next-step signal.
double cumulant_signal(const GroundTruth& gt, CumulantKind kind);
std::vector<double> cumulants(const GroundTruth& gt, const GvfSpec& spec);
std::vector<double> continuations(const GvfSpec& spec, bool terminal);

double td_target(double cumulant, double continuation, double v_next);

// Target-policy density: independent Gaussians around the previous action in
// normalized coordinates (steer / (pi/2), speed_cmd / speed_max).
double tau_density(const Action& a, const Action& last, double sigma_tau,
                   double speed_max);

// rho = min(tau / mu_hat, rho_max); mu_hat must be positive.
double importance_ratio(double tau_d, double mu_hat, double rho_max);

struct Transition {
  Observation obs;
  Action action;
  Observation next_obs;
  std::vector<double> cumulant;      // per head, labels of the next state
  std::vector<double> continuation;  // per head, 0 at termination else gamma
  double reward = 0.0;
  double rho = 1.0;
  bool terminal = false;
};

struct GvfUpdateStats {
  double mean_sq_td = 0.0;  // averaged over batch and heads
  double rho_bar = 0.0;
  double mean_abs_pred = 0.0;  // divergence watchdog signal
};

// TD over the resampled minibatch: gradient rho_bar * mean(delta * grad v),
// bootstrap target held constant (no target network).
class GvfLearner {
 public:
  GvfLearner(GvfSpec spec, SimConfig sim, const std::vector<int>& hidden,
             double lr, Rng& rng);
  GvfLearner(GvfSpec spec, SimConfig sim, Net net, double lr);

  const GvfSpec& spec() const { return spec_; }
  const Net& net() const { return net_; }
  Net& net() { return net_; }

  std::vector<double> predict(const Observation& obs) const;
  // phi = [predictions..., last steer, last speed_cmd, speed], all in [-1,1]
  // modulo prediction overshoot.
  std::vector<double> represent(const Observation& obs) const;
  size_t phi_width() const { return spec_.n_heads() + 3; }

  GvfUpdateStats update(std::span<const Transition* const> batch,
                        double rho_bar);

 private:
  GvfSpec spec_;
  SimConfig sim_;
  AdamHyper hyper_;
  Net net_;
  // scratch
  Tape tape_;
  std::vector<double> grad_, feat_, next_feat_, out_grad_;
};

std::vector<LayerSpec> mlp_layers(int in, const std::vector<int>& hidden,
                                  int out, Activation final_act);

}  // namespace gvfl
