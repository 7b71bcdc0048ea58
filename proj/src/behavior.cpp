#include "behavior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gvfl {

Action eta_sample(Rng& rng, double speed_max) {
  Action a;
  a.steer = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
  a.speed_cmd = rng.uniform01() * speed_max;
  return a;
}

double eta_density() { return 1.0 / M_PI; }

double estimate_mu(double g, double eta_dens, double clamp_eps) {
  if (clamp_eps <= 0.0 || clamp_eps >= 0.5)
    throw std::invalid_argument("estimate_mu: clamp_eps must be in (0, 0.5)");
  double gc = std::clamp(g, clamp_eps, 1.0 - clamp_eps);
  return gc / (1.0 - gc) * eta_dens;
}

BehaviorLearner::BehaviorLearner(SimConfig sim, const std::vector<int>& hidden,
                                 double lr, double clamp_eps, Rng& rng)
    : sim_(sim), clamp_eps_(clamp_eps) {
  hyper_.lr = lr;
  net_ = Net::init_uniform(
      mlp_layers(static_cast<int>(obs_feature_width(sim_)) + 2, hidden, 1,
                 Activation::Sigmoid),
      rng);
  grad_.assign(net_.param_count(), 0.0);
}

BehaviorLearner::BehaviorLearner(SimConfig sim, Net net, double lr,
                                 double clamp_eps)
    : sim_(sim), clamp_eps_(clamp_eps), net_(std::move(net)) {
  hyper_.lr = lr;
  if (net_.input_width() != static_cast<int>(obs_feature_width(sim_)) + 2)
    throw std::invalid_argument("behavior net input width mismatch");
  if (net_.output_width() != 1)
    throw std::invalid_argument("behavior net must have one output");
  grad_.assign(net_.param_count(), 0.0);
}

void BehaviorLearner::action_features(const Action& a, double* out) const {
  out[0] = a.steer / (M_PI / 2.0);
  out[1] = a.speed_cmd / sim_.speed_max;
}

double BehaviorLearner::forward_clamped(const std::vector<double>& feat) const {
  double g = net_.forward(feat)[0];
  return std::clamp(g, clamp_eps_, 1.0 - clamp_eps_);
}

double BehaviorLearner::discriminate(const Observation& obs,
                                     const Action& a) const {
  std::vector<double> feat;
  obs_features(obs, sim_, feat);
  feat.resize(feat.size() + 2);
  action_features(a, feat.data() + feat.size() - 2);
  return forward_clamped(feat);
}

double BehaviorLearner::mu_hat(const Observation& obs, const Action& a) const {
  return estimate_mu(discriminate(obs, a), eta_density(), clamp_eps_);
}

BehaviorStats BehaviorLearner::update(std::span<const Transition* const> batch,
                                      Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("behavior update: empty batch");
  size_t n = batch.size();
  // Random half of the minibatch gets its action replaced by an eta draw.
  std::vector<uint8_t> relabel(n, 0);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  for (size_t i = 0; i + 1 < n; ++i) {
    size_t j = i + static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  for (size_t i = 0; i < n / 2; ++i) relabel[order[i]] = 1;

  std::fill(grad_.begin(), grad_.end(), 0.0);
  double bce = 0.0;
  std::vector<double> out_grad(1);
  for (size_t i = 0; i < n; ++i) {
    const Transition* tr = batch[i];
    Action a = tr->action;
    double z = 1.0;
    if (relabel[i]) {
      a = eta_sample(rng, sim_.speed_max);
      z = 0.0;
    }
    obs_features(tr->obs, sim_, feat_);
    feat_.resize(feat_.size() + 2);
    action_features(a, feat_.data() + feat_.size() - 2);
    net_.forward(feat_, tape_);
    double g = tape_.post.back()[0];
    double gc = std::clamp(g, clamp_eps_, 1.0 - clamp_eps_);
    bce += -(z * std::log(gc) + (1.0 - z) * std::log(1.0 - gc));
    // dBCE/dg with the sigmoid derivative factored back out by backward();
    // the quotient keeps the product numerically equal to (g - z).
    double denom = std::max(g * (1.0 - g), 1e-12);
    out_grad[0] = (g - z) / denom / static_cast<double>(n);
    net_.backward(tape_, out_grad, grad_);
  }
  net_.adam_step(grad_, hyper_);
  return {bce / static_cast<double>(n)};
}

}  // namespace gvfl
