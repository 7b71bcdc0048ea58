#include "gvf.hpp"

#include <cmath>
#include <stdexcept>

namespace gvfl {

double cumulant_signal(const GroundTruth& gt, CumulantKind kind) {
  switch (kind) {
    case CumulantKind::LaneCenteredness: return gt.alpha;
    case CumulantKind::RoadAngle: return gt.beta / (M_PI / 2.0);
  }
  return 0.0;
}

std::vector<double> cumulants(const GroundTruth& gt, const GvfSpec& spec) {
  std::vector<double> out(spec.n_heads());
  for (size_t h = 0; h < out.size(); ++h)
    out[h] = (1.0 - spec.gamma(h)) * cumulant_signal(gt, spec.kind(h));
  return out;
}

std::vector<double> continuations(const GvfSpec& spec, bool terminal) {
  std::vector<double> out(spec.n_heads());
  for (size_t h = 0; h < out.size(); ++h)
    out[h] = terminal ? 0.0 : spec.gamma(h);
  return out;
}

double td_target(double cumulant, double continuation, double v_next) {
  return cumulant + continuation * v_next;
}

double tau_density(const Action& a, const Action& last, double sigma_tau,
                   double speed_max) {
  if (sigma_tau <= 0.0) throw std::invalid_argument("sigma_tau must be > 0");
  double ds = (a.steer - last.steer) / (M_PI / 2.0);
  double du = a.speed_cmd / speed_max - last.speed_cmd / speed_max;
  double inv = 1.0 / (sigma_tau * std::sqrt(2.0 * M_PI));
  double gs = inv * std::exp(-0.5 * ds * ds / (sigma_tau * sigma_tau));
  double gu = inv * std::exp(-0.5 * du * du / (sigma_tau * sigma_tau));
  return gs * gu;
}

double importance_ratio(double tau_d, double mu_hat, double rho_max) {
  if (!(mu_hat > 0.0))
    throw std::invalid_argument("importance_ratio: mu_hat must be positive");
  if (tau_d < 0.0) throw std::invalid_argument("importance_ratio: tau < 0");
  return std::min(tau_d / mu_hat, rho_max);
}

std::vector<LayerSpec> mlp_layers(int in, const std::vector<int>& hidden,
                                  int out, Activation final_act) {
  std::vector<LayerSpec> layers;
  int prev = in;
  for (int h : hidden) {
    layers.push_back({prev, h, Activation::Relu});
    prev = h;
  }
  layers.push_back({prev, out, final_act});
  return layers;
}

GvfLearner::GvfLearner(GvfSpec spec, SimConfig sim,
                       const std::vector<int>& hidden, double lr, Rng& rng)
    : spec_(std::move(spec)), sim_(sim) {
  if (spec_.gammas.empty())
    throw std::invalid_argument("gvf spec needs at least one gamma");
  for (double g : spec_.gammas)
    if (g < 0.0 || g >= 1.0)
      throw std::invalid_argument("gvf gammas must lie in [0, 1)");
  hyper_.lr = lr;
  net_ = Net::init_uniform(
      mlp_layers(static_cast<int>(obs_feature_width(sim_)), hidden,
                 static_cast<int>(spec_.n_heads()), Activation::Linear),
      rng);
  grad_.assign(net_.param_count(), 0.0);
}

GvfLearner::GvfLearner(GvfSpec spec, SimConfig sim, Net net, double lr)
    : spec_(std::move(spec)), sim_(sim), net_(std::move(net)) {
  hyper_.lr = lr;
  if (net_.input_width() != static_cast<int>(obs_feature_width(sim_)))
    throw std::invalid_argument("gvf net input does not match renderer size");
  if (net_.output_width() != static_cast<int>(spec_.n_heads()))
    throw std::invalid_argument("gvf net output does not match head count");
  grad_.assign(net_.param_count(), 0.0);
}

std::vector<double> GvfLearner::predict(const Observation& obs) const {
  std::vector<double> feat;
  obs_features(obs, sim_, feat);
  return net_.forward(feat);
}

std::vector<double> GvfLearner::represent(const Observation& obs) const {
  std::vector<double> phi = predict(obs);
  phi.push_back(obs.last_action.steer / (M_PI / 2.0));
  phi.push_back(2.0 * (obs.last_action.speed_cmd / sim_.speed_max) - 1.0);
  phi.push_back(2.0 * (obs.speed / sim_.speed_max) - 1.0);
  return phi;
}

GvfUpdateStats GvfLearner::update(std::span<const Transition* const> batch,
                                  double rho_bar) {
  if (batch.empty()) throw std::invalid_argument("gvf update: empty batch");
  if (!(rho_bar >= 0.0) || !std::isfinite(rho_bar))
    throw std::invalid_argument("gvf update: bad rho_bar");
  size_t n_heads = spec_.n_heads();
  std::fill(grad_.begin(), grad_.end(), 0.0);
  out_grad_.resize(n_heads);
  double sq = 0.0, abs_pred = 0.0;
  double scale = rho_bar / static_cast<double>(batch.size());
  for (const Transition* tr : batch) {
    if (tr->cumulant.size() != n_heads || tr->continuation.size() != n_heads)
      throw std::invalid_argument("gvf update: transition head mismatch");
    obs_features(tr->next_obs, sim_, next_feat_);
    std::vector<double> v_next = net_.forward(next_feat_);
    obs_features(tr->obs, sim_, feat_);
    net_.forward(feat_, tape_);
    const std::vector<double>& v = tape_.post.back();
    for (size_t h = 0; h < n_heads; ++h) {
      double y = td_target(tr->cumulant[h], tr->continuation[h], v_next[h]);
      double delta = v[h] - y;
      out_grad_[h] = scale * delta;
      sq += delta * delta;
      abs_pred += std::abs(v[h]);
    }
    net_.backward(tape_, out_grad_, grad_);
  }
  net_.adam_step(grad_, hyper_);
  GvfUpdateStats stats;
  stats.mean_sq_td = sq / static_cast<double>(batch.size() * n_heads);
  stats.rho_bar = rho_bar;
  stats.mean_abs_pred = abs_pred / static_cast<double>(batch.size() * n_heads);
  return stats;
}

}  // namespace gvfl
