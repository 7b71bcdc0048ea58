#include "agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gvf.hpp"

namespace gvfl {

namespace {

void to_double(const std::vector<float>& in, std::vector<double>& out) {
  out.resize(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = in[i];
}

// Final-layer weights U[-bound, bound], biases zero (small initial outputs).
void reinit_final_layer(Net& net, double bound, Rng& rng) {
  size_t last = net.layers().size() - 1;
  const LayerSpec& s = net.layers()[last];
  size_t off = net.layer_offset(last);
  size_t nw = static_cast<size_t>(s.out) * s.in;
  for (size_t i = 0; i < nw; ++i)
    net.params()[off + i] = rng.uniform(-bound, bound);
  for (int o = 0; o < s.out; ++o) net.params()[off + nw + o] = 0.0;
}

}  // namespace

DdpgAgent::DdpgAgent(const DdpgConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.feat_dim <= 0) throw std::invalid_argument("ddpg: bad feature dim");
  actor_hyper_.lr = cfg.actor_lr;
  critic_hyper_.lr = cfg.critic_lr;
  actor_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim, cfg.actor_hidden, 2, Activation::Tanh), rng);
  reinit_final_layer(actor_, 1e-3, rng);
  critic_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim + 2, cfg.critic_hidden, 1, Activation::Linear),
      rng);
  actor_t_ = actor_;
  critic_t_ = critic_;
}

DdpgAgent::DdpgAgent(const DdpgConfig& cfg, Net actor, Net critic, Net actor_t,
                     Net critic_t)
    : cfg_(cfg),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      actor_t_(std::move(actor_t)),
      critic_t_(std::move(critic_t)) {
  actor_hyper_.lr = cfg.actor_lr;
  critic_hyper_.lr = cfg.critic_lr;
  if (actor_.input_width() != cfg.feat_dim || actor_.output_width() != 2 ||
      critic_.input_width() != cfg.feat_dim + 2 || critic_.output_width() != 1)
    throw std::invalid_argument("ddpg: checkpoint shapes do not match config");
}

std::array<double, 2> DdpgAgent::act_raw(std::span<const double> feat) const {
  std::vector<double> out = actor_.forward(feat);
  return {std::clamp(out[0], -1.0, 1.0), std::clamp(out[1], -1.0, 1.0)};
}

std::array<double, 2> DdpgAgent::act_explore(std::span<const double> feat,
                                             OuProcess& ou, Rng& rng) const {
  std::vector<double> out = actor_.forward(feat);
  auto noise = ou.sample(rng);
  return {std::clamp(out[0] + noise[0], -1.0, 1.0),
          std::clamp(out[1] + noise[1], -1.0, 1.0)};
}

Action DdpgAgent::to_env(const std::array<double, 2>& raw,
                         double speed_cap) const {
  double frac =
      cfg_.speed_floor_frac + (raw[1] + 1.0) * 0.5 * (1.0 - cfg_.speed_floor_frac);
  return {raw[0] * (M_PI / 2.0), frac * speed_cap};
}

DdpgAgent::Stats DdpgAgent::update(std::span<const RlTransition* const> batch) {
  if (batch.empty()) throw std::invalid_argument("ddpg update: empty batch");
  double inv_b = 1.0 / static_cast<double>(batch.size());
  Stats stats;

  // Critic regression toward the frozen target estimate.
  grad_.assign(critic_.param_count(), 0.0);
  std::vector<double> cat;
  std::vector<double> out_grad(1);
  for (const RlTransition* tr : batch) {
    to_double(tr->next_feat, feat_);
    std::vector<double> a2 = actor_t_.forward(feat_);
    cat = feat_;
    cat.push_back(std::clamp(a2[0], -1.0, 1.0));
    cat.push_back(std::clamp(a2[1], -1.0, 1.0));
    double q2 = critic_t_.forward(cat)[0];
    double y = cfg_.reward_scale * tr->reward +
               cfg_.gamma * (tr->terminal ? 0.0 : 1.0) * q2;
    to_double(tr->feat, feat_);
    cat = feat_;
    cat.push_back(tr->action[0]);
    cat.push_back(tr->action[1]);
    critic_.forward(cat, tape_);
    double delta = tape_.post.back()[0] - y;
    stats.critic_loss += delta * delta * inv_b;
    out_grad[0] = delta * inv_b;
    critic_.backward(tape_, out_grad, grad_);
  }
  critic_.adam_step(grad_, critic_hyper_);

  // Actor ascends the (fresh) critic.
  ga_.assign(actor_.param_count(), 0.0);
  std::vector<double> discard(critic_.param_count(), 0.0);
  std::vector<double> dinput;
  Tape tape_c;
  std::vector<double> a_grad(2);
  for (const RlTransition* tr : batch) {
    to_double(tr->feat, feat_);
    actor_.forward(feat_, tape_);
    const std::vector<double>& a = tape_.post.back();
    cat = feat_;
    cat.push_back(a[0]);
    cat.push_back(a[1]);
    critic_.forward(cat, tape_c);
    stats.actor_q += tape_c.post.back()[0] * inv_b;
    out_grad[0] = -inv_b;  // minimize -Q
    critic_.backward(tape_c, out_grad, discard, &dinput);
    a_grad[0] = dinput[feat_.size()];
    a_grad[1] = dinput[feat_.size() + 1];
    actor_.backward(tape_, a_grad, ga_);
  }
  actor_.adam_step(ga_, actor_hyper_);

  actor_t_.polyak_from(actor_, cfg_.polyak);
  critic_t_.polyak_from(critic_, cfg_.polyak);
  return stats;
}

void DdpgAgent::save(const std::filesystem::path& dir) const {
  actor_.save(dir / "actor.ckpt");
  critic_.save(dir / "critic.ckpt");
  actor_t_.save(dir / "actor_t.ckpt");
  critic_t_.save(dir / "critic_t.ckpt");
}

DdpgAgent DdpgAgent::load(const DdpgConfig& cfg,
                          const std::filesystem::path& dir) {
  return DdpgAgent(cfg, Net::load(dir / "actor.ckpt"),
                   Net::load(dir / "critic.ckpt"),
                   Net::load(dir / "actor_t.ckpt"),
                   Net::load(dir / "critic_t.ckpt"));
}

BcqAgent::BcqAgent(const BcqConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.feat_dim <= 0) throw std::invalid_argument("bcq: bad feature dim");
  if (cfg.latent_dim <= 0) throw std::invalid_argument("bcq: bad latent dim");
  hyper_.lr = cfg.lr;
  std::vector<int> hid{cfg.hidden, cfg.hidden};
  enc_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim + 2, hid, 2 * cfg.latent_dim, Activation::Linear),
      rng);
  dec_ = Net::init_uniform(mlp_layers(cfg.latent_dim, hid, 2, Activation::Linear),
                           rng);
  actor_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim + 2, hid, 2, Activation::Tanh), rng);
  reinit_final_layer(actor_, 1e-3, rng);
  critic1_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim + 2, hid, 1, Activation::Linear), rng);
  critic2_ = Net::init_uniform(
      mlp_layers(cfg.feat_dim + 2, hid, 1, Activation::Linear), rng);
  critic1_t_ = critic1_;
  critic2_t_ = critic2_;
}

double BcqAgent::speed_lo_raw() const {
  return 2.0 * cfg_.speed_lo / cfg_.speed_max - 1.0;
}
double BcqAgent::speed_hi_raw() const {
  return 2.0 * cfg_.speed_hi / cfg_.speed_max - 1.0;
}

std::array<double, 2> BcqAgent::clip_box(std::array<double, 2> a) const {
  a[0] = std::clamp(a[0], -1.0, 1.0);
  a[1] = std::clamp(a[1], speed_lo_raw(), speed_hi_raw());
  return a;
}

std::array<double, 2> BcqAgent::decode(std::span<const double> z) const {
  std::vector<double> out = dec_.forward(z);
  return clip_box({out[0], out[1]});
}

Action BcqAgent::to_env(const std::array<double, 2>& raw) const {
  return {raw[0] * (M_PI / 2.0), (raw[1] + 1.0) * 0.5 * cfg_.speed_max};
}

std::array<double, 2> BcqAgent::act_raw(std::span<const double> feat,
                                        Rng& rng) const {
  std::vector<double> z(cfg_.latent_dim);
  std::vector<double> cat(feat.begin(), feat.end());
  cat.resize(feat.size() + 2);
  std::array<double, 2> best{0.0, 0.0};
  double best_q = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg_.n_candidates; ++i) {
    for (auto& v : z) v = rng.normal();
    std::array<double, 2> a_hat = decode(z);
    cat[feat.size()] = a_hat[0];
    cat[feat.size() + 1] = a_hat[1];
    std::vector<double> xi = actor_.forward(cat);
    std::array<double, 2> a = clip_box({a_hat[0] + cfg_.perturbation * xi[0],
                                        a_hat[1] + cfg_.perturbation * xi[1]});
    cat[feat.size()] = a[0];
    cat[feat.size() + 1] = a[1];
    double q = critic1_.forward(cat)[0];
    if (q > best_q) {
      best_q = q;
      best = a;
    }
  }
  return best;
}

BcqAgent::Stats BcqAgent::update(std::span<const RlTransition* const> batch,
                                 Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("bcq update: empty batch");
  size_t B = batch.size();
  double inv_b = 1.0 / static_cast<double>(B);
  int L = cfg_.latent_dim;
  Stats stats;
  std::vector<double> feat, cat, catn, z(L), eps(L);

  // --- Generative model: reconstruction + KL toward N(0, I). ---
  std::vector<double> g_enc(enc_.param_count(), 0.0);
  std::vector<double> g_dec(dec_.param_count(), 0.0);
  Tape tape_e, tape_d;
  std::vector<double> dz, d_enc(2 * L), d_dec(2);
  for (const RlTransition* tr : batch) {
    to_double(tr->feat, feat);
    cat = feat;
    cat.push_back(tr->action[0]);
    cat.push_back(tr->action[1]);
    enc_.forward(cat, tape_e);
    const std::vector<double>& eo = tape_e.post.back();
    for (int d = 0; d < L; ++d) {
      double l = std::clamp(eo[L + d], -6.0, 6.0);
      eps[d] = rng.normal();
      z[d] = eo[d] + std::exp(l) * eps[d];
    }
    dec_.forward(z, tape_d);
    const std::vector<double>& a_hat = tape_d.post.back();
    double recon = 0.0;
    for (int d = 0; d < 2; ++d) {
      double diff = a_hat[d] - tr->action[d];
      recon += diff * diff;
      d_dec[d] = 2.0 * diff * inv_b;
    }
    double kl = 0.0;
    for (int d = 0; d < L; ++d) {
      double l = std::clamp(eo[L + d], -6.0, 6.0);
      double s2 = std::exp(2.0 * l);
      kl += 0.5 * (eo[d] * eo[d] + s2 - 1.0 - 2.0 * l);
    }
    stats.vae_loss += (recon + cfg_.kl_weight * kl) * inv_b;
    dec_.backward(tape_d, d_dec, g_dec, &dz);
    for (int d = 0; d < L; ++d) {
      double l_raw = eo[L + d];
      double l = std::clamp(l_raw, -6.0, 6.0);
      double sd = std::exp(l);
      bool inside = l_raw > -6.0 && l_raw < 6.0;
      d_enc[d] = dz[d] + cfg_.kl_weight * eo[d] * inv_b;
      d_enc[L + d] =
          inside ? dz[d] * sd * eps[d] +
                       cfg_.kl_weight * (sd * sd - 1.0) * inv_b
                 : 0.0;
    }
    enc_.backward(tape_e, d_enc, g_enc);
  }
  enc_.adam_step(g_enc, hyper_);
  dec_.adam_step(g_dec, hyper_);

  // --- Critics toward the clipped double-Q candidate target. ---
  std::vector<double> targets(B);
  for (size_t i = 0; i < B; ++i) {
    const RlTransition* tr = batch[i];
    double best = -std::numeric_limits<double>::infinity();
    if (!tr->terminal) {
      to_double(tr->next_feat, feat);
      catn = feat;
      catn.resize(feat.size() + 2);
      for (int c = 0; c < cfg_.n_candidates; ++c) {
        for (auto& v : z) v = rng.normal();
        std::array<double, 2> a_hat = decode(z);
        catn[feat.size()] = a_hat[0];
        catn[feat.size() + 1] = a_hat[1];
        std::vector<double> xi = actor_.forward(catn);
        std::array<double, 2> a =
            clip_box({a_hat[0] + cfg_.perturbation * xi[0],
                      a_hat[1] + cfg_.perturbation * xi[1]});
        catn[feat.size()] = a[0];
        catn[feat.size() + 1] = a[1];
        double q = std::min(critic1_t_.forward(catn)[0],
                            critic2_t_.forward(catn)[0]);
        best = std::max(best, q);
      }
    } else {
      best = 0.0;
    }
    targets[i] = cfg_.reward_scale * tr->reward +
                 cfg_.gamma * (tr->terminal ? 0.0 : 1.0) * best;
  }
  grad1_.assign(critic1_.param_count(), 0.0);
  grad2_.assign(critic2_.param_count(), 0.0);
  std::vector<double> out_grad(1);
  for (size_t i = 0; i < B; ++i) {
    const RlTransition* tr = batch[i];
    to_double(tr->feat, feat);
    cat = feat;
    cat.push_back(tr->action[0]);
    cat.push_back(tr->action[1]);
    for (int which = 0; which < 2; ++which) {
      Net& c = which == 0 ? critic1_ : critic2_;
      c.forward(cat, tape_);
      double delta = tape_.post.back()[0] - targets[i];
      stats.critic_loss += delta * delta * inv_b * 0.5;
      out_grad[0] = delta * inv_b;
      c.backward(tape_, out_grad, which == 0 ? grad1_ : grad2_);
    }
  }
  critic1_.adam_step(grad1_, hyper_);
  critic2_.adam_step(grad2_, hyper_);

  // --- Perturbation net ascends critic 1 on decoded actions. ---
  std::vector<double> g_act(actor_.param_count(), 0.0);
  std::vector<double> discard(critic1_.param_count(), 0.0);
  Tape tape_a, tape_c;
  std::vector<double> dinput, a_grad(2);
  for (const RlTransition* tr : batch) {
    to_double(tr->feat, feat);
    for (auto& v : z) v = rng.normal();
    std::array<double, 2> a_hat = decode(z);
    cat = feat;
    cat.push_back(a_hat[0]);
    cat.push_back(a_hat[1]);
    actor_.forward(cat, tape_a);
    const std::vector<double>& xi = tape_a.post.back();
    std::array<double, 2> pre{a_hat[0] + cfg_.perturbation * xi[0],
                              a_hat[1] + cfg_.perturbation * xi[1]};
    std::array<double, 2> a = clip_box(pre);
    cat[feat.size()] = a[0];
    cat[feat.size() + 1] = a[1];
    critic1_.forward(cat, tape_c);
    out_grad[0] = -inv_b;
    critic1_.backward(tape_c, out_grad, discard, &dinput);
    for (int d = 0; d < 2; ++d) {
      bool inside = pre[d] == a[d];
      a_grad[d] = inside ? dinput[feat.size() + d] * cfg_.perturbation : 0.0;
    }
    actor_.backward(tape_a, a_grad, g_act);
  }
  actor_.adam_step(g_act, hyper_);

  critic1_t_.polyak_from(critic1_, cfg_.polyak);
  critic2_t_.polyak_from(critic2_, cfg_.polyak);
  return stats;
}

void BcqAgent::save(const std::filesystem::path& dir) const {
  enc_.save(dir / "vae_enc.ckpt");
  dec_.save(dir / "vae_dec.ckpt");
  actor_.save(dir / "perturb.ckpt");
  critic1_.save(dir / "critic1.ckpt");
  critic2_.save(dir / "critic2.ckpt");
  critic1_t_.save(dir / "critic1_t.ckpt");
  critic2_t_.save(dir / "critic2_t.ckpt");
}

void BcqAgent::load(const std::filesystem::path& dir) {
  Net enc = Net::load(dir / "vae_enc.ckpt");
  Net dec = Net::load(dir / "vae_dec.ckpt");
  Net actor = Net::load(dir / "perturb.ckpt");
  Net c1 = Net::load(dir / "critic1.ckpt");
  Net c2 = Net::load(dir / "critic2.ckpt");
  Net c1t = Net::load(dir / "critic1_t.ckpt");
  Net c2t = Net::load(dir / "critic2_t.ckpt");
  if (!enc.same_shape(enc_) || !dec.same_shape(dec_) ||
      !actor.same_shape(actor_) || !c1.same_shape(critic1_) ||
      !c2.same_shape(critic2_))
    throw std::invalid_argument("bcq: checkpoint shapes do not match config");
  enc_ = std::move(enc);
  dec_ = std::move(dec);
  actor_ = std::move(actor);
  critic1_ = std::move(c1);
  critic2_ = std::move(c2);
  critic1_t_ = std::move(c1t);
  critic2_t_ = std::move(c2t);
}

Action classical_act(const GroundTruth& gt, double k_alpha, double k_beta,
                     double k_speed, double v_max) {
  double steer = std::clamp(-k_alpha * gt.alpha + k_beta * gt.beta,
                            -M_PI / 2.0, M_PI / 2.0);
  double cmd = v_max * (1.0 - k_speed * std::abs(steer) / (M_PI / 2.0));
  return {steer, cmd};
}

Action Explorer::act(const TrackSpec& track, const VehicleState& s, Rng& rng) {
  size_t n = track.centerline.size();
  size_t near = nearest_centerline(track, {s.x, s.y});
  size_t lead = std::max<size_t>(
      1, static_cast<size_t>(
             std::llround(cfg.lookahead_m / std::max(track.spacing, 1e-9))));
  if (!started) {
    k = (near + lead) % n;
    v_target = cfg.v_init;
    eps_x = eps_y = 0.0;
    started = true;
  } else {
    // The cursor offset and v* random-walk every step.  Walking per step
    // (rather than per arrival) matters for a car that cannot turn in place:
    // a cursor parked inside the minimum turning circle would otherwise trap
    // the vehicle in an orbit it can never leave.
    // The offset clip bounds the cursor's distance from the lane centre; a
    // per-axis box would let the corner sit 0.42 m out, past the lane edge.
    eps_x += rng.normal(0.0, cfg.pos_noise_std);
    eps_y += rng.normal(0.0, cfg.pos_noise_std);
    double off = std::hypot(eps_x, eps_y);
    if (off > cfg.pos_clip) {
      eps_x *= cfg.pos_clip / off;
      eps_y *= cfg.pos_clip / off;
    }
    // v* itself is unbounded; only the commanded speed is clipped.
    v_target += rng.normal(0.0, cfg.v_noise_std);
  }
  Vec2 target{track.centerline[k].x + eps_x, track.centerline[k].y + eps_y};
  double dist = std::hypot(target.x - s.x, target.y - s.y);
  if (dist < cfg.arrival_radius) {
    k = (k + 1) % n;
  } else {
    // Keep the target at least the pursuit lead ahead of the vehicle; with a
    // bounded turning radius, a target abeam is unreachable and the pursuit
    // would spiral around it.
    size_t floor_k = (near + lead) % n;
    if ((k + n - floor_k) % n > n / 2) k = floor_k;
  }
  target = {track.centerline[k].x + eps_x, track.centerline[k].y + eps_y};
  double bearing = std::atan2(target.y - s.y, target.x - s.x);
  double steer = std::clamp(wrap_angle(bearing - s.heading), -M_PI / 2.0,
                            M_PI / 2.0);
  return {steer, std::clamp(v_target, cfg.v_lo, cfg.v_hi)};
}

}  // namespace gvfl
