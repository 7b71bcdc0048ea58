#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gvfl {

namespace fs = std::filesystem;

namespace {

// Seed-stream tags so every consumer gets an independent deterministic RNG.
enum : uint64_t {
  kStreamCollect = 2,
  kStreamGvfInit = 3,
  kStreamGvfTrain = 4,
  kStreamAgentInit = 5,
  kStreamAgentTrain = 6,
  kStreamEval = 7,
  kStreamBcq = 9,
};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec && !fs::is_directory(p))
    throw std::runtime_error("cannot create directory: " + p.string());
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write: " + p.string());
  os << body;
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot read: " + p.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

double track_gen_params(const RunConfig& cfg, double* spacing, double* seglen) {
  *spacing = cfg.get_double("centerline_spacing_m");
  *seglen = cfg.get_double("marking_segment_len_m");
  return cfg.get_double("half_lane_width_m");
}

TrackSpec make_track(const RunConfig& cfg, TrackKind kind, uint64_t seed) {
  double spacing, seglen;
  double h = track_gen_params(cfg, &spacing, &seglen);
  return generate_track(kind, seed, h, spacing, seglen);
}

std::array<double, 2> normalize_action(const Action& a, double speed_max) {
  return {a.steer / (M_PI / 2.0), 2.0 * (a.speed_cmd / speed_max) - 1.0};
}

DdpgConfig ddpg_config_from(const RunConfig& cfg, int feat_dim) {
  DdpgConfig d;
  d.feat_dim = feat_dim;
  d.actor_hidden = cfg.get_int_list("actor_hidden");
  d.critic_hidden = cfg.get_int_list("critic_hidden");
  d.actor_lr = cfg.get_double("ddpg_actor_lr");
  d.critic_lr = cfg.get_double("ddpg_critic_lr");
  d.gamma = cfg.get_double("rl_gamma");
  d.polyak = cfg.get_double("polyak_rate");
  d.reward_scale = cfg.get_double("rl_reward_scale");
  d.speed_floor_frac = cfg.get_double("speed_floor_frac");
  d.speed_max = cfg.get_double("speed_max_mps");
  return d;
}

BcqConfig bcq_config_from(const RunConfig& cfg, int feat_dim) {
  BcqConfig b;
  b.feat_dim = feat_dim;
  b.hidden = static_cast<int>(cfg.get_int("bcq_hidden"));
  b.latent_dim = static_cast<int>(cfg.get_int("bcq_latent_dim"));
  b.lr = cfg.get_double("bcq_lr");
  b.gamma = cfg.get_double("rl_gamma");
  b.polyak = cfg.get_double("polyak_rate");
  b.kl_weight = cfg.get_double("bcq_kl_weight");
  b.n_candidates = static_cast<int>(cfg.get_int("bcq_n_candidates"));
  b.perturbation = cfg.get_double("bcq_perturbation");
  b.reward_scale = cfg.get_double("rl_reward_scale");
  b.speed_lo = cfg.get_double("bcq_speed_lo");
  b.speed_hi = cfg.get_double("bcq_speed_hi");
  b.speed_max = cfg.get_double("speed_max_mps");
  return b;
}

OuProcess ou_from(const RunConfig& cfg) {
  OuProcess ou;
  ou.theta = cfg.get_double("ou_theta");
  ou.sigma = cfg.get_double("ou_sigma");
  ou.dt = cfg.get_double("ou_dt");
  return ou;
}

ExplorerConfig explorer_from(const RunConfig& cfg) {
  ExplorerConfig e;
  e.v_init = cfg.get_double("explorer_v_init");
  e.v_lo = cfg.get_double("explorer_v_lo");
  e.v_hi = cfg.get_double("explorer_v_hi");
  e.arrival_radius = cfg.get_double("explorer_arrival_m");
  e.pos_noise_std = cfg.get_double("explorer_pos_noise_std");
  e.pos_clip = cfg.get_double("explorer_pos_clip_m");
  e.v_noise_std = cfg.get_double("explorer_v_noise_std");
  e.lookahead_m = cfg.get_double("explorer_lookahead_m");
  return e;
}

MetricSet mean_metrics(const std::vector<MetricSet>& all) {
  MetricSet mean;
  if (all.empty()) return mean;
  double n = static_cast<double>(all.size());
  for (const MetricSet& m : all) {
    mean.reward_per_second += m.reward_per_second / n;
    mean.average_speed += m.average_speed / n;
    mean.offcenteredness += m.offcenteredness / n;
    mean.absolute_road_angle += m.absolute_road_angle / n;
    mean.near_out_of_lane += m.near_out_of_lane / n;
    mean.comfort1_steer += m.comfort1_steer / n;
    mean.comfort1_speed += m.comfort1_speed / n;
    mean.comfort2_steer += m.comfort2_steer / n;
    mean.comfort2_speed += m.comfort2_speed / n;
    mean.jerkiness_steer += m.jerkiness_steer / n;
    mean.jerkiness_speed += m.jerkiness_speed / n;
    mean.total_reward += m.total_reward / n;
    mean.departures += m.departures / n;
  }
  return mean;
}

}  // namespace

SimConfig sim_config_from(const RunConfig& cfg) {
  SimConfig s;
  s.dt = cfg.get_double("dt");
  s.max_steps = static_cast<int>(cfg.get_int("max_steps"));
  s.heading_rate_gain = cfg.get_double("heading_rate_gain");
  s.speed_lag = cfg.get_double("speed_lag");
  s.speed_max = cfg.get_double("speed_max_mps");
  s.render_w = static_cast<int>(cfg.get_int("render_w"));
  s.render_h = static_cast<int>(cfg.get_int("render_h"));
  s.window_width = cfg.get_double("window_width_m");
  s.window_ahead = cfg.get_double("window_ahead_m");
  s.texture = static_cast<int>(cfg.get_int("texture"));
  s.marking_width_px = cfg.get_double("marking_width_px");
  if (!(s.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  return s;
}

GvfSpec gvf_spec_from(const RunConfig& cfg) {
  GvfSpec spec;
  spec.gammas = cfg.get_double_list("gvf_gammas");
  if (spec.gammas.empty())
    throw std::invalid_argument("gvf_gammas must not be empty");
  return spec;
}

GvfPipeline::GvfPipeline(const RunConfig& cfg, Rng& init_rng)
    : sim_(sim_config_from(cfg)),
      buffer_(static_cast<size_t>(cfg.get_int("buffer_capacity"))),
      warmup_(static_cast<size_t>(cfg.get_int("buffer_warmup"))),
      gvf_batch_(static_cast<size_t>(cfg.get_int("gvf_batch"))),
      disc_batch_(static_cast<size_t>(cfg.get_int("disc_batch"))),
      sigma_tau_(cfg.get_double("sigma_tau")),
      rho_max_(cfg.get_double("rho_max")),
      divergence_guard_(cfg.get_double("divergence_guard")) {
  gvf_ = std::make_unique<GvfLearner>(gvf_spec_from(cfg), sim_,
                                      cfg.get_int_list("gvf_hidden"),
                                      cfg.get_double("gvf_lr"), init_rng);
  disc_ = std::make_unique<BehaviorLearner>(
      sim_, cfg.get_int_list("disc_hidden"), cfg.get_double("disc_lr"),
      cfg.get_double("disc_clamp"), init_rng);
}

GvfPipeline::GvfPipeline(const RunConfig& cfg, Net gvf_net, Net disc_net)
    : sim_(sim_config_from(cfg)),
      buffer_(static_cast<size_t>(cfg.get_int("buffer_capacity"))),
      warmup_(static_cast<size_t>(cfg.get_int("buffer_warmup"))),
      gvf_batch_(static_cast<size_t>(cfg.get_int("gvf_batch"))),
      disc_batch_(static_cast<size_t>(cfg.get_int("disc_batch"))),
      sigma_tau_(cfg.get_double("sigma_tau")),
      rho_max_(cfg.get_double("rho_max")),
      divergence_guard_(cfg.get_double("divergence_guard")) {
  gvf_ = std::make_unique<GvfLearner>(gvf_spec_from(cfg), sim_,
                                      std::move(gvf_net),
                                      cfg.get_double("gvf_lr"));
  disc_ = std::make_unique<BehaviorLearner>(sim_, std::move(disc_net),
                                            cfg.get_double("disc_lr"),
                                            cfg.get_double("disc_clamp"));
}

void GvfPipeline::feed(Transition tr, Rng& rng) {
  double mu = disc_->mu_hat(tr.obs, tr.action);
  double tau =
      tau_density(tr.action, tr.obs.last_action, sigma_tau_, sim_.speed_max);
  double rho = importance_ratio(tau, mu, rho_max_);
  tr.rho = rho;
  buffer_.push(std::move(tr), rho);
  if (buffer_.size() < warmup_) return;

  double rho_bar = buffer_.mean_priority();
  std::vector<size_t> idx =
      buffer_.sample(gvf_batch_, SampleMode::Priority, rng);
  std::vector<const Transition*> batch(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) batch[i] = &buffer_[idx[i]];
  GvfUpdateStats st = gvf_->update(batch, rho_bar);
  ++gvf_updates_;
  last_msq_ = st.mean_sq_td;
  last_rho_bar_ = st.rho_bar;
  last_mean_abs_pred_ = st.mean_abs_pred;
  if (last_mean_abs_pred_ > divergence_guard_)
    throw std::domain_error(
        "prediction net diverged: mean |v| = " +
        std::to_string(last_mean_abs_pred_) + " after " +
        std::to_string(gvf_updates_) + " updates (guard " +
        std::to_string(divergence_guard_) + ")");

  idx = buffer_.sample(disc_batch_, SampleMode::Uniform, rng);
  batch.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) batch[i] = &buffer_[idx[i]];
  last_bce_ = disc_->update(batch, rng).bce;
}

// ---------------------------------------------------------------------------
// collect

void cmd_collect(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  ensure_dir(out / "tracks");
  ensure_dir(out / "episodes");
  SimConfig sim = sim_config_from(cfg);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  uint64_t track_seed = static_cast<uint64_t>(cfg.get_int("track_seed"));
  int n_tracks = static_cast<int>(cfg.get_int("collect_tracks"));
  int episodes = static_cast<int>(cfg.get_int("collect_episodes"));
  if (n_tracks < 1 || episodes < 1)
    throw std::invalid_argument("collect needs >= 1 track and episode");

  std::vector<TrackSpec> tracks;
  for (int i = 0; i < n_tracks; ++i) {
    TrackSpec t = make_track(cfg, TrackKind::Random,
                             Rng::derive(track_seed, static_cast<uint64_t>(i)));
    t.id = "track_" + std::to_string(i);
    save_track(t, out / "tracks" / (t.id + ".track"));
    tracks.push_back(std::move(t));
  }

  Rng rng(Rng::derive(seed, kStreamCollect));
  ExplorerConfig ex_cfg = explorer_from(cfg);
  double minor_frac = cfg.get_double("collect_texture_minor_fraction");
  bool both_dirs = cfg.get_bool("collect_both_directions");
  double reward_scale = cfg.get_double("reward_scale");
  double alpha_sign = cfg.get_double("reward_alpha_sign");

  std::vector<uint64_t> counts(tracks.size(), 0);
  size_t total_steps = 0;
  for (int e = 0; e < episodes; ++e) {
    size_t ti = sample_track_priority(counts, rng);
    counts[ti] += 1;
    bool reversed = both_dirs && (e % 2 == 1);
    TrackSpec track = reversed ? reverse_track(tracks[ti]) : tracks[ti];
    SimConfig ep_sim = sim;
    ep_sim.texture = rng.bernoulli(minor_frac) ? 1 : 0;
    World world(track, ep_sim, reward_scale, alpha_sign);
    size_t start = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(track.centerline.size())));
    world.reset(start, false);

    EpisodeHeader header;
    header.width = ep_sim.render_w;
    header.height = ep_sim.render_h;
    header.dt = ep_sim.dt;
    header.track_id = track.id;
    char name[32];
    std::snprintf(name, sizeof(name), "ep_%04d.epi", e);
    EpisodeWriter writer(out / "episodes" / name, header);

    Explorer explorer{ex_cfg};
    explorer.reset();
    EpisodeRecord rec;
    rec.frame = *world.observation().frame_cur;
    rec.alpha = static_cast<float>(world.truth().alpha);
    rec.beta = static_cast<float>(world.truth().beta);
    writer.append(rec);
    // The explorer drifts across (and occasionally just past) the lane
    // edges by design; logging runs for the full episode without resets.
    while (!world.time_limit_reached()) {
      Action a = explorer.act(world.track(), world.state(), rng);
      world.step(a);
      ++total_steps;
      rec.terminal = false;
      rec.steer = static_cast<float>(world.observation().last_action.steer);
      rec.speed_cmd =
          static_cast<float>(world.observation().last_action.speed_cmd);
      rec.speed = static_cast<float>(world.state().speed);
      rec.alpha = static_cast<float>(world.truth().alpha);
      rec.beta = static_cast<float>(world.truth().beta);
      rec.frame = *world.observation().frame_cur;
      writer.append(rec);
    }
  }
  std::ostringstream summary;
  summary << "episodes=" << episodes << "\n"
          << "tracks=" << tracks.size() << "\n"
          << "total_steps=" << total_steps << "\n";
  write_text(out / "collect_summary.txt", summary.str());
  write_text(out / "config.txt", cfg.dump());
}

// ---------------------------------------------------------------------------
// offline prediction training over logged episodes

namespace {

std::vector<fs::path> find_episodes(const fs::path& data_dir) {
  std::vector<fs::path> files = list_episode_files(data_dir / "episodes");
  if (files.empty()) files = list_episode_files(data_dir);
  if (files.empty())
    throw std::runtime_error("no .epi episodes under " + data_dir.string());
  return files;
}

// Streams logged transitions through the pipeline (each episode mirrored by
// a coin flip, order reshuffled per pass) until `target_updates` prediction
// updates have run.
uint64_t offline_feed(GvfPipeline& pipe, const fs::path& data_dir,
                      const RunConfig& cfg, uint64_t target_updates,
                      std::ostream* stats) {
  std::vector<fs::path> files = find_episodes(data_dir);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  bool mirror = cfg.get_bool("mirror_augment");
  double reward_scale = cfg.get_double("reward_scale");
  double alpha_sign = cfg.get_double("reward_alpha_sign");
  uint64_t stats_interval =
      static_cast<uint64_t>(cfg.get_int("stats_interval"));
  GvfSpec spec = gvf_spec_from(cfg);

  Rng rng(Rng::derive(seed, kStreamGvfTrain));
  uint64_t epochs = 0;
  while (pipe.gvf_updates() < target_updates) {
    ++epochs;
    std::vector<size_t> order(files.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      size_t j = i + static_cast<size_t>(rng.uniform_int(
                         static_cast<int64_t>(order.size() - i)));
      std::swap(order[i], order[j]);
    }
    for (size_t oi = 0;
         oi < order.size() && pipe.gvf_updates() < target_updates; ++oi) {
      EpisodeData ep = load_episode(files[order[oi]]);
      if (mirror && rng.bernoulli(0.5)) ep = mirror_episode(ep);
      for (Transition& tr :
           episode_transitions(ep, spec, reward_scale, alpha_sign)) {
        pipe.feed(std::move(tr), rng);
        if (stats && pipe.gvf_updates() > 0 &&
            pipe.gvf_updates() % stats_interval == 0) {
          (*stats) << pipe.gvf_updates() << ',' << pipe.last_msq() << ','
                   << pipe.last_bce() << ',' << pipe.last_rho_bar() << ','
                   << pipe.buffer().size() << '\n';
        }
        if (pipe.gvf_updates() >= target_updates) break;
      }
    }
  }
  return epochs;
}

}  // namespace

void cmd_train_gvf(const RunConfig& cfg, const fs::path& data_dir,
                   const fs::path& out) {
  ensure_dir(out);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  Rng init_rng(Rng::derive(seed, kStreamGvfInit));
  GvfPipeline pipe(cfg, init_rng);
  uint64_t target = static_cast<uint64_t>(cfg.get_int("offline_updates"));

  std::ofstream stats(out / "gvf_stats.csv");
  stats.precision(17);
  stats << "update,msq_td,bce,rho_bar,buffer\n";
  uint64_t epochs = offline_feed(pipe, data_dir, cfg, target, &stats);

  pipe.gvf().net().save(out / "gvf.ckpt");
  pipe.behavior().net().save(out / "behavior.ckpt");
  std::ostringstream manifest;
  manifest << "kind=gvf\n"
           << "gvf=gvf.ckpt\nbehavior=behavior.ckpt\n"
           << "updates=" << pipe.gvf_updates() << "\n"
           << "epochs=" << epochs << "\n";
  write_text(out / "manifest.txt", manifest.str());
  write_text(out / "config.txt", cfg.dump());
}

// ---------------------------------------------------------------------------
// evaluation plumbing (train-agent also uses it for held-out probes)

TrackSpec build_eval_track(const RunConfig& cfg, const std::string& name) {
  double spacing, seglen;
  double h = track_gen_params(cfg, &spacing, &seglen);
  TrackSpec t;
  if (name.rfind("random:", 0) == 0) {
    t = generate_track(TrackKind::Random, std::stoull(name.substr(7)), h,
                       spacing, seglen);
  } else if (name == "rectangle_rounded" || name == "oval" ||
             name == "complex") {
    t = generate_track(track_kind_from_name(name), 0, h, spacing, seglen);
  } else {
    t = load_track(name);
  }
  if (cfg.get_str("eval_direction") == "cw") {
    t = reverse_track(t);
  } else if (cfg.get_str("eval_direction") != "ccw") {
    throw std::invalid_argument("eval_direction must be ccw or cw");
  }
  if (cfg.get_bool("eval_damage"))
    apply_damage(t, cfg.get_double("damage_fraction"),
                 static_cast<uint64_t>(cfg.get_int("damage_seed")));
  return t;
}

std::vector<TrackSpec> online_track_split(const RunConfig& cfg,
                                          std::vector<TrackSpec>* held_out) {
  int n = static_cast<int>(cfg.get_int("online_n_tracks"));
  double frac = cfg.get_double("online_train_frac");
  if (n < 2) throw std::invalid_argument("online_n_tracks must be >= 2");
  uint64_t track_seed = static_cast<uint64_t>(cfg.get_int("track_seed"));
  std::vector<TrackSpec> all;
  for (int i = 0; i < n; ++i) {
    TrackSpec t =
        make_track(cfg, TrackKind::Random,
                   Rng::derive(track_seed, 100 + static_cast<uint64_t>(i)));
    t.id = "online_" + std::to_string(i);
    all.push_back(std::move(t));
  }
  size_t k = static_cast<size_t>(std::floor(frac * n));
  k = std::clamp<size_t>(k, 1, all.size() - 1);
  std::vector<TrackSpec> train(all.begin(), all.begin() + k);
  if (held_out) held_out->assign(all.begin() + k, all.end());
  return train;
}

Action ModelBundle::act(const World& world, double speed_cap, Rng& rng) const {
  Action a;
  if (kind == "classical") {
    a = classical_act(
        world.truth(), config.get_double("classical_k_alpha"),
        config.get_double("classical_k_beta"),
        config.get_double("classical_k_speed"),
        std::min(config.get_double("classical_v_max"), speed_cap));
  } else {
    std::vector<double> feat;
    if (gvf)
      feat = gvf->represent(world.observation());
    else
      obs_features(world.observation(), world.config(), feat);
    if (kind == "gvf-ddpg" || kind == "ddpg-image")
      a = ddpg->to_env(ddpg->act_raw(feat), speed_cap);
    else if (kind == "gvf-bcq" || kind == "e2e-bcq")
      a = bcq->to_env(bcq->act_raw(feat, rng));
    else
      throw std::runtime_error("unknown agent kind: " + kind);
  }
  a.speed_cmd = std::min(a.speed_cmd, speed_cap);
  return a;
}

std::vector<TraceRow> run_rollout(World& world, const ModelBundle& agent,
                                  double duration_s, double speed_cap, Rng& rng,
                                  int* departures) {
  int steps = static_cast<int>(std::llround(duration_s / world.config().dt));
  if (departures) *departures = 0;
  std::vector<TraceRow> trace;
  trace.reserve(static_cast<size_t>(std::max(steps, 0)));
  for (int t = 0; t < steps; ++t) {
    Action a = agent.act(world, speed_cap, rng);
    StepResult sr = world.step(a);
    const GroundTruth& gt = world.truth();
    trace.push_back({sr.reward, world.state().speed, gt.alpha, gt.beta,
                     world.observation().last_action.steer,
                     world.observation().last_action.speed_cmd});
    if (sr.departed) {
      if (departures) ++*departures;
      world.reset(gt.nearest_index, world.use_damage());
    }
  }
  return trace;
}

ModelBundle load_model(const fs::path& dir) {
  ModelBundle b;
  auto manifest = read_kv(dir / "manifest.txt");
  if (!manifest.count("kind"))
    throw std::runtime_error("manifest missing kind: " + dir.string());
  b.kind = manifest["kind"];
  b.config.load_file(dir / "config.txt");
  SimConfig sim = sim_config_from(b.config);
  if (manifest.count("gvf")) {
    Net gvf_net = Net::load(dir / manifest.at("gvf"));
    b.gvf = std::make_unique<GvfLearner>(gvf_spec_from(b.config), sim,
                                         std::move(gvf_net),
                                         b.config.get_double("gvf_lr"));
  }
  int feat_dim = b.gvf ? static_cast<int>(b.gvf->phi_width())
                       : static_cast<int>(obs_feature_width(sim));
  if (b.kind == "gvf-ddpg" || b.kind == "ddpg-image") {
    b.ddpg = std::make_unique<DdpgAgent>(
        DdpgAgent::load(ddpg_config_from(b.config, feat_dim), dir / "agent"));
  } else if (b.kind == "gvf-bcq" || b.kind == "e2e-bcq") {
    Rng scratch(0);
    b.bcq = std::make_unique<BcqAgent>(bcq_config_from(b.config, feat_dim),
                                       scratch);
    b.bcq->load(dir / "agent");
  } else if (b.kind != "classical" && b.kind != "gvf") {
    throw std::runtime_error("unknown model kind: " + b.kind);
  }
  return b;
}

// ---------------------------------------------------------------------------
// train-agent

namespace {

// Evaluates a frozen copy of the training policy on held-out tracks; returns
// mean total reward per track.
double heldout_probe(const RunConfig& cfg, const std::string& kind,
                     const GvfLearner* gvf, const DdpgAgent* ddpg,
                     const std::vector<TrackSpec>& tracks, double duration_s,
                     uint64_t probe_seed, std::vector<EvalOutcome>* outcomes) {
  ModelBundle probe;
  probe.config = cfg;
  probe.kind = kind;
  if (gvf)
    probe.gvf =
        std::make_unique<GvfLearner>(gvf->spec(), sim_config_from(cfg),
                                     gvf->net(), cfg.get_double("gvf_lr"));
  if (ddpg) probe.ddpg = std::make_unique<DdpgAgent>(*ddpg);
  SimConfig sim = sim_config_from(cfg);
  double cap = cfg.get_double("eval_speed_cap");
  double reward_scale = cfg.get_double("reward_scale");
  double alpha_sign = cfg.get_double("reward_alpha_sign");
  double total = 0.0;
  Rng rng(Rng::derive(probe_seed, kStreamEval));
  for (const TrackSpec& t : tracks) {
    World world(t, sim, reward_scale, alpha_sign);
    world.reset(0, false);
    int departures = 0;
    std::vector<TraceRow> trace =
        run_rollout(world, probe, duration_s, cap, rng, &departures);
    MetricSet m = compute_metrics(trace, sim.dt);
    m.departures = departures;
    total += m.total_reward;
    if (outcomes) outcomes->push_back({t.id, m});
  }
  return total / static_cast<double>(tracks.size());
}

void write_heldout(const fs::path& out,
                   const std::vector<EvalOutcome>& outcomes) {
  std::vector<MetricSet> all;
  for (const EvalOutcome& o : outcomes) {
    write_metrics_csv(out / ("heldout_" + o.track + ".csv"), o.metrics);
    all.push_back(o.metrics);
  }
  write_metrics_csv(out / "heldout_summary.csv", mean_metrics(all));
}

void train_online(const RunConfig& cfg, const fs::path& out, bool use_phi) {
  ensure_dir(out);
  ensure_dir(out / "agent");
  SimConfig sim = sim_config_from(cfg);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  double reward_scale = cfg.get_double("reward_scale");
  double alpha_sign = cfg.get_double("reward_alpha_sign");
  double speed_cap = cfg.get_double("eval_speed_cap");
  int train_steps = static_cast<int>(cfg.get_int("train_steps"));
  int eval_interval = static_cast<int>(cfg.get_int("eval_interval"));
  double eval_dur = cfg.get_double("eval_duration_train_s");
  int stats_interval = static_cast<int>(cfg.get_int("stats_interval"));
  bool start_jitter = cfg.get_bool("start_index_jitter");
  GvfSpec spec = gvf_spec_from(cfg);
  const std::string kind = use_phi ? "gvf-ddpg" : "ddpg-image";

  std::vector<TrackSpec> held_out;
  std::vector<TrackSpec> train_tracks = online_track_split(cfg, &held_out);

  Rng init_rng(Rng::derive(seed, kStreamAgentInit));
  std::unique_ptr<GvfPipeline> pipe;
  if (use_phi) pipe = std::make_unique<GvfPipeline>(cfg, init_rng);
  int feat_dim = use_phi ? static_cast<int>(spec.n_heads() + 3)
                         : static_cast<int>(obs_feature_width(sim));
  DdpgAgent agent(ddpg_config_from(cfg, feat_dim), init_rng);
  OuProcess ou = ou_from(cfg);
  SumTreeBuffer<RlTransition> rl_buffer(
      static_cast<size_t>(cfg.get_int("ddpg_buffer_capacity")));
  size_t rl_warmup = static_cast<size_t>(cfg.get_int("ddpg_warmup"));
  size_t rl_batch = static_cast<size_t>(cfg.get_int("ddpg_batch"));

  Rng rng(Rng::derive(seed, kStreamAgentTrain));
  std::vector<uint64_t> counts(train_tracks.size(), 0);

  std::ofstream stats(out / "train_stats.csv");
  stats.precision(17);
  stats << "step,episode,ep_reward,msq_td,bce,rho_bar,critic_loss,actor_q,"
           "heldout_score\n";

  auto features_of = [&](const Observation& obs) {
    std::vector<double> f;
    if (use_phi)
      f = pipe->gvf().represent(obs);
    else
      obs_features(obs, sim, f);
    return f;
  };

  std::unique_ptr<World> world;
  int episode = 0;
  double ep_reward = 0.0, last_ep_reward = 0.0, last_heldout = 0.0;
  DdpgAgent::Stats rl_stats;
  auto begin_episode = [&]() {
    size_t ti = sample_track_priority(counts, rng);
    counts[ti] += 1;
    world = std::make_unique<World>(train_tracks[ti], sim, reward_scale,
                                    alpha_sign);
    size_t start =
        start_jitter
            ? static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(
                  train_tracks[ti].centerline.size())))
            : 0;
    world->reset(start, false);
    ou.reset();
    ep_reward = 0.0;
    ++episode;
  };
  begin_episode();
  std::vector<double> feat = features_of(world->observation());

  std::vector<const RlTransition*> batch(rl_batch);
  for (int step = 1; step <= train_steps; ++step) {
    Observation prev_obs = world->observation();
    std::array<double, 2> raw = agent.act_explore(feat, ou, rng);
    Action a = agent.to_env(raw, speed_cap);
    StepResult sr = world->step(a);
    ep_reward += sr.reward;
    bool terminal = sr.departed || world->time_limit_reached();

    if (pipe) {
      Transition tr;
      tr.obs = std::move(prev_obs);
      tr.action = world->observation().last_action;  // post-clip action
      tr.next_obs = world->observation();
      tr.cumulant = cumulants(world->truth(), spec);
      tr.continuation = continuations(spec, terminal);
      tr.reward = sr.reward;
      tr.terminal = terminal;
      pipe->feed(std::move(tr), rng);
    }

    std::vector<double> next_feat = features_of(world->observation());
    RlTransition rl;
    rl.feat.assign(feat.begin(), feat.end());
    rl.action = raw;
    rl.reward = sr.reward;
    rl.next_feat.assign(next_feat.begin(), next_feat.end());
    rl.terminal = sr.departed;
    rl_buffer.push(std::move(rl), 1.0);

    if (rl_buffer.size() >= rl_warmup) {
      std::vector<size_t> idx =
          rl_buffer.sample(rl_batch, SampleMode::Uniform, rng);
      for (size_t i = 0; i < idx.size(); ++i) batch[i] = &rl_buffer[idx[i]];
      rl_stats = agent.update(batch);
    }

    if (terminal) {
      last_ep_reward = ep_reward;
      begin_episode();
      feat = features_of(world->observation());
    } else {
      feat = std::move(next_feat);
    }

    if (eval_interval > 0 && step % eval_interval == 0) {
      last_heldout = heldout_probe(cfg, kind, pipe ? &pipe->gvf() : nullptr,
                                   &agent, held_out, eval_dur,
                                   seed + static_cast<uint64_t>(step), nullptr);
    }
    if (step % stats_interval == 0) {
      stats << step << ',' << episode << ',' << last_ep_reward << ','
            << (pipe ? pipe->last_msq() : 0.0) << ','
            << (pipe ? pipe->last_bce() : 0.0) << ','
            << (pipe ? pipe->last_rho_bar() : 0.0) << ','
            << rl_stats.critic_loss << ',' << rl_stats.actor_q << ','
            << last_heldout << '\n';
    }
  }

  std::vector<EvalOutcome> outcomes;
  heldout_probe(cfg, kind, pipe ? &pipe->gvf() : nullptr, &agent, held_out,
                cfg.get_double("eval_duration_s"), seed, &outcomes);
  write_heldout(out, outcomes);

  agent.save(out / "agent");
  std::ostringstream manifest;
  manifest << "kind=" << kind << "\n";
  if (pipe) {
    pipe->gvf().net().save(out / "gvf.ckpt");
    pipe->behavior().net().save(out / "behavior.ckpt");
    manifest << "gvf=gvf.ckpt\nbehavior=behavior.ckpt\n";
  }
  manifest << "agent_dir=agent\n";
  write_text(out / "manifest.txt", manifest.str());
  write_text(out / "config.txt", cfg.dump());
}

void fill_rl(const Transition& tr, const GvfLearner* gvf, const SimConfig& sim,
             RlTransition& out) {
  std::vector<double> f;
  if (gvf)
    f = gvf->represent(tr.obs);
  else
    obs_features(tr.obs, sim, f);
  out.feat.assign(f.begin(), f.end());
  if (gvf)
    f = gvf->represent(tr.next_obs);
  else
    obs_features(tr.next_obs, sim, f);
  out.next_feat.assign(f.begin(), f.end());
  out.action = normalize_action(tr.action, sim.speed_max);
  out.reward = tr.reward;
  out.terminal = tr.terminal;
}

void train_offline(const RunConfig& cfg, const fs::path& data_dir,
                   const fs::path& out, bool use_phi) {
  ensure_dir(out);
  ensure_dir(out / "agent");
  SimConfig sim = sim_config_from(cfg);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));
  uint64_t total_updates =
      static_cast<uint64_t>(cfg.get_int("offline_updates"));
  uint64_t stats_interval =
      static_cast<uint64_t>(cfg.get_int("stats_interval"));
  GvfSpec spec = gvf_spec_from(cfg);
  const std::string kind = use_phi ? "gvf-bcq" : "e2e-bcq";

  // Phase 1 (gvf-bcq only): learn the predictive representation, then freeze.
  uint64_t gvf_updates = use_phi ? total_updates / 2 : 0;
  uint64_t bcq_updates = total_updates - gvf_updates;
  std::unique_ptr<GvfPipeline> pipe;
  if (use_phi) {
    Rng gvf_init(Rng::derive(seed, kStreamGvfInit));
    pipe = std::make_unique<GvfPipeline>(cfg, gvf_init);
    std::ofstream gstats(out / "gvf_stats.csv");
    gstats.precision(17);
    gstats << "update,msq_td,bce,rho_bar,buffer\n";
    offline_feed(*pipe, data_dir, cfg, gvf_updates, &gstats);
    pipe->gvf().net().save(out / "gvf.ckpt");
    pipe->behavior().net().save(out / "behavior.ckpt");
  }
  const GvfLearner* gvf = pipe ? &pipe->gvf() : nullptr;

  // Phase 2: batch RL on the logged transitions (plus mirrored copies).
  std::vector<fs::path> files = find_episodes(data_dir);
  double reward_scale = cfg.get_double("reward_scale");
  double alpha_sign = cfg.get_double("reward_alpha_sign");
  bool mirror = cfg.get_bool("mirror_augment");
  std::vector<Transition> all;
  for (const fs::path& f : files) {
    EpisodeData ep = load_episode(f);
    std::vector<Transition> trs =
        episode_transitions(ep, spec, reward_scale, alpha_sign);
    all.insert(all.end(), std::make_move_iterator(trs.begin()),
               std::make_move_iterator(trs.end()));
    if (mirror) {
      EpisodeData mep = mirror_episode(ep);
      trs = episode_transitions(mep, spec, reward_scale, alpha_sign);
      all.insert(all.end(), std::make_move_iterator(trs.begin()),
                 std::make_move_iterator(trs.end()));
    }
  }
  if (all.empty())
    throw std::runtime_error("no transitions in " + data_dir.string());

  int feat_dim = gvf ? static_cast<int>(gvf->phi_width())
                     : static_cast<int>(obs_feature_width(sim));
  Rng init_rng(Rng::derive(seed, kStreamAgentInit));
  BcqAgent agent(bcq_config_from(cfg, feat_dim), init_rng);

  // With the small learned representation the features fit in memory, so
  // materialize them once; image features are built per batch instead.
  std::vector<RlTransition> dataset;
  if (gvf) {
    dataset.resize(all.size());
    for (size_t i = 0; i < all.size(); ++i)
      fill_rl(all[i], gvf, sim, dataset[i]);
    all.clear();
    all.shrink_to_fit();
  }
  size_t n_data = gvf ? dataset.size() : all.size();

  Rng rng(Rng::derive(seed, kStreamBcq));
  size_t batch_size = static_cast<size_t>(cfg.get_int("bcq_batch"));
  std::vector<RlTransition> scratch(gvf ? 0 : batch_size);
  std::vector<const RlTransition*> batch(batch_size);
  std::ofstream stats(out / "train_stats.csv");
  stats.precision(17);
  stats << "update,vae_loss,critic_loss\n";
  for (uint64_t u = 1; u <= bcq_updates; ++u) {
    for (size_t b = 0; b < batch_size; ++b) {
      size_t i =
          static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n_data)));
      if (gvf) {
        batch[b] = &dataset[i];
      } else {
        fill_rl(all[i], nullptr, sim, scratch[b]);
        batch[b] = &scratch[b];
      }
    }
    BcqAgent::Stats st = agent.update(batch, rng);
    if (u % stats_interval == 0)
      stats << u << ',' << st.vae_loss << ',' << st.critic_loss << '\n';
  }

  agent.save(out / "agent");
  std::ostringstream manifest;
  manifest << "kind=" << kind << "\n";
  if (use_phi) manifest << "gvf=gvf.ckpt\nbehavior=behavior.ckpt\n";
  manifest << "agent_dir=agent\n";
  write_text(out / "manifest.txt", manifest.str());
  write_text(out / "config.txt", cfg.dump());
}

}  // namespace

void cmd_train_agent(const RunConfig& cfg,
                     const std::optional<fs::path>& data_dir,
                     const fs::path& out) {
  const std::string method = cfg.get_str("method");
  if (method == "gvf-ddpg") {
    train_online(cfg, out, true);
  } else if (method == "ddpg-image") {
    train_online(cfg, out, false);
  } else if (method == "gvf-bcq" || method == "e2e-bcq") {
    if (!data_dir)
      throw std::invalid_argument(method +
                                  " needs a collected data directory");
    train_offline(cfg, *data_dir, out, method == "gvf-bcq");
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
}

// ---------------------------------------------------------------------------
// evaluate / report / inspect

void cmd_evaluate(const RunConfig& cfg,
                  const std::optional<fs::path>& model_dir,
                  const fs::path& out) {
  ensure_dir(out);
  ModelBundle bundle;
  if (model_dir) {
    bundle = load_model(*model_dir);
    if (bundle.kind == "gvf")
      throw std::invalid_argument(
          "model dir holds a prediction bank only; train an agent first");
    // Evaluation-time knobs come from the caller; everything defining the
    // model (rendering, bank, net sizes, dynamics) stays as trained.
    for (const char* key :
         {"eval_tracks", "eval_duration_s", "eval_speed_cap", "eval_damage",
          "eval_direction", "damage_fraction", "damage_seed", "seed",
          "texture"}) {
      bundle.config.set(key, cfg.get_str(key));
    }
  } else {
    if (cfg.get_str("method") != "classical")
      throw std::invalid_argument(
          "evaluate without a model dir supports only method=classical");
    bundle.config = cfg;
    bundle.kind = "classical";
  }
  const RunConfig& ecfg = bundle.config;
  SimConfig sim = sim_config_from(ecfg);
  double cap = ecfg.get_double("eval_speed_cap");
  double dur = ecfg.get_double("eval_duration_s");
  double reward_scale = ecfg.get_double("reward_scale");
  double alpha_sign = ecfg.get_double("reward_alpha_sign");
  bool damage = ecfg.get_bool("eval_damage");
  Rng rng(
      Rng::derive(static_cast<uint64_t>(ecfg.get_int("seed")), kStreamEval));

  std::ostringstream summary;
  summary.precision(6);
  summary << "kind=" << bundle.kind << "\n";
  std::vector<MetricSet> all;
  for (const std::string& name : ecfg.get_str_list("eval_tracks")) {
    TrackSpec track = build_eval_track(ecfg, name);
    World world(track, sim, reward_scale, alpha_sign);
    world.reset(0, damage);
    int departures = 0;
    std::vector<TraceRow> trace =
        run_rollout(world, bundle, dur, cap, rng, &departures);
    MetricSet m = compute_metrics(trace, sim.dt);
    m.departures = departures;
    all.push_back(m);
    std::string safe = name;
    for (char& c : safe)
      if (c == ':' || c == '/' || c == '\\' || c == '.') c = '_';
    write_trace_csv(out / ("trace_" + safe + ".csv"), trace);
    write_metrics_csv(out / ("metrics_" + safe + ".csv"), m);
    summary << name << ": reward/s=" << m.reward_per_second
            << " speed=" << m.average_speed
            << " |alpha|=" << m.offcenteredness
            << " nol=" << m.near_out_of_lane << " departures=" << departures
            << "\n";
  }
  write_metrics_csv(out / "metrics_summary.csv", mean_metrics(all));
  write_text(out / "evaluate.txt", summary.str());
}

void cmd_report(const std::vector<fs::path>& run_dirs,
                const fs::path& out_file) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run dirs");
  std::vector<std::string> names;
  std::vector<std::map<std::string, double>> rows;
  for (const fs::path& dir : run_dirs) {
    fs::path summary = dir / "metrics_summary.csv";
    if (!fs::exists(summary)) summary = dir / "heldout_summary.csv";
    if (!fs::exists(summary))
      throw std::runtime_error("no metrics summary under " + dir.string());
    names.push_back(dir.filename().string());
    rows.push_back(read_metrics_csv(summary));
  }
  std::vector<std::string> keys;
  for (const auto& [k, v] : rows.front()) keys.push_back(k);
  std::ostringstream os;
  os.precision(6);
  os << "run";
  for (const auto& k : keys) os << '\t' << k;
  os << '\n';
  for (size_t i = 0; i < rows.size(); ++i) {
    os << names[i];
    for (const auto& k : keys) {
      auto it = rows[i].find(k);
      os << '\t' << (it == rows[i].end() ? 0.0 : it->second);
    }
    os << '\n';
  }
  auto column = [&](const std::string& k) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.count(k) ? r.at(k) : 0.0);
    return v;
  };
  os << "mean";
  for (const auto& k : keys) {
    double s = 0.0;
    for (double v : column(k)) s += v;
    os << '\t' << s / static_cast<double>(rows.size());
  }
  os << "\nstd";
  for (const auto& k : keys) {
    std::vector<double> v = column(k);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    os << '\t' << std::sqrt(var / static_cast<double>(v.size()));
  }
  os << '\n';
  write_text(out_file, os.str());
}

std::string cmd_inspect(const fs::path& path) { return describe_file(path); }

}  // namespace gvfl
