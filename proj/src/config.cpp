#include "config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gvfl {

const std::map<std::string, RunConfig::KeyInfo>& RunConfig::schema() {
  static const std::map<std::string, KeyInfo> s = {
      {"seed", {"0", "master seed; all streams derive from it"}},
      // simulator
      {"dt", {"0.1", "control period in seconds"}},
      {"max_steps", {"1200", "training episode step limit"}},
      {"heading_rate_gain", {"1.5", "heading rate per (steer * speed)"}},
      {"speed_lag", {"1.0", "first-order speed tracking rate"}},
      {"speed_max_mps", {"0.6", "hard speed command ceiling, m/s"}},
      {"render_w", {"32", "frame width in pixels"}},
      {"render_h", {"24", "frame height in pixels"}},
      {"window_width_m", {"2.0", "rendered window width, metres"}},
      {"window_ahead_m", {"3.0", "rendered look-ahead, metres"}},
      {"texture", {"0", "renderer brightness variant (0 or 1)"}},
      {"marking_width_px", {"1.0", "lane marking width in pixels"}},
      {"half_lane_width_m", {"0.38", "centerline to marking distance"}},
      {"centerline_spacing_m", {"0.025", "waypoint spacing"}},
      {"marking_segment_len_m", {"0.25", "marking segment chord length"}},
      {"damage_fraction", {"0.25", "fraction of marking segments removed"}},
      {"damage_seed", {"0", "seed for the damage mask"}},
      {"reward_scale", {"1.0", "scale on speed * (cos beta - |alpha|)"}},
      {"reward_alpha_sign",
       {"-1", "sign on |alpha| in the reward (-1 penalizes offset)"}},
      {"start_index_jitter",
       {"1", "randomize the start waypoint during training episodes"}},
      // GVF bank + learner
      {"gvf_gammas", {"0.0,0.9,0.95,0.97", "timescale bank, one pair of heads each"}},
      {"gvf_hidden", {"128,64", "GVF trunk hidden sizes"}},
      {"gvf_lr", {"1e-4", "GVF Adam learning rate"}},
      {"gvf_batch", {"128", "GVF minibatch size"}},
      {"sigma_tau", {"0.1", "target-policy stddev in normalized action units"}},
      {"rho_max", {"100", "importance ratio ceiling"}},
      {"buffer_capacity", {"100000", "GVF replay capacity"}},
      {"buffer_warmup", {"10000", "transitions before GVF updates start"}},
      {"divergence_guard",
       {"10.0", "abort when mean |prediction| exceeds this"}},
      {"stats_interval", {"100", "steps between stats rows"}},
      // behavior estimation
      {"disc_hidden", {"128,64", "discriminator hidden sizes"}},
      {"disc_lr", {"1e-4", "discriminator Adam learning rate"}},
      {"disc_batch", {"128", "discriminator minibatch size"}},
      {"disc_clamp", {"1e-3", "discriminator output clamp epsilon"}},
      // DDPG
      {"actor_hidden", {"64,32", "actor hidden sizes"}},
      {"critic_hidden", {"64,32", "critic hidden sizes"}},
      {"ddpg_actor_lr", {"1e-4", "actor Adam learning rate"}},
      {"ddpg_critic_lr", {"1e-4", "critic Adam learning rate"}},
      {"ddpg_batch", {"64", "DDPG minibatch size"}},
      {"ddpg_buffer_capacity", {"100000", "DDPG replay capacity"}},
      {"ddpg_warmup", {"1000", "transitions before DDPG updates start"}},
      {"rl_gamma", {"0.99", "RL discount"}},
      {"rl_reward_scale", {"1.0", "reward scale used by the RL losses"}},
      {"polyak_rate", {"0.001", "target network tracking rate"}},
      {"ou_theta", {"1.0", "OU mean-reversion rate"}},
      {"ou_sigma", {"0.1", "OU noise scale"}},
      {"ou_dt", {"0.01", "OU integration step"}},
      {"speed_floor_frac",
       {"0.5", "policy speed output floor as a fraction of the cap"}},
      // BCQ
      {"bcq_hidden", {"64", "BCQ hidden width (two layers per net)"}},
      {"bcq_latent_dim", {"4", "VAE latent dimension"}},
      {"bcq_kl_weight", {"0.5", "KL term weight"}},
      {"bcq_n_candidates", {"10", "sampled candidate actions per decision"}},
      {"bcq_perturbation", {"0.05", "perturbation net range"}},
      {"bcq_lr", {"1e-4", "Adam learning rate for all BCQ nets"}},
      {"bcq_batch", {"128", "BCQ minibatch size"}},
      {"bcq_speed_lo", {"0.1", "BCQ speed command floor, m/s"}},
      {"bcq_speed_hi", {"0.6", "BCQ speed command ceiling, m/s"}},
      // classical controller
      {"classical_k_alpha", {"0.5", "steering gain on lane centeredness"}},
      {"classical_k_beta", {"1.0", "steering gain on road angle"}},
      {"classical_k_speed", {"0.5", "speed backoff per unit steering"}},
      {"classical_v_max", {"0.4", "classical controller cruise speed"}},
      // explorer
      {"explorer_v_init", {"0.35", "initial target speed"}},
      {"explorer_v_lo", {"0.2", "target speed floor"}},
      {"explorer_v_hi", {"0.5", "target speed ceiling"}},
      {"explorer_arrival_m", {"0.025", "waypoint arrival radius"}},
      {"explorer_pos_noise_std", {"0.02", "offset random-walk step std"}},
      {"explorer_pos_clip_m", {"0.3", "offset clip"}},
      {"explorer_v_noise_std", {"0.02", "target speed random-walk step std"}},
      {"explorer_lookahead_m", {"0.85", "pursuit lead distance"}},
      // data collection
      {"collect_episodes", {"60", "episodes to collect"}},
      {"collect_tracks", {"6", "procedural training tracks for collection"}},
      {"collect_texture_minor_fraction",
       {"0.2", "fraction of episodes rendered with texture 1"}},
      {"collect_both_directions", {"1", "alternate traversal direction"}},
      {"mirror_augment", {"1", "apply mirrored episodes during offline feeds"}},
      // training harness
      {"method",
       {"gvf-ddpg",
        "gvf-ddpg | ddpg-image | gvf-bcq | e2e-bcq | classical (evaluate only)"}},
      {"train_steps", {"30000", "online environment steps"}},
      {"offline_updates", {"200000", "total offline updates (split per phase)"}},
      {"eval_interval", {"1000", "online steps between evaluations"}},
      {"eval_duration_s", {"300", "evaluation rollout length, seconds"}},
      {"eval_duration_train_s",
       {"60", "rollout length for evaluations run during training"}},
      {"eval_speed_cap", {"0.4", "speed cap applied at evaluation"}},
      {"eval_tracks", {"rectangle_rounded,oval,complex", "evaluation tracks"}},
      {"eval_damage", {"0", "render evaluation tracks with damage"}},
      {"eval_direction", {"ccw", "ccw | cw traversal at evaluation"}},
      {"online_n_tracks", {"8", "procedural tracks drawn for online training"}},
      {"online_train_frac",
       {"0.85", "fraction of online tracks used for training (rest held out)"}},
      {"track_seed", {"1", "seed for procedural track generation"}},
  };
  return s;
}

RunConfig::RunConfig() {
  for (const auto& [k, info] : schema()) values_[k] = info.def;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!schema().count(key))
    throw std::invalid_argument("unknown config key: " + key);
  values_[key] = value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    auto vs = val.find_first_not_of(" \t");
    val = vs == std::string::npos ? "" : val.substr(vs);
    set(key, val);
  }
}

const std::string& RunConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument("unknown config key: " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get_str(key);
  size_t pos = 0;
  double d = std::stod(v, &pos);
  if (pos != v.size())
    throw std::invalid_argument("config " + key + ": bad number '" + v + "'");
  return d;
}

int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get_str(key);
  size_t pos = 0;
  long long i = std::stoll(v, &pos);
  if (pos != v.size())
    throw std::invalid_argument("config " + key + ": bad integer '" + v + "'");
  return i;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get_str(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("config " + key + ": bad bool '" + v + "'");
}

std::vector<std::string> RunConfig::get_str_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get_str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    auto last = item.find_last_not_of(" \t");
    out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_str_list(key)) out.push_back(std::stod(s));
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_str_list(key)) out.push_back(std::stoi(s));
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace gvfl
