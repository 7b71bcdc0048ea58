#include "simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gvfl {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

TrackKind track_kind_from_name(const std::string& name) {
  if (name == "rectangle_rounded") return TrackKind::RectangleRounded;
  if (name == "oval") return TrackKind::Oval;
  if (name == "complex") return TrackKind::Complex;
  if (name == "random") return TrackKind::Random;
  throw std::invalid_argument("unknown track kind: " + name);
}

const char* track_kind_name(TrackKind k) {
  switch (k) {
    case TrackKind::RectangleRounded: return "rectangle_rounded";
    case TrackKind::Oval: return "oval";
    case TrackKind::Complex: return "complex";
    case TrackKind::Random: return "random";
  }
  return "?";
}

namespace {

std::vector<Vec2> resample_closed(const std::vector<Vec2>& pts,
                                  double target_spacing) {
  if (pts.size() < 3) throw std::invalid_argument("track needs >= 3 points");
  size_t m = pts.size();
  std::vector<double> cum(m + 1, 0.0);
  for (size_t i = 0; i < m; ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % m];
    cum[i + 1] = cum[i] + std::hypot(b.x - a.x, b.y - a.y);
  }
  double total = cum[m];
  if (total <= 0.0) throw std::invalid_argument("degenerate track");
  size_t n = std::max<size_t>(16, static_cast<size_t>(std::llround(total / target_spacing)));
  double step = total / static_cast<double>(n);
  std::vector<Vec2> out(n);
  size_t seg = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = step * static_cast<double>(i);
    while (seg + 1 < m + 1 && cum[seg + 1] < d) ++seg;
    const Vec2& a = pts[seg % m];
    const Vec2& b = pts[(seg + 1) % m];
    double len = cum[seg + 1] - cum[seg];
    double t = len > 0.0 ? (d - cum[seg]) / len : 0.0;
    out[i] = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }
  return out;
}

double min_turn_radius(const std::vector<Vec2>& pts) {
  size_t n = pts.size();
  double worst = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p0 = pts[i];
    const Vec2& p1 = pts[(i + 1) % n];
    const Vec2& p2 = pts[(i + 2) % n];
    double a0 = std::atan2(p1.y - p0.y, p1.x - p0.x);
    double a1 = std::atan2(p2.y - p1.y, p2.x - p1.x);
    double turn = std::abs(wrap_angle(a1 - a0));
    if (turn < 1e-9) continue;
    double chord = std::hypot(p1.x - p0.x, p1.y - p0.y);
    worst = std::min(worst, chord / turn);
  }
  return worst;
}

std::vector<Vec2> polar_loop(double r0, const std::vector<double>& amp,
                             const std::vector<double>& freq,
                             const std::vector<double>& phase) {
  const int kDense = 4096;
  std::vector<Vec2> pts(kDense);
  for (int i = 0; i < kDense; ++i) {
    double th = 2.0 * M_PI * i / kDense;
    double r = r0;
    for (size_t k = 0; k < amp.size(); ++k)
      r += amp[k] * std::sin(freq[k] * th + phase[k]);
    pts[i] = {r * std::cos(th), r * std::sin(th)};
  }
  return pts;
}

std::vector<Vec2> rounded_rect_loop() {
  // Corner radius sits above kMinRadius: the discrete chord/turn estimate of
  // an arc is biased slightly below the true radius.
  const double lx = 3.0, ly = 2.0, rc = 0.7;
  const double ds = 0.005;
  std::vector<Vec2> pts;
  auto straight = [&](Vec2 a, Vec2 b) {
    double len = std::hypot(b.x - a.x, b.y - a.y);
    int n = std::max(1, static_cast<int>(len / ds));
    for (int i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / n;
      pts.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  };
  auto arc = [&](Vec2 c, double a0, double a1) {
    double len = rc * (a1 - a0);
    int n = std::max(2, static_cast<int>(len / ds));
    for (int i = 0; i < n; ++i) {
      double a = a0 + (a1 - a0) * i / n;
      pts.push_back({c.x + rc * std::cos(a), c.y + rc * std::sin(a)});
    }
  };
  straight({rc, 0.0}, {lx - rc, 0.0});
  arc({lx - rc, rc}, -M_PI / 2.0, 0.0);
  straight({lx, rc}, {lx, ly - rc});
  arc({lx - rc, ly - rc}, 0.0, M_PI / 2.0);
  straight({lx - rc, ly}, {rc, ly});
  arc({rc, ly - rc}, M_PI / 2.0, M_PI);
  straight({0.0, ly - rc}, {0.0, rc});
  arc({rc, rc}, M_PI, 1.5 * M_PI);
  for (auto& p : pts) {
    p.x -= lx / 2.0;
    p.y -= ly / 2.0;
  }
  return pts;
}

}  // namespace

void rebuild_markings(TrackSpec& track) {
  size_t n = track.centerline.size();
  if (n < 3) throw std::invalid_argument("track needs >= 3 waypoints");
  std::vector<Vec2> left(n), right(n);
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = track.centerline[(i + n - 1) % n];
    const Vec2& b = track.centerline[(i + 1) % n];
    double tx = b.x - a.x, ty = b.y - a.y;
    double len = std::hypot(tx, ty);
    if (len <= 0.0) throw std::invalid_argument("duplicate waypoints in track");
    tx /= len;
    ty /= len;
    double h = track.half_lane_width;
    left[i] = {track.centerline[i].x - h * ty, track.centerline[i].y + h * tx};
    right[i] = {track.centerline[i].x + h * ty, track.centerline[i].y - h * tx};
  }
  size_t stride = std::max<size_t>(
      1, static_cast<size_t>(std::llround(track.marking_segment_len / track.spacing)));
  track.markings.clear();
  for (const auto* side : {&left, &right}) {
    for (size_t j = 0; j < n; j += stride) {
      size_t k = j + stride < n ? j + stride : 0;
      track.markings.push_back({(*side)[j], (*side)[k]});
    }
  }
  track.damage_mask.assign(track.markings.size(), 0);
}

TrackSpec generate_track(TrackKind kind, uint64_t seed, double half_lane_width,
                         double spacing, double marking_segment_len) {
  TrackSpec t;
  t.half_lane_width = half_lane_width;
  t.spacing = spacing;
  t.marking_segment_len = marking_segment_len;
  const double kMinRadius = 0.6;  // comfortably above the vehicle's tightest turn
  switch (kind) {
    case TrackKind::RectangleRounded:
      t.id = "rectangle_rounded";
      t.centerline = resample_closed(rounded_rect_loop(), spacing);
      break;
    case TrackKind::Oval: {
      t.id = "oval";
      const int kDense = 4096;
      std::vector<Vec2> pts(kDense);
      for (int i = 0; i < kDense; ++i) {
        double th = 2.0 * M_PI * i / kDense;
        pts[i] = {1.6 * std::cos(th), 1.1 * std::sin(th)};
      }
      t.centerline = resample_closed(pts, spacing);
      break;
    }
    case TrackKind::Complex:
      t.id = "complex";
      t.centerline = resample_closed(
          polar_loop(1.4, {0.18, 0.10}, {2.0, 3.0}, {0.4, 1.7}), spacing);
      break;
    case TrackKind::Random: {
      t.id = "random-" + std::to_string(seed);
      Rng rng(Rng::derive(seed, 0x7261636bULL));
      for (int attempt = 0; attempt < 64; ++attempt) {
        double r0 = rng.uniform(1.25, 1.55);
        std::vector<double> amp = {rng.uniform(0.0, 0.18), rng.uniform(0.0, 0.10),
                                   rng.uniform(0.0, 0.06)};
        std::vector<double> phase = {rng.uniform(0.0, 2.0 * M_PI),
                                     rng.uniform(0.0, 2.0 * M_PI),
                                     rng.uniform(0.0, 2.0 * M_PI)};
        auto pts = resample_closed(polar_loop(r0, amp, {2.0, 3.0, 4.0}, phase),
                                   spacing);
        if (min_turn_radius(pts) >= kMinRadius) {
          t.centerline = std::move(pts);
          break;
        }
      }
      if (t.centerline.empty())
        throw std::runtime_error("failed to draw a drivable random track");
      break;
    }
  }
  if (min_turn_radius(t.centerline) < kMinRadius)
    throw std::runtime_error("track " + t.id + " is too sharp to drive");
  rebuild_markings(t);
  return t;
}

void apply_damage(TrackSpec& track, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("damage fraction must be in [0, 1]");
  Rng rng(Rng::derive(seed, 0xDA4AULL));
  for (auto& d : track.damage_mask) d = rng.bernoulli(fraction) ? 1 : 0;
}

TrackSpec reverse_track(const TrackSpec& track) {
  TrackSpec out = track;
  std::reverse(out.centerline.begin(), out.centerline.end());
  out.id = track.id + "-rev";
  rebuild_markings(out);  // damage mask resets; caller re-applies if needed
  return out;
}

TrackSpec mirror_track(const TrackSpec& track) {
  TrackSpec out = track;
  for (auto& p : out.centerline) p.y = -p.y;
  out.id = track.id + "-mir";
  rebuild_markings(out);
  return out;
}

void save_track(const TrackSpec& track, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write track: " + path.string());
  os.precision(17);
  os << "H=" << track.half_lane_width << "\n";
  os << "M=" << track.marking_segment_len << "\n";
  for (const auto& p : track.centerline) os << p.x << " " << p.y << "\n";
  if (!os) throw std::runtime_error("track write failed: " + path.string());
  std::ofstream dma(path.string() + ".damage");
  if (!dma) throw std::runtime_error("cannot write damage mask");
  for (auto d : track.damage_mask) dma << int(d) << "\n";
}

TrackSpec load_track(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read track: " + path.string());
  std::string header;
  if (!std::getline(is, header) || header.rfind("H=", 0) != 0)
    throw std::runtime_error("track file missing H= header: " + path.string());
  TrackSpec t;
  t.id = path.stem().string();
  t.half_lane_width = std::stod(header.substr(2));
  if (!(t.half_lane_width > 0.0))
    throw std::runtime_error("bad half lane width in " + path.string());
  std::string line;
  bool in_header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (in_header && line.rfind("M=", 0) == 0) {
      t.marking_segment_len = std::stod(line.substr(2));
      if (!(t.marking_segment_len > 0.0))
        throw std::runtime_error("bad marking length in " + path.string());
      in_header = false;
      continue;
    }
    in_header = false;
    std::istringstream ls(line);
    Vec2 p;
    if (!(ls >> p.x >> p.y))
      throw std::runtime_error("bad waypoint line in " + path.string());
    t.centerline.push_back(p);
  }
  if (t.centerline.size() < 3)
    throw std::runtime_error("track has fewer than 3 waypoints");
  double total = 0.0;
  size_t n = t.centerline.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = t.centerline[i];
    const Vec2& b = t.centerline[(i + 1) % n];
    total += std::hypot(b.x - a.x, b.y - a.y);
  }
  t.spacing = total / static_cast<double>(n);
  rebuild_markings(t);
  std::ifstream dma(path.string() + ".damage");
  if (dma) {
    std::vector<uint8_t> mask;
    int v;
    while (dma >> v) {
      if (v != 0 && v != 1)
        throw std::runtime_error("damage mask entries must be 0 or 1");
      mask.push_back(static_cast<uint8_t>(v));
    }
    if (mask.size() != t.markings.size())
      throw std::runtime_error("damage mask length does not match segments");
    t.damage_mask = std::move(mask);
  }
  return t;
}

size_t nearest_centerline(const TrackSpec& track, Vec2 p, long hint,
                          int window) {
  size_t n = track.centerline.size();
  auto d2 = [&](size_t i) {
    double dx = track.centerline[i].x - p.x;
    double dy = track.centerline[i].y - p.y;
    return dx * dx + dy * dy;
  };
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  if (hint >= 0) {
    for (int o = -window; o <= window; ++o) {
      size_t i = static_cast<size_t>(((hint + o) % static_cast<long>(n) + n) % n);
      double d = d2(i);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      double d = d2(i);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
  }
  return best;
}

GroundTruth ground_truth(const TrackSpec& track, const VehicleState& s,
                         long hint) {
  size_t n = track.centerline.size();
  size_t i = nearest_centerline(track, {s.x, s.y}, hint);
  const Vec2& nu = track.centerline[i];
  const Vec2& a = track.centerline[(i + n - 1) % n];
  const Vec2& b = track.centerline[(i + 1) % n];
  double tx = b.x - a.x, ty = b.y - a.y;
  double len = std::hypot(tx, ty);
  tx /= len;
  ty /= len;
  GroundTruth gt;
  double lateral = tx * (s.y - nu.y) - ty * (s.x - nu.x);  // + when left of road
  gt.alpha_unclipped = lateral / track.half_lane_width;
  gt.alpha = std::clamp(gt.alpha_unclipped, -1.0, 1.0);
  gt.tangent_angle = std::atan2(ty, tx);
  gt.beta = std::clamp(wrap_angle(gt.tangent_angle - s.heading), -M_PI / 2.0,
                       M_PI / 2.0);
  gt.nearest_index = i;
  return gt;
}

VehicleState step_dynamics(const VehicleState& s, const Action& a,
                           const SimConfig& cfg) {
  double steer = std::clamp(a.steer, -M_PI / 2.0, M_PI / 2.0);
  double cmd = std::clamp(a.speed_cmd, 0.0, cfg.speed_max);
  VehicleState n;
  n.heading =
      wrap_angle(s.heading + cfg.heading_rate_gain * steer * s.speed * cfg.dt);
  n.x = s.x + s.speed * cfg.dt * std::cos(s.heading);  // old heading
  n.y = s.y + s.speed * cfg.dt * std::sin(s.heading);
  n.speed = std::max(0.0, s.speed + cfg.speed_lag * (cmd - s.speed) * cfg.dt);
  return n;
}

double lane_reward(double speed, double alpha, double beta, double scale,
                   double alpha_sign) {
  return scale * speed * (std::cos(beta) + alpha_sign * std::abs(alpha));
}

std::vector<float> render_frame(const TrackSpec& track, const VehicleState& s,
                                const SimConfig& cfg, bool use_damage) {
  const int w = cfg.render_w, h = cfg.render_h;
  if (w < 2 || h < 2) throw std::invalid_argument("render size too small");
  double bg = cfg.texture == 0 ? 0.05 : 0.30;
  double mark = cfg.texture == 0 ? 0.95 : 0.75;
  std::vector<float> frame(static_cast<size_t>(w) * h, static_cast<float>(bg));

  // Pixel-centre coordinates in the vehicle frame.  The x table is built to
  // be exactly antisymmetric so that a mirrored scene renders to an exactly
  // mirrored frame.
  double sx = cfg.window_width / w;
  double sy = cfg.window_ahead / h;
  std::vector<double> px(w), py(h);
  for (int c = w - 1; c >= (w + 1) / 2; --c)
    px[c] = (c + 0.5) * sx - 0.5 * cfg.window_width;
  for (int c = 0; c < w / 2; ++c) px[c] = -px[w - 1 - c];
  if (w % 2 == 1) px[w / 2] = 0.0;
  for (int r = 0; r < h; ++r) py[r] = (h - r - 0.5) * sy;

  double ch = std::cos(s.heading), sh = std::sin(s.heading);
  double hw = 0.5 * cfg.marking_width_px * sx;  // marking half-width, metres
  double aa = 0.5 * sx;                          // anti-alias ramp width
  double reach = hw + aa;

  for (size_t si = 0; si < track.markings.size(); ++si) {
    if (use_damage && si < track.damage_mask.size() && track.damage_mask[si])
      continue;
    const Segment& seg = track.markings[si];
    // Endpoints in the vehicle frame: x right, y forward.
    double dax = seg.a.x - s.x, day = seg.a.y - s.y;
    double dbx = seg.b.x - s.x, dby = seg.b.y - s.y;
    double ax = dax * sh - day * ch, ay = dax * ch + day * sh;
    double bx = dbx * sh - dby * ch, by = dbx * ch + dby * sh;
    double lox = std::min(ax, bx) - reach, hix = std::max(ax, bx) + reach;
    double loy = std::min(ay, by) - reach, hiy = std::max(ay, by) + reach;
    if (hix < px[0] || lox > px[w - 1] || hiy < py[h - 1] || loy > py[0])
      continue;
    double ex = bx - ax, ey = by - ay;
    double ee = ex * ex + ey * ey;
    for (int r = 0; r < h; ++r) {
      double y = py[r];
      if (y < loy || y > hiy) continue;
      for (int c = 0; c < w; ++c) {
        double x = px[c];
        if (x < lox || x > hix) continue;
        double qx = x - ax, qy = y - ay;
        double t = ee > 0.0 ? std::clamp((qx * ex + qy * ey) / ee, 0.0, 1.0) : 0.0;
        double dx = qx - t * ex, dy = qy - t * ey;
        double d2 = dx * dx + dy * dy;
        if (d2 >= reach * reach) continue;
        double d = std::sqrt(d2);
        double cover = std::min(1.0, (reach - d) / aa);
        float v = static_cast<float>(bg + (mark - bg) * cover);
        float& px_out = frame[static_cast<size_t>(r) * w + c];
        if (v > px_out) px_out = v;
      }
    }
  }
  return frame;
}

std::vector<float> mirror_frame(const std::vector<float>& frame, int w, int h) {
  if (frame.size() != static_cast<size_t>(w) * h)
    throw std::invalid_argument("mirror_frame: size mismatch");
  std::vector<float> out(frame.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out[static_cast<size_t>(r) * w + c] =
          frame[static_cast<size_t>(r) * w + (w - 1 - c)];
  return out;
}

World::World(TrackSpec track, SimConfig cfg, double reward_scale,
             double reward_alpha_sign)
    : track_(std::move(track)),
      cfg_(cfg),
      reward_scale_(reward_scale),
      reward_alpha_sign_(reward_alpha_sign) {
  if (track_.centerline.size() < 3)
    throw std::invalid_argument("world needs a track with >= 3 waypoints");
  reset(0, false);
}

void World::reset(size_t start_index, bool use_damage) {
  size_t n = track_.centerline.size();
  if (start_index >= n) throw std::out_of_range("reset: bad start index");
  const Vec2& p = track_.centerline[start_index];
  const Vec2& a = track_.centerline[(start_index + n - 1) % n];
  const Vec2& b = track_.centerline[(start_index + 1) % n];
  state_ = {p.x, p.y, std::atan2(b.y - a.y, b.x - a.x), 0.0};
  steps_ = 0;
  use_damage_ = use_damage;
  idx_hint_ = static_cast<long>(start_index);
  gt_ = ground_truth(track_, state_, idx_hint_);
  idx_hint_ = static_cast<long>(gt_.nearest_index);
  obs_.last_action = Action{};
  refresh_observation(true);
}

void World::reset_to_state(const VehicleState& s, const Action& last_action,
                           bool use_damage) {
  state_ = s;
  steps_ = 0;
  use_damage_ = use_damage;
  idx_hint_ = -1;
  gt_ = ground_truth(track_, state_, idx_hint_);
  idx_hint_ = static_cast<long>(gt_.nearest_index);
  obs_.last_action = last_action;
  refresh_observation(true);
}

void World::refresh_observation(bool duplicate_prev) {
  auto frame = std::make_shared<std::vector<float>>(
      render_frame(track_, state_, cfg_, use_damage_));
  if (duplicate_prev) {
    obs_.frame_prev = frame;
  } else {
    obs_.frame_prev = obs_.frame_cur;
  }
  obs_.frame_cur = std::move(frame);
  obs_.speed = state_.speed;
}

StepResult World::step(const Action& a) {
  Action clipped{std::clamp(a.steer, -M_PI / 2.0, M_PI / 2.0),
                 std::clamp(a.speed_cmd, 0.0, cfg_.speed_max)};
  state_ = step_dynamics(state_, clipped, cfg_);
  ++steps_;
  gt_ = ground_truth(track_, state_, idx_hint_);
  idx_hint_ = static_cast<long>(gt_.nearest_index);
  obs_.last_action = clipped;
  refresh_observation(false);
  StepResult res;
  res.reward = lane_reward(state_.speed, gt_.alpha, gt_.beta, reward_scale_,
                           reward_alpha_sign_);
  res.departed = std::abs(gt_.alpha_unclipped) >= 1.0;
  return res;
}

size_t obs_feature_width(const SimConfig& cfg) {
  return static_cast<size_t>(cfg.render_w) * cfg.render_h * 2 + 3;
}

void obs_features(const Observation& obs, const SimConfig& cfg,
                  std::vector<double>& out) {
  size_t npx = static_cast<size_t>(cfg.render_w) * cfg.render_h;
  if (!obs.frame_prev || !obs.frame_cur || obs.frame_prev->size() != npx ||
      obs.frame_cur->size() != npx)
    throw std::invalid_argument("obs_features: frame size mismatch");
  out.resize(2 * npx + 3);
  for (size_t i = 0; i < npx; ++i) out[i] = (*obs.frame_prev)[i];
  for (size_t i = 0; i < npx; ++i) out[npx + i] = (*obs.frame_cur)[i];
  out[2 * npx + 0] = 2.0 * (obs.speed / cfg.speed_max) - 1.0;
  out[2 * npx + 1] = obs.last_action.steer / (M_PI / 2.0);
  out[2 * npx + 2] = 2.0 * (obs.last_action.speed_cmd / cfg.speed_max) - 1.0;
}

size_t sample_track_priority(const std::vector<uint64_t>& counts, Rng& rng) {
  if (counts.empty()) throw std::invalid_argument("no tracks to sample");
  double mean = 0.0;
  for (auto c : counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(counts.size());
  double kappa = mean > 0.0 ? mean : 1.0;
  std::vector<double> w(counts.size());
  double total = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    w[i] = std::exp(-static_cast<double>(counts[i]) / kappa);
    total += w[i];
  }
  double u = rng.uniform01() * total;
  for (size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return i;
  }
  return w.size() - 1;
}

}  // namespace gvfl
