#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "simworld.hpp"
#include "test_util.hpp"

using namespace gvfl;

namespace {

// CCW circle of the given radius; spacing follows from the point count.
TrackSpec make_circle(double radius, size_t n) {
  TrackSpec t;
  t.id = "circle";
  t.centerline.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    t.centerline[i] = {radius * std::cos(th), radius * std::sin(th)};
  }
  t.spacing = 2.0 * M_PI * radius / static_cast<double>(n);
  rebuild_markings(t);
  return t;
}

VehicleState mirrored(const VehicleState& s) {
  return {s.x, -s.y, wrap_angle(-s.heading), s.speed};
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(1.5 * M_PI) == doctest::Approx(-0.5 * M_PI));
  CHECK(wrap_angle(-7.0 * M_PI / 2.0) == doctest::Approx(0.5 * M_PI));
}

TEST_CASE("step_dynamics follows the documented update order") {
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.heading_rate_gain = 1.5;
  cfg.speed_lag = 1.0;
  cfg.speed_max = 0.6;

  VehicleState s{1.0, 2.0, 0.0, 0.5};
  Action a{0.2, 0.6};
  VehicleState n = step_dynamics(s, a, cfg);
  // Position advances along the *old* heading at the old speed.
  CHECK(n.x == doctest::Approx(1.05).epsilon(1e-12));
  CHECK(n.y == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(n.heading == doctest::Approx(1.5 * 0.2 * 0.5 * 0.1).epsilon(1e-12));
  CHECK(n.speed == doctest::Approx(0.51).epsilon(1e-12));

  SUBCASE("steer and command are clipped") {
    VehicleState c = step_dynamics(s, {3.0, 5.0}, cfg);
    CHECK(c.heading == doctest::Approx(1.5 * (M_PI / 2.0) * 0.5 * 0.1));
    CHECK(c.speed == doctest::Approx(0.5 + (0.6 - 0.5) * 0.1));
  }
  SUBCASE("speed is floored at zero") {
    SimConfig fast = cfg;
    fast.speed_lag = 30.0;
    VehicleState slow{0, 0, 0, 0.05};
    VehicleState v = step_dynamics(slow, {0.0, 0.0}, fast);
    CHECK(v.speed == 0.0);
  }
  SUBCASE("stationary vehicle cannot turn") {
    VehicleState still{0, 0, 1.0, 0.0};
    VehicleState v = step_dynamics(still, {1.0, 0.0}, cfg);
    CHECK(v.heading == 1.0);
    CHECK(v.x == 0.0);
  }
}

TEST_CASE("lane_reward formula") {
  CHECK(lane_reward(0.5, 0.3, 0.0, 2.0, -1.0) == doctest::Approx(0.7));
  CHECK(lane_reward(0.5, 0.3, 0.0, 2.0, 1.0) == doctest::Approx(1.3));
  CHECK(lane_reward(0.4, -0.5, M_PI / 3.0, 1.0, -1.0) ==
        doctest::Approx(0.4 * (0.5 - 0.5)));
  CHECK(lane_reward(0.0, 0.0, 0.0, 1.0, -1.0) == 0.0);
}

TEST_CASE("ground truth signs and clipping on a circle") {
  TrackSpec t = make_circle(1.0, 256);
  REQUIRE(t.half_lane_width == doctest::Approx(0.38));

  // 0.19 m outside the CCW circle = right of travel -> negative alpha.
  GroundTruth gt = ground_truth(t, {1.19, 0.0, M_PI / 2.0, 0.0});
  CHECK(gt.nearest_index == 0);
  CHECK(gt.alpha_unclipped == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(gt.alpha == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(gt.tangent_angle == doctest::Approx(M_PI / 2.0).epsilon(1e-9));
  CHECK(gt.beta == doctest::Approx(0.0).epsilon(1e-9));

  // Inside = left of travel -> positive alpha.
  gt = ground_truth(t, {0.81, 0.0, M_PI / 2.0, 0.0});
  CHECK(gt.alpha_unclipped == doctest::Approx(0.5).epsilon(1e-9));

  // Far outside: unclipped keeps going, alpha saturates at -1.
  gt = ground_truth(t, {1.60, 0.0, M_PI / 2.0, 0.0});
  CHECK(gt.alpha_unclipped == doctest::Approx(-0.6 / 0.38).epsilon(1e-9));
  CHECK(gt.alpha == -1.0);

  // beta is the wrapped tangent-minus-heading, clipped to a half turn.
  gt = ground_truth(t, {1.0, 0.0, M_PI / 2.0 - 0.3, 0.0});
  CHECK(gt.beta == doctest::Approx(0.3).epsilon(1e-9));
  gt = ground_truth(t, {1.0, 0.0, M_PI / 2.0 + 2.0, 0.0});
  CHECK(gt.beta == doctest::Approx(-M_PI / 2.0));
}

TEST_CASE("nearest_centerline with and without a hint window") {
  TrackSpec t = make_circle(1.0, 256);
  double th = 2.0 * M_PI * 10.0 / 256.0;
  Vec2 p{1.02 * std::cos(th), 1.02 * std::sin(th)};
  CHECK(nearest_centerline(t, p) == 10);
  CHECK(nearest_centerline(t, p, 8) == 10);
  // A stale hint confines the search to its window (wrapping included).
  size_t idx = nearest_centerline(t, p, 100, 10);
  CHECK(idx == 90);
  CHECK(nearest_centerline(t, {2.0, 0.0}, 254, 10) == 0);
}

TEST_CASE("generated tracks are closed, evenly spaced and bounded in curvature") {
  for (TrackKind kind : {TrackKind::RectangleRounded, TrackKind::Oval,
                         TrackKind::Complex, TrackKind::Random}) {
    CAPTURE(track_kind_name(kind));
    TrackSpec t = generate_track(kind, 31, 0.38, 0.025, 0.25);
    REQUIRE(t.size() > 100);
    size_t n = t.size();
    double min_radius = 1e9;
    for (size_t i = 0; i < n; ++i) {
      const Vec2& a = t.centerline[i];
      const Vec2& b = t.centerline[(i + 1) % n];
      const Vec2& c = t.centerline[(i + 2) % n];
      double d = std::hypot(b.x - a.x, b.y - a.y);
      CHECK(std::abs(d - t.spacing) < 0.25 * t.spacing);
      double h1 = std::atan2(b.y - a.y, b.x - a.x);
      double h2 = std::atan2(c.y - b.y, c.x - b.x);
      double dth = std::abs(wrap_angle(h2 - h1));
      if (dth > 1e-9) min_radius = std::min(min_radius, d / dth);
    }
    CHECK(min_radius >= 0.5);
    CHECK_FALSE(t.markings.empty());
    CHECK(t.damage_mask.size() == t.markings.size());
  }
  // Same seed, same track; different seed, different random track.
  TrackSpec a = generate_track(TrackKind::Random, 5, 0.38, 0.025, 0.25);
  TrackSpec b = generate_track(TrackKind::Random, 5, 0.38, 0.025, 0.25);
  TrackSpec c = generate_track(TrackKind::Random, 6, 0.38, 0.025, 0.25);
  REQUIRE(a.size() == b.size());
  CHECK(a.centerline[10].x == b.centerline[10].x);
  bool same = a.size() == c.size();
  if (same)
    for (size_t i = 0; i < a.size(); ++i)
      same = same && a.centerline[i].x == c.centerline[i].x;
  CHECK_FALSE(same);
}

TEST_CASE("track kind names round-trip") {
  for (const char* name : {"rectangle_rounded", "oval", "complex", "random"})
    CHECK(std::string(track_kind_name(track_kind_from_name(name))) == name);
  CHECK_THROWS(track_kind_from_name("hexagon"));
}

TEST_CASE("save/load round-trips tracks exactly") {
  testutil::TempDir tmp("track");
  TrackSpec t = generate_track(TrackKind::Random, 17, 0.4, 0.03, 0.2);
  apply_damage(t, 0.3, 99);
  auto path = tmp.path / "t.track";
  save_track(t, path);
  TrackSpec l = load_track(path);
  REQUIRE(l.size() == t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    CHECK(l.centerline[i].x == t.centerline[i].x);
    CHECK(l.centerline[i].y == t.centerline[i].y);
  }
  CHECK(l.half_lane_width == t.half_lane_width);
  CHECK(l.damage_mask == t.damage_mask);
  CHECK_THROWS(load_track(tmp.path / "missing.track"));
}

TEST_CASE("apply_damage is seeded and proportional") {
  TrackSpec t = generate_track(TrackKind::Oval, 1, 0.38, 0.025, 0.25);
  size_t n = t.markings.size();
  REQUIRE(n > 50);
  apply_damage(t, 0.25, 7);
  std::vector<uint8_t> first = t.damage_mask;
  size_t ones = 0;
  for (uint8_t d : first) ones += d;
  double sigma = std::sqrt(0.25 * 0.75 * static_cast<double>(n));
  CHECK(std::abs(static_cast<double>(ones) - 0.25 * n) < 5.0 * sigma);
  apply_damage(t, 0.25, 7);
  CHECK(t.damage_mask == first);
  apply_damage(t, 0.25, 8);
  CHECK(t.damage_mask != first);
  apply_damage(t, 1.0, 3);
  for (uint8_t d : t.damage_mask) CHECK(d == 1);
  CHECK_THROWS(apply_damage(t, 1.5, 0));
}

TEST_CASE("reverse_track flips orientation, mirror_track flips y") {
  TrackSpec t = generate_track(TrackKind::Complex, 0, 0.38, 0.025, 0.25);
  TrackSpec r = reverse_track(t);
  REQUIRE(r.size() == t.size());
  // Same point set, opposite traversal: signed area changes sign.
  auto area = [](const TrackSpec& s) {
    double a = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      const Vec2& p = s.centerline[i];
      const Vec2& q = s.centerline[(i + 1) % s.size()];
      a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
  };
  CHECK(area(t) * area(r) < 0.0);
  TrackSpec m = mirror_track(t);
  CHECK(m.centerline[3].y == doctest::Approx(-t.centerline[3].y));
  CHECK(m.centerline[3].x == doctest::Approx(t.centerline[3].x));
}

TEST_CASE("rendering: marking columns land where the geometry says") {
  TrackSpec t = make_circle(20.0, 5027);
  SimConfig cfg;  // 32x24, 2 m across, 3 m ahead
  VehicleState s{20.0, 0.0, M_PI / 2.0, 0.0};
  for (int texture : {0, 1}) {
    cfg.texture = texture;
    float bg = texture == 0 ? 0.05f : 0.30f;
    float mark = texture == 0 ? 0.95f : 0.75f;
    std::vector<float> frame = render_frame(t, s, cfg, false);
    REQUIRE(frame.size() == 32u * 24u);
    for (float v : frame) {
      CHECK(v >= bg - 1e-6f);
      CHECK(v <= mark + 1e-6f);
    }
    // Near the vehicle the road is vertical: markings at x = +-0.38 m,
    // i.e. columns around 9.4 and 21.6 at 0.0625 m per pixel.
    for (int r = 18; r < 24; ++r) {
      float best = 0.0f;
      int best_c = -1;
      for (int c = 0; c < 16; ++c) {
        if (frame[static_cast<size_t>(r) * 32 + c] > best) {
          best = frame[static_cast<size_t>(r) * 32 + c];
          best_c = c;
        }
      }
      CHECK(best > 0.5f * (bg + mark));
      CHECK(best_c >= 9);
      CHECK(best_c <= 10);
      // Mirror column on the right side.
      float right = std::max(frame[static_cast<size_t>(r) * 32 + 21],
                             frame[static_cast<size_t>(r) * 32 + 22]);
      CHECK(right > 0.5f * (bg + mark));
    }
    // Far corners sit ~1 m from any marking: untouched background.
    CHECK(frame[0] == bg);
    CHECK(frame[31] == bg);
  }
}

TEST_CASE("fully damaged markings disappear from the render") {
  TrackSpec t = make_circle(5.0, 1257);
  apply_damage(t, 1.0, 1);
  SimConfig cfg;
  VehicleState s{5.0, 0.0, M_PI / 2.0, 0.0};
  std::vector<float> with = render_frame(t, s, cfg, true);
  std::vector<float> without = render_frame(t, s, cfg, false);
  float bg = 0.05f;
  for (float v : with) CHECK(v == bg);
  bool any_mark = false;
  for (float v : without) any_mark = any_mark || v > 0.5f;
  CHECK(any_mark);
}

TEST_CASE("mirrored scenes render to mirrored frames bitwise") {
  TrackSpec t = generate_track(TrackKind::Random, 3, 0.38, 0.025, 0.25);
  TrackSpec m = mirror_track(t);
  SimConfig cfg;
  cfg.render_w = 17;  // odd width exercises the centre column
  cfg.render_h = 12;
  Rng rng(21);
  for (int probe = 0; probe < 6; ++probe) {
    cfg.texture = probe % 2;
    size_t i = static_cast<size_t>(rng.uniform_int(t.size()));
    VehicleState s{t.centerline[i].x + rng.uniform(-0.3, 0.3),
                   t.centerline[i].y + rng.uniform(-0.3, 0.3),
                   rng.uniform(-M_PI, M_PI), 0.3};
    std::vector<float> a = render_frame(m, mirrored(s), cfg, false);
    std::vector<float> b =
        mirror_frame(render_frame(t, s, cfg, false), cfg.render_w, cfg.render_h);
    CHECK(a == b);
  }
}

TEST_CASE("observation features: layout and normalization") {
  SimConfig cfg;
  cfg.render_w = 8;
  cfg.render_h = 6;
  TrackSpec t = make_circle(1.0, 256);
  World w(t, cfg);
  w.reset(0);
  w.step({0.3, 0.5});
  w.step({-0.2, 0.45});
  const Observation& obs = w.observation();
  std::vector<double> f;
  obs_features(obs, cfg, f);
  size_t npx = 48;
  REQUIRE(f.size() == obs_feature_width(cfg));
  REQUIRE(f.size() == 2 * npx + 3);
  for (size_t i = 0; i < npx; ++i) {
    CHECK(f[i] == doctest::Approx((*obs.frame_prev)[i]));
    CHECK(f[npx + i] == doctest::Approx((*obs.frame_cur)[i]));
  }
  CHECK(f[2 * npx + 0] ==
        doctest::Approx(2.0 * obs.speed / cfg.speed_max - 1.0));
  CHECK(f[2 * npx + 1] == doctest::Approx(-0.2 / (M_PI / 2.0)));
  CHECK(f[2 * npx + 2] == doctest::Approx(2.0 * 0.45 / cfg.speed_max - 1.0));
  // Two executed steps: the previous frame is the t-1 render, not the reset
  // duplicate.
  CHECK(obs.frame_prev != obs.frame_cur);
}

TEST_CASE("world stepping: reward, departure flag and time limit") {
  SimConfig cfg;
  cfg.render_w = 8;
  cfg.render_h = 6;
  cfg.max_steps = 5;
  TrackSpec t = make_circle(1.0, 256);
  World w(t, cfg, 2.0, -1.0);
  w.reset(0);
  CHECK(w.state().speed == 0.0);
  StepResult r = w.step({0.0, 0.6});
  CHECK(r.reward == doctest::Approx(lane_reward(w.state().speed, w.truth().alpha,
                                                w.truth().beta, 2.0, -1.0)));
  CHECK_FALSE(r.departed);
  for (int i = 0; i < 4; ++i) w.step({0.0, 0.6});
  CHECK(w.time_limit_reached());

  // Plant the vehicle half a lane-width beyond the marking.
  w.reset_to_state({1.0 + 1.5 * 0.38, 0.0, M_PI / 2.0, 0.3}, {0.0, 0.3});
  CHECK(w.departed());
  StepResult r2 = w.step({0.0, 0.3});
  CHECK(r2.departed);

  // reset() re-centres the vehicle on the requested waypoint.
  w.reset(42);
  CHECK(w.truth().nearest_index == 42);
  CHECK(std::abs(w.truth().alpha_unclipped) < 1e-9);
  CHECK_FALSE(w.departed());
  CHECK(w.steps() == 0);
}

TEST_CASE("worlds with identical inputs evolve identically") {
  SimConfig cfg;
  cfg.render_w = 8;
  cfg.render_h = 6;
  TrackSpec t = generate_track(TrackKind::Oval, 2, 0.38, 0.025, 0.25);
  World a(t, cfg), b(t, cfg);
  a.reset(5);
  b.reset(5);
  for (int i = 0; i < 40; ++i) {
    Action act{0.2 * std::sin(0.1 * i), 0.4};
    a.step(act);
    b.step(act);
    REQUIRE(a.state().x == b.state().x);
    REQUIRE(a.state().heading == b.state().heading);
    REQUIRE(*a.observation().frame_cur == *b.observation().frame_cur);
  }
}

TEST_CASE("track usage sampling prefers rare tracks") {
  Rng rng(123);
  std::vector<uint64_t> counts{10, 0};
  // exp(-10/5) vs exp(0): p = [0.1192, 0.8808].
  int hits0 = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    if (sample_track_priority(counts, rng) == 0) ++hits0;
  CHECK(std::abs(hits0 / static_cast<double>(draws) - 0.11920) < 0.01);

  std::vector<uint64_t> fresh{0, 0, 0, 0};
  std::vector<int> c(4, 0);
  for (int i = 0; i < draws; ++i) ++c[sample_track_priority(fresh, rng)];
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(c[i] / static_cast<double>(draws) - 0.25) < 0.01);
  CHECK_THROWS(sample_track_priority({}, rng));
}
