#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "approx.hpp"
#include "test_util.hpp"

using namespace gvfl;

TEST_CASE("backward matches central differences on small nets") {
  Rng rng(12345);
  std::vector<std::vector<LayerSpec>> shapes = {
      {{3, 4, Activation::Tanh}, {4, 2, Activation::Linear}},
      {{5, 8, Activation::Relu}, {8, 8, Activation::Relu}, {8, 1, Activation::Linear}},
      {{4, 6, Activation::Sigmoid}, {6, 3, Activation::Tanh}},
      {{2, 1, Activation::Linear}},
  };
  for (auto& shape : shapes) {
    Net net = Net::init_uniform(shape, rng);
    auto rep = testutil::fd_check(net, 6, 10, 4, rng);
    CAPTURE(shape.size());
    CHECK(rep.probes >= 60);
    CHECK(rep.max_rel < 1e-4);
  }
}

TEST_CASE("forward computes the documented affine + activation chain") {
  // One layer, hand-filled weights: out = tanh(W x + b).
  Net net({{2, 2, Activation::Tanh}});
  auto& p = net.params();
  REQUIRE(p.size() == 6);  // 4 weights row-major then 2 biases
  p = {1.0, -2.0, 0.5, 0.25, 0.1, -0.1};
  auto out = net.forward(std::vector<double>{0.3, 0.7});
  CHECK(out[0] == doctest::Approx(std::tanh(1.0 * 0.3 - 2.0 * 0.7 + 0.1)));
  CHECK(out[1] == doctest::Approx(std::tanh(0.5 * 0.3 + 0.25 * 0.7 - 0.1)));
}

TEST_CASE("init_uniform bounds and zero biases") {
  Rng rng(7);
  Net net = Net::init_uniform({{9, 16, Activation::Relu}, {16, 4, Activation::Linear}}, rng);
  // Per layer: |w| <= 1/sqrt(fan_in), biases exactly zero.
  size_t off0 = net.layer_offset(0);
  for (size_t i = 0; i < 9 * 16; ++i)
    CHECK(std::abs(net.params()[off0 + i]) <= 1.0 / 3.0 + 1e-12);
  for (size_t i = 9 * 16; i < 9 * 16 + 16; ++i)
    CHECK(net.params()[off0 + i] == 0.0);
  size_t off1 = net.layer_offset(1);
  for (size_t i = 0; i < 16 * 4; ++i)
    CHECK(std::abs(net.params()[off1 + i]) <= 0.25 + 1e-12);
}

TEST_CASE("first adam step equals -lr * sign(grad) up to eps") {
  Net net({{2, 1, Activation::Linear}});
  net.params() = {0.5, -0.5, 0.2};
  AdamHyper hyp;
  hyp.lr = 0.01;
  std::vector<double> grad = {2.0, -3.0, 0.5};
  std::vector<double> before = net.params();
  net.adam_step(grad, hyp);
  REQUIRE(net.adam_t() == 1);
  for (size_t i = 0; i < grad.size(); ++i) {
    double expect = -hyp.lr * grad[i] / (std::abs(grad[i]) + hyp.eps);
    CHECK(net.params()[i] - before[i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("adam rejects non-finite gradients") {
  Net net({{2, 1, Activation::Linear}});
  std::vector<double> grad = {1.0, std::nan(""), 0.0};
  CHECK_THROWS_AS(net.adam_step(grad, AdamHyper{}), std::domain_error);
  grad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(net.adam_step(grad, AdamHyper{}), std::domain_error);
}

TEST_CASE("polyak_from blends parameters exactly") {
  Rng rng(3);
  Net a = Net::init_uniform({{3, 2, Activation::Tanh}}, rng);
  Net b = Net::init_uniform({{3, 2, Activation::Tanh}}, rng);
  std::vector<double> av = a.params(), bv = b.params();
  a.polyak_from(b, 0.25);
  for (size_t i = 0; i < av.size(); ++i)
    CHECK(a.params()[i] == doctest::Approx(0.75 * av[i] + 0.25 * bv[i]).epsilon(1e-15));
  CHECK(a.same_shape(b));

  Net c({{4, 2, Activation::Tanh}});
  CHECK_FALSE(a.same_shape(c));
  CHECK_THROWS(a.polyak_from(c, 0.1));
}

TEST_CASE("checkpoint round-trips optimizer state") {
  testutil::TempDir tmp("approx");
  Rng rng(99);
  Net net = Net::init_uniform({{4, 8, Activation::Relu}, {8, 2, Activation::Tanh}}, rng);
  AdamHyper hyp;
  hyp.lr = 1e-3;
  std::vector<double> grad(net.param_count());
  for (int step = 0; step < 3; ++step) {
    for (double& g : grad) g = rng.normal();
    net.adam_step(grad, hyp);
  }
  auto path = tmp.path / "net.ckpt";
  net.save(path);
  Net loaded = Net::load(path);
  REQUIRE(loaded.same_shape(net));
  CHECK(loaded.adam_t() == net.adam_t());
  CHECK(loaded.params() == net.params());

  // A further identical step must produce bitwise-identical parameters,
  // which only holds if the moment vectors survived the round trip.
  for (double& g : grad) g = 0.37;
  net.adam_step(grad, hyp);
  loaded.adam_step(grad, hyp);
  CHECK(loaded.params() == net.params());
}

TEST_CASE("load rejects damaged checkpoints") {
  testutil::TempDir tmp("approx_bad");
  auto path = tmp.path / "junk.ckpt";
  testutil::write_file(path, "not a checkpoint");
  CHECK_THROWS(Net::load(path));
  CHECK_THROWS(Net::load(tmp.path / "missing.ckpt"));
}
