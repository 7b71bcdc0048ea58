#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <vector>

#include "replay.hpp"
#include "test_util.hpp"

using namespace gvfl;

namespace {

// Slot-level mirror of the buffer used as the oracle for sums and contents.
struct NaiveModel {
  size_t capacity;
  std::vector<double> pri;
  std::vector<int> value;
  size_t write = 0, size = 0;

  explicit NaiveModel(size_t cap) : capacity(cap), pri(cap, 0.0), value(cap, -1) {}

  void push(int v, double p) {
    value[write] = v;
    pri[write] = p;
    write = (write + 1) % capacity;
    if (size < capacity) ++size;
  }
  double total() const {
    double acc = 0.0, comp = 0.0;  // Kahan
    for (double p : pri) {
      double y = p - comp;
      double t = acc + y;
      comp = (t - acc) - y;
      acc = t;
    }
    return acc;
  }
};

}  // namespace

TEST_CASE("push, eviction order and indexing") {
  SumTreeBuffer<int> buf(4);
  CHECK(buf.capacity() == 4);
  for (int i = 0; i < 6; ++i) buf.push(i, 1.0 + i);
  CHECK(buf.size() == 4);
  // Ring layout: slots 0,1 overwritten by items 4,5.
  CHECK(buf[0] == 4);
  CHECK(buf[1] == 5);
  CHECK(buf[2] == 2);
  CHECK(buf[3] == 3);
  CHECK(buf.priority(0) == 5.0);
  CHECK(buf.priority(3) == 4.0);
  CHECK(buf.total_priority() == doctest::Approx(5 + 6 + 3 + 4).epsilon(1e-15));
  CHECK(buf.mean_priority() == doctest::Approx(18.0 / 4).epsilon(1e-15));
  CHECK_THROWS(buf[4]);
  CHECK_THROWS(buf.push(9, -1.0));
  CHECK_THROWS(buf.push(9, std::nan("")));
}

TEST_CASE("empty-buffer guards") {
  SumTreeBuffer<int> buf(8);
  Rng rng(1);
  CHECK(buf.total_priority() == 0.0);
  CHECK_THROWS(buf.mean_priority());
  CHECK_THROWS(buf.sample(4, SampleMode::Uniform, rng));
  CHECK_THROWS(SumTreeBuffer<int>(0));
}

TEST_CASE("fuzzed ops keep tree totals within 1e-9 of a Kahan oracle") {
  for (size_t cap : {37u, 100u, 1024u}) {
    SumTreeBuffer<int> buf(cap);
    NaiveModel model(cap);
    Rng rng(4242 + cap);
    int pushes = 0;
    for (int op = 0; op < 10000; ++op) {
      double roll = rng.uniform01();
      if (roll < 0.6 || buf.size() == 0) {
        double p = rng.uniform01() < 0.05 ? 0.0 : std::exp(rng.uniform(-3.0, 8.0));
        buf.push(pushes, p);
        model.push(pushes, p);
        ++pushes;
      } else {
        size_t idx = static_cast<size_t>(rng.uniform_int(buf.size()));
        double p = rng.uniform(0.0, 100.0);
        buf.set_priority(idx, p);
        model.pri[idx] = p;
      }
      if (op % 25 == 0) {
        double expect = model.total();
        double got = buf.total_priority();
        CHECK(std::abs(got - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
      }
    }
    // Values must match the oracle slot for slot after all that churn.
    for (size_t i = 0; i < buf.size(); ++i) CHECK(buf[i] == model.value[i]);
  }
}

TEST_CASE("explicit rebuild restores exact sums after adversarial churn") {
  SumTreeBuffer<int> buf(64);
  NaiveModel model(64);
  Rng rng(9);
  // Alternate huge and tiny priorities to provoke cancellation drift.
  for (int i = 0; i < 64; ++i) {
    double p = (i % 2 == 0) ? 1e15 : 1e-6;
    buf.push(i, p);
    model.push(i, p);
  }
  for (int round = 0; round < 2000; ++round) {
    size_t idx = static_cast<size_t>(rng.uniform_int(64));
    double p = (round % 2 == 0) ? 1e-6 : 1e15;
    buf.set_priority(idx, p);
    model.pri[idx] = p;
  }
  buf.rebuild();
  CHECK(std::abs(buf.total_priority() - model.total()) <=
        1e-12 * model.total());
}

TEST_CASE("priority sampling matches the target distribution") {
  const size_t n = 64;
  SumTreeBuffer<int> buf(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    buf.push(static_cast<int>(i), static_cast<double>(i + 1));
    total += static_cast<double>(i + 1);
  }
  Rng rng(777);
  std::vector<size_t> counts(n, 0);
  const int draws = 200000;
  auto idx = buf.sample(draws, SampleMode::Priority, rng);
  CHECK_FALSE(buf.last_sample_uniform_fallback());
  for (size_t i : idx) ++counts[i];
  for (size_t i = 0; i < n; ++i) {
    double expect = static_cast<double>(i + 1) / total;
    double got = static_cast<double>(counts[i]) / draws;
    CHECK(std::abs(got - expect) < 0.005);
  }
}

TEST_CASE("zero-mass priority sampling falls back to uniform") {
  SumTreeBuffer<int> buf(16);
  for (int i = 0; i < 10; ++i) buf.push(i, 0.0);
  Rng rng(5);
  auto idx = buf.sample(20000, SampleMode::Priority, rng);
  CHECK(buf.last_sample_uniform_fallback());
  std::vector<int> counts(10, 0);
  for (size_t i : idx) {
    REQUIRE(i < 10);
    ++counts[i];
  }
  for (int c : counts) CHECK(std::abs(c / 20000.0 - 0.1) < 0.02);

  // Uniform mode never reports a fallback.
  buf.set_priority(3, 5.0);
  (void)buf.sample(8, SampleMode::Uniform, rng);
  CHECK_FALSE(buf.last_sample_uniform_fallback());
}

TEST_CASE("priority sampling never returns an empty slot") {
  SumTreeBuffer<int> buf(32);
  buf.push(0, 1e-12);
  buf.push(1, 1.0);
  Rng rng(11);
  auto idx = buf.sample(5000, SampleMode::Priority, rng);
  for (size_t i : idx) CHECK(i < 2);
}
