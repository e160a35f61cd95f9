#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metastack/rng.hpp"
#include "metastack/vecmath.hpp"

using namespace metastack;

TEST_CASE("streams are deterministic and fork-independent") {
  RngStream a = root_stream(42, "test");
  RngStream b = root_stream(42, "test");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Forking after draws gives the same substream as forking before.
  RngStream c = root_stream(42, "test");
  RngStream fork_before = c.substream("x");
  c.next_u64();
  RngStream fork_after = c.substream("x");
  CHECK(fork_before.next_u64() == fork_after.next_u64());

  CHECK(root_stream(42, "a").next_u64() != root_stream(42, "b").next_u64());
  CHECK(root_stream(42, "a").next_u64() != root_stream(43, "a").next_u64());
}

TEST_CASE("uniform lies in (0,1] and gaussian moments are sane") {
  RngStream r = root_stream(7, "moments");
  double sum = 0.0, sum2 = 0.0;
  int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    double g = r.gaussian();
    sum += g;
    sum2 += g * g;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_index covers its range without bias") {
  RngStream r = root_stream(3, "idx");
  std::vector<int> counts(5, 0);
  int n = 50000;
  for (int i = 0; i < n; ++i) counts[r.uniform_index(5)]++;
  for (int c : counts) {
    CHECK(c > 0.18 * n);
    CHECK(c < 0.22 * n);
  }
}

TEST_CASE("pairwise sum matches plain sum") {
  RngStream r = root_stream(11, "sum");
  std::vector<double> v(1001);
  double plain = 0.0;
  for (auto& x : v) {
    x = r.gaussian();
    plain += x;
  }
  CHECK(pairwise_sum(v) == doctest::Approx(plain).epsilon(1e-12));
}
