#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metastack/defenses.hpp"
#include "metastack/vecmath.hpp"

using namespace metastack;

namespace {

UpdateList random_updates(int n, int d, RngStream& rng) {
  UpdateList u(n, std::vector<double>(d));
  for (auto& v : u)
    for (auto& x : v) x = rng.gaussian();
  return u;
}

// Brute-force krum: recompute everything from scratch.
std::vector<double> krum_oracle(const UpdateList& updates, int f) {
  int n = static_cast<int>(updates.size());
  int keep = n - f - 2;
  int best = -1;
  double best_score = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> d2;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < updates[i].size(); ++k)
        s += (updates[i][k] - updates[j][k]) * (updates[i][k] - updates[j][k]);
      d2.push_back(s);
    }
    std::sort(d2.begin(), d2.end());
    double score = 0.0;
    for (int k = 0; k < keep; ++k) score += d2[k];
    if (best < 0 || score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return updates[best];
}

}  // namespace

TEST_CASE("mean: identity, symmetry, permutation-oracle") {
  std::vector<double> v = {1.0, -2.0, 3.0};
  CHECK(aggregate_mean({v}) == v);

  std::vector<double> neg = {-1.0, 2.0, -3.0};
  auto z = aggregate_mean({v, neg});
  for (double x : z) CHECK(x == 0.0);

  RngStream rng = root_stream(1, "m");
  UpdateList u = random_updates(9, 5, rng);
  auto fast = aggregate_mean(u);
  UpdateList shuffled = u;
  std::reverse(shuffled.begin(), shuffled.end());
  auto slow = aggregate_mean(shuffled);
  for (std::size_t j = 0; j < fast.size(); ++j)
    CHECK(fast[j] == doctest::Approx(slow[j]).epsilon(1e-12));

  CHECK_THROWS_AS(aggregate_mean({}), std::invalid_argument);
}

TEST_CASE("trimmed mean: beta=0 is mean; pinned 1-d example; sort oracle") {
  RngStream rng = root_stream(2, "tm");
  UpdateList u = random_updates(6, 4, rng);
  auto a = aggregate_trimmed_mean(u, 0.0);
  auto b = aggregate_mean(u);
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]));

  UpdateList one_d = {{-10.0}, {0.0}, {1.0}, {2.0}, {10.0}};
  CHECK(aggregate_trimmed_mean(one_d, 0.2)[0] == doctest::Approx(1.0));

  UpdateList u7 = random_updates(7, 3, rng);
  auto fast = aggregate_trimmed_mean(u7, 0.15);
  int k = static_cast<int>(std::floor(0.15 * 7));
  for (int j = 0; j < 3; ++j) {
    std::vector<double> col;
    for (const auto& v : u7) col.push_back(v[j]);
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (int i = k; i < 7 - k; ++i) s += col[i];
    CHECK(fast[j] == doctest::Approx(s / (7 - 2 * k)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(aggregate_trimmed_mean(u7, 0.5), std::invalid_argument);
}

TEST_CASE("median: singleton, pinned example, even count, sort oracle") {
  std::vector<double> v = {1.0, 2.0};
  CHECK(aggregate_median({v}) == v);
  CHECK(aggregate_median({{1.0}, {2.0}, {100.0}})[0] == doctest::Approx(2.0));
  CHECK(aggregate_median({{1.0}, {3.0}})[0] == doctest::Approx(2.0));

  RngStream rng = root_stream(3, "md");
  UpdateList u = random_updates(8, 4, rng);
  auto fast = aggregate_median(u);
  for (int j = 0; j < 4; ++j) {
    std::vector<double> col;
    for (const auto& x : u) col.push_back(x[j]);
    std::sort(col.begin(), col.end());
    CHECK(fast[j] == doctest::Approx(0.5 * (col[3] + col[4])));
  }
}

TEST_CASE("krum: precondition, cluster selection, brute-force oracle") {
  std::vector<double> v = {1.0, 2.0};
  UpdateList too_few = {v, v, v, {50.0, 50.0}};
  CHECK_THROWS_WITH_AS(krum(too_few, 1), doctest::Contains("n >= 2f+3"),
                       std::invalid_argument);

  UpdateList five = {v, v, v, v, {50.0, 50.0}};
  CHECK(krum(five, 1) == v);

  RngStream rng = root_stream(4, "k");
  for (int rep = 0; rep < 20; ++rep) {
    UpdateList u = random_updates(7, 2, rng);
    CHECK(krum(u, 2) == krum_oracle(u, 2));
  }
}

TEST_CASE("norm_clip: bound, exact shrink, idempotence, non-expansion") {
  std::vector<double> small = {0.3, 0.4};  // norm 0.5
  CHECK(norm_clip_one(small, 1.0) == small);

  std::vector<double> big = {3.0, 4.0};  // norm 5
  auto clipped = norm_clip_one(big, 2.5);
  CHECK(norm2(clipped) == doctest::Approx(2.5).epsilon(1e-12));

  auto twice = norm_clip_one(clipped, 2.5);
  for (std::size_t i = 0; i < twice.size(); ++i)
    CHECK(twice[i] == doctest::Approx(clipped[i]).epsilon(1e-12));
  CHECK(norm2(clipped) <= norm2(big));
}

TEST_CASE("fltrust: trust weighting and fallbacks") {
  std::vector<double> server = {1.0, 0.0};
  UpdateList same = {server, server, server};
  auto out = fltrust(same, server);
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(0.0));

  // Antiparallel gets zero trust: only the parallel update contributes.
  UpdateList mix = {{-2.0, 0.0}, {3.0, 0.0}};
  out = fltrust(mix, server);
  CHECK(out[0] == doctest::Approx(1.0));  // rescaled to the server norm

  // All-zero trust falls back to the server update.
  UpdateList hostile = {{-1.0, 0.0}, {-5.0, 0.0}};
  CHECK(fltrust(hostile, server) == server);

  CHECK_THROWS_AS(fltrust(same, {0.0, 0.0}), std::invalid_argument);

  // Scalar recomputation oracle on a random instance.
  RngStream rng = root_stream(5, "ft");
  UpdateList u = random_updates(6, 3, rng);
  std::vector<double> srv = {0.5, -0.2, 0.8};
  auto fast = fltrust(u, srv);
  double snorm = std::sqrt(0.5 * 0.5 + 0.2 * 0.2 + 0.8 * 0.8);
  std::vector<double> acc(3, 0.0);
  double total = 0.0;
  for (const auto& ui : u) {
    double un = norm2(ui);
    double cs = (ui[0] * srv[0] + ui[1] * srv[1] + ui[2] * srv[2]) / (un * snorm);
    double trust = cs > 0 ? cs : 0.0;
    for (int j = 0; j < 3; ++j) acc[j] += trust * ui[j] * (snorm / un);
    total += trust;
  }
  for (int j = 0; j < 3; ++j)
    CHECK(fast[j] == doctest::Approx(acc[j] / total).epsilon(1e-12));
}

TEST_CASE("post_process: clamp semantics and idempotence") {
  std::vector<double> p = {0.5, -0.25};
  CHECK(post_process(p, 1.0) == p);
  CHECK(post_process({2.0}, 1.0)[0] == doctest::Approx(1.0));
  CHECK(post_process({-2.0}, 1.0)[0] == doctest::Approx(-1.0));
  auto once = post_process({3.0, -0.1}, 0.5);
  CHECK(post_process(once, 0.5) == once);
}

TEST_CASE("defense action: validation and sigmoid squash") {
  CHECK_THROWS_AS(DefenseAction::validated(0.5, 1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(DefenseAction::validated(0.1, 0, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(DefenseAction::validated(0.1, 1, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(DefenseAction::validated(0.1, 1, 0, 0), std::invalid_argument);

  DefenseBox box;
  std::vector<double> raw = {0.0, 0.0, 0.0, 0.0};
  DefenseAction mid = DefenseAction::from_policy(raw, box);
  CHECK(mid.trim_frac == doctest::Approx(0.5 * (box.trim_lo + box.trim_hi)));
  CHECK(mid.norm_bound == doctest::Approx(0.5 * (box.norm_lo + box.norm_hi)));

  std::vector<double> extreme = {100.0, -100.0, 100.0, -100.0};
  DefenseAction edge = DefenseAction::from_policy(extreme, box);
  CHECK(edge.trim_frac == doctest::Approx(box.trim_hi));
  CHECK(edge.norm_bound == doctest::Approx(box.norm_lo));
}

TEST_CASE("pipeline: neutral action reduces to the plain mean") {
  RngStream rng = root_stream(6, "p");
  UpdateList u = random_updates(5, 4, rng);
  DefenseAction neutral = DefenseAction::validated(0.0, 1e9, 0.0, 1e9);
  DefensePipeline p = build_pipeline(neutral, "tmean", 1);
  RngStream prng = root_stream(7, "pr");
  auto got = p.aggregate(u, nullptr, prng);
  auto want = aggregate_mean(u);
  for (std::size_t j = 0; j < got.size(); ++j)
    CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
}

TEST_CASE("pipeline: beta=0.4 with n=5 trims one per side per coordinate") {
  UpdateList u = {{-10.0}, {0.0}, {1.0}, {2.0}, {10.0}};
  DefenseAction act = DefenseAction::validated(0.4, 1e9, 0.0, 1e9);
  DefensePipeline p = build_pipeline(act, "tmean", 1);
  RngStream rng = root_stream(8, "pp");
  CHECK(p.aggregate(u, nullptr, rng)[0] == doctest::Approx(1.0));
}

TEST_CASE("pipeline: deterministic under a fixed seed, unknown id rejected") {
  RngStream rng = root_stream(9, "pd");
  UpdateList u = random_updates(6, 3, rng);
  DefenseAction act = DefenseAction::validated(0.1, 2.0, 0.01, 5.0);
  DefensePipeline p = build_pipeline(act, "tmean", 1);
  RngStream r1 = root_stream(10, "noise");
  RngStream r2 = root_stream(10, "noise");
  CHECK(p.aggregate(u, nullptr, r1) == p.aggregate(u, nullptr, r2));

  CHECK_THROWS_AS(build_pipeline(act, "bogus", 1), std::invalid_argument);
}

TEST_CASE("permutation invariance of all aggregators on generic inputs") {
  RngStream rng = root_stream(11, "pi");
  UpdateList u = random_updates(7, 3, rng);
  UpdateList rev = u;
  std::reverse(rev.begin(), rev.end());

  auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  };
  close(aggregate_mean(u), aggregate_mean(rev));
  close(aggregate_trimmed_mean(u, 0.2), aggregate_trimmed_mean(rev, 0.2));
  close(aggregate_median(u), aggregate_median(rev));
  CHECK(krum(u, 2) == krum(rev, 2));  // no exact score ties on generic inputs
}

TEST_CASE("breakdown sanity: one huge outlier") {
  RngStream rng = root_stream(12, "bd");
  UpdateList u = random_updates(9, 3, rng);
  std::vector<double> outlier = {1e6, -1e6, 1e6};
  UpdateList all = u;
  all.push_back(outlier);

  std::vector<double> lo(3, 1e18), hi(3, -1e18);
  for (const auto& v : u)
    for (int j = 0; j < 3; ++j) {
      lo[j] = std::min(lo[j], v[j]);
      hi[j] = std::max(hi[j], v[j]);
    }

  auto in_hull = [&](const std::vector<double>& v) {
    for (int j = 0; j < 3; ++j)
      if (v[j] < lo[j] - 1e-9 || v[j] > hi[j] + 1e-9) return false;
    return true;
  };
  CHECK(in_hull(aggregate_trimmed_mean(all, 0.1)));
  CHECK(in_hull(aggregate_median(all)));
  CHECK(in_hull(krum(all, 1)));
  CHECK_FALSE(in_hull(aggregate_mean(all)));
}
