#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "metastack/dataset.hpp"
#include "metastack/model.hpp"
#include "metastack/vecmath.hpp"

using namespace metastack;

TEST_CASE("synthetic: zero spread collapses samples onto class means") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.classes = 3;
  spec.per_class = 12;
  spec.cluster_spread = 0.0;
  RngStream rng = root_stream(1, "d");
  auto clients = make_synthetic_dataset(spec, 3, rng);
  for (const auto& ds : clients)
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto mu = class_mean(spec, ds.y[i]);
      for (int j = 0; j < spec.d; ++j) CHECK(ds.x[i][j] == mu[j]);
    }
}

TEST_CASE("synthetic: iid split gives uniform per-client label histograms") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.classes = 4;
  spec.per_class = 2000;
  spec.heterogeneity = 0.25;  // 1/C
  RngStream rng = root_stream(17, "iid");
  int n_clients = 10;
  auto clients = make_synthetic_dataset(spec, n_clients, rng);
  // Each sample hits a given client with p = 1/10; exact multinomial 3 sigma.
  double p = 1.0 / n_clients;
  double expected = spec.per_class * p;
  double sigma = std::sqrt(spec.per_class * p * (1 - p));
  for (const auto& ds : clients) {
    std::vector<int> hist(spec.classes, 0);
    for (int y : ds.y) hist[y]++;
    for (int c = 0; c < spec.classes; ++c)
      CHECK(std::abs(hist[c] - expected) <= 3.0 * sigma);
  }
}

TEST_CASE("synthetic: byte-identical across invocations with one seed") {
  SyntheticSpec spec;
  spec.d = 5;
  spec.classes = 2;
  spec.per_class = 40;
  RngStream r1 = root_stream(9, "det");
  RngStream r2 = root_stream(9, "det");
  auto a = make_synthetic_dataset(spec, 4, r1);
  auto b = make_synthetic_dataset(spec, 4, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    REQUIRE(a[c].size() == b[c].size());
    CHECK(a[c].y == b[c].y);
    for (std::size_t i = 0; i < a[c].size(); ++i) CHECK(a[c].x[i] == b[c].x[i]);
  }
}

TEST_CASE("synthetic: heterogeneity validation") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.heterogeneity = 0.1;  // below 1/C
  RngStream rng = root_stream(0, "q");
  CHECK_THROWS_AS(make_synthetic_dataset(spec, 8, rng), std::invalid_argument);
  spec.heterogeneity = 1.1;
  CHECK_THROWS_AS(make_synthetic_dataset(spec, 8, rng), std::invalid_argument);
}

TEST_CASE("synthetic: skewed split concentrates labels") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.classes = 2;
  spec.per_class = 1000;
  spec.heterogeneity = 0.9;
  RngStream rng = root_stream(23, "skew");
  auto clients = make_synthetic_dataset(spec, 2, rng);
  // Client 0 is in group 0: ~90% of class-0 samples should land there.
  int c0_label0 = std::count(clients[0].y.begin(), clients[0].y.end(), 0);
  CHECK(c0_label0 > 800);
}

TEST_CASE("eval_loss: uniform-logit model gives ln C") {
  SyntheticSpec spec;
  spec.d = 6;
  spec.classes = 10;
  spec.per_class = 5;
  RngStream rng = root_stream(2, "l");
  Dataset ds = sample_iid_dataset(spec, 5, rng);
  GlobalModel m = GlobalModel::zeros(6, 10);
  CHECK(eval_loss(m, ds) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("eval_loss: huge-margin logit drives the loss to zero") {
  Dataset ds;
  ds.d = 2;
  ds.classes = 2;
  ds.x = {{1.0, 0.0}};
  ds.y = {0};
  GlobalModel m = GlobalModel::zeros(2, 2);
  m.params[0] = 40.0;  // logit margin 40 for class 0 on this sample
  CHECK(eval_loss(m, ds) < 1e-6);
}

TEST_CASE("eval_loss: permutation-sum oracle") {
  SyntheticSpec spec;
  spec.d = 5;
  spec.classes = 3;
  RngStream rng = root_stream(31, "perm");
  Dataset ds = sample_iid_dataset(spec, 20, rng);
  GlobalModel m = GlobalModel::zeros(5, 3);
  for (auto& p : m.params) p = 0.3 * rng.gaussian();

  double fast = eval_loss(m, ds);
  // Oracle: per-sample single-item datasets summed in shuffled order.
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
  double slow = 0.0;
  for (std::size_t i : order) {
    Dataset one;
    one.d = ds.d;
    one.classes = ds.classes;
    one.x = {ds.x[i]};
    one.y = {ds.y[i]};
    slow += eval_loss(m, one);
  }
  slow /= static_cast<double>(ds.size());
  CHECK(fast == doctest::Approx(slow).epsilon(1e-10));
}

TEST_CASE("eval_loss: empty dataset errors") {
  Dataset ds;
  ds.d = 2;
  ds.classes = 2;
  GlobalModel m = GlobalModel::zeros(2, 2);
  CHECK_THROWS_AS(eval_loss(m, ds), std::invalid_argument);
}

TEST_CASE("backdoor metrics: constant predictors and the tie-break rule") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.classes = 3;
  RngStream rng = root_stream(5, "bd");
  Dataset eval = sample_iid_dataset(spec, 10, rng);
  // Relabel everything to the target class 0 (a fraction-1 poisoned set).
  Dataset poisoned = eval;
  for (auto& y : poisoned.y) y = 0;

  GlobalModel always0 = GlobalModel::zeros(4, 3);
  always0.params[4 * 3 + 0] = 10.0;  // bias of class 0
  CHECK(eval_backdoor_metrics(always0, poisoned).accuracy == 1.0);

  GlobalModel never0 = GlobalModel::zeros(4, 3);
  never0.params[4 * 3 + 1] = 10.0;  // bias of class 1
  CHECK(eval_backdoor_metrics(never0, poisoned).accuracy == 0.0);

  // All-zero model: every logit ties, argmax breaks to the lowest index, so
  // target 0 scores exactly 1.0.
  GlobalModel zero = GlobalModel::zeros(4, 3);
  CHECK(eval_backdoor_metrics(zero, poisoned).accuracy == 1.0);
}

TEST_CASE("local_sgd_update descends the local loss") {
  SyntheticSpec spec;
  spec.d = 4;
  spec.classes = 2;
  RngStream rng = root_stream(6, "sgd");
  Dataset ds = sample_iid_dataset(spec, 30, rng);
  GlobalModel m = GlobalModel::zeros(4, 2);
  std::vector<double> g = local_sgd_update(m, ds, 0.1, 3);
  GlobalModel after = m;
  for (std::size_t i = 0; i < after.params.size(); ++i) after.params[i] -= g[i];
  CHECK(eval_loss(after, ds) < eval_loss(m, ds));
  // Zero learning rate produces the zero update.
  std::vector<double> zero = local_sgd_update(m, ds, 0.0, 3);
  CHECK(norm2(zero) == 0.0);
}

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

TEST_CASE("IDX ingestion: average pooling and validation") {
  std::string img_path = "idx_test_images.bin";
  std::string lab_path = "idx_test_labels.bin";
  {
    std::ofstream img(img_path, std::ios::binary);
    write_be32(img, 0x00000803u);
    write_be32(img, 2);  // two images
    write_be32(img, 4);
    write_be32(img, 4);
    // Image 0: constant 100; image 1: top-left quadrant 255, rest 0.
    for (int i = 0; i < 16; ++i) img.put(static_cast<char>(100));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        img.put(static_cast<char>((r < 2 && c < 2) ? 255 : 0));
    std::ofstream lab(lab_path, std::ios::binary);
    write_be32(lab, 0x00000801u);
    write_be32(lab, 2);
    lab.put(static_cast<char>(1));
    lab.put(static_cast<char>(0));
  }

  Dataset ds = load_idx_dataset(img_path, lab_path, 4, 0);  // pool 4x4 -> 2x2
  REQUIRE(ds.size() == 2);
  CHECK(ds.d == 4);
  CHECK(ds.y[0] == 1);
  CHECK(ds.y[1] == 0);
  for (int j = 0; j < 4; ++j)
    CHECK(ds.x[0][j] == doctest::Approx(100.0 / 255.0).epsilon(1e-12));
  CHECK(ds.x[1][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ds.x[1][1] == doctest::Approx(0.0));
  CHECK(ds.x[1][2] == doctest::Approx(0.0));
  CHECK(ds.x[1][3] == doctest::Approx(0.0));

  // Determinism and error paths.
  Dataset again = load_idx_dataset(img_path, lab_path, 4, 0);
  CHECK(again.x == ds.x);
  CHECK_THROWS_AS(load_idx_dataset(img_path, lab_path, 5, 0), std::invalid_argument);
  {
    std::ofstream img(img_path, std::ios::binary);
    write_be32(img, 0xDEADBEEFu);
  }
  CHECK_THROWS_AS(load_idx_dataset(img_path, lab_path, 4, 0), std::invalid_argument);
  std::remove(img_path.c_str());
  std::remove(lab_path.c_str());
}
