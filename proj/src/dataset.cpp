#include "metastack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace metastack {

void Dataset::validate() const {
  if (x.empty()) throw std::invalid_argument("dataset is empty");
  if (x.size() != y.size()) throw std::invalid_argument("feature/label count mismatch");
  for (const auto& xi : x)
    if (static_cast<int>(xi.size()) != d)
      throw std::invalid_argument("sample dimension mismatch");
  for (int yi : y)
    if (yi < 0 || yi >= classes) throw std::invalid_argument("label out of range");
}

double SyntheticSpec::q_effective() const {
  return heterogeneity > 0.0 ? heterogeneity : 1.0 / classes;
}

void SyntheticSpec::validate() const {
  if (d < 2) throw std::invalid_argument("synthetic spec: d must be >= 2");
  if (classes < 2) throw std::invalid_argument("synthetic spec: C must be >= 2");
  if (per_class < 1) throw std::invalid_argument("synthetic spec: per_class must be >= 1");
  if (cluster_spread < 0.0) throw std::invalid_argument("synthetic spec: spread must be >= 0");
  double q = q_effective();
  double lo = 1.0 / classes;
  if (q < lo - 1e-12 || q > 1.0 + 1e-12)
    throw std::invalid_argument("heterogeneity q must lie in [1/C, 1]");
}

std::vector<double> class_mean(const SyntheticSpec& spec, int c) {
  std::vector<double> mu(spec.d, 0.0);
  // One-hot basis, cycling through coordinates with growing magnitude so
  // means stay unit-separated even when C > d.
  mu[c % spec.d] = 1.0 + static_cast<double>(c / spec.d);
  return mu;
}

namespace {

std::vector<double> draw_sample(const SyntheticSpec& spec, int c, RngStream& rng) {
  std::vector<double> x = class_mean(spec, c);
  for (int i = 0; i < spec.d; ++i) x[i] += spec.cluster_spread * rng.gaussian();
  return x;
}

}  // namespace

std::vector<Dataset> make_synthetic_dataset(const SyntheticSpec& spec, int n_clients,
                                            RngStream& rng) {
  spec.validate();
  if (n_clients < 1) throw std::invalid_argument("need at least one client");
  if (n_clients < spec.classes)
    throw std::invalid_argument("synthetic generator needs n_clients >= C");

  double q = spec.q_effective();
  std::vector<Dataset> clients(n_clients);
  for (auto& ds : clients) {
    ds.d = spec.d;
    ds.classes = spec.classes;
  }

  // Clients are partitioned into C groups (client i in group i % C). A sample
  // with label c goes to group c with probability q, else uniformly to one of
  // the other groups; within a group the client is uniform. q = 1/C gives the
  // i.i.d. split.
  std::vector<std::vector<int>> group_members(spec.classes);
  for (int i = 0; i < n_clients; ++i) group_members[i % spec.classes].push_back(i);

  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.per_class; ++s) {
      std::vector<double> x = draw_sample(spec, c, rng);
      int group = c;
      if (rng.uniform() > q) {
        int other = static_cast<int>(rng.uniform_index(spec.classes - 1));
        group = other >= c ? other + 1 : other;
      }
      const auto& members = group_members[group];
      int client = members[rng.uniform_index(members.size())];
      clients[client].x.push_back(std::move(x));
      clients[client].y.push_back(c);
    }
  }
  return clients;
}

Dataset sample_iid_dataset(const SyntheticSpec& spec, int per_class, RngStream& rng) {
  spec.validate();
  if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  Dataset ds;
  ds.d = spec.d;
  ds.classes = spec.classes;
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      ds.x.push_back(draw_sample(spec, c, rng));
      ds.y.push_back(c);
    }
  }
  return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::invalid_argument("truncated IDX file while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         int d, int max_samples) {
  int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (g * g != d)
    throw std::invalid_argument("IDX ingestion requires d to be a perfect square");

  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::invalid_argument("cannot open IDX image file: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::invalid_argument("cannot open IDX label file: " + labels_path);

  std::uint32_t img_magic = read_be32(img, "image magic");
  if (img_magic != 0x00000803u)
    throw std::invalid_argument("bad IDX image magic (expected 0x00000803)");
  std::uint32_t n_img = read_be32(img, "image count");
  std::uint32_t rows = read_be32(img, "rows");
  std::uint32_t cols = read_be32(img, "cols");

  std::uint32_t lab_magic = read_be32(lab, "label magic");
  if (lab_magic != 0x00000801u)
    throw std::invalid_argument("bad IDX label magic (expected 0x00000801)");
  std::uint32_t n_lab = read_be32(lab, "label count");
  if (n_img != n_lab) throw std::invalid_argument("IDX image/label count mismatch");

  std::uint32_t n = n_img;
  if (max_samples > 0 && static_cast<std::uint32_t>(max_samples) < n)
    n = static_cast<std::uint32_t>(max_samples);

  Dataset ds;
  ds.d = d;
  int max_label = 0;
  std::vector<unsigned char> pix(rows * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(pix.data()), pix.size()))
      throw std::invalid_argument("truncated IDX image data");
    char lc;
    if (!lab.read(&lc, 1)) throw std::invalid_argument("truncated IDX label data");
    int label = static_cast<unsigned char>(lc);
    max_label = std::max(max_label, label);

    // Average pooling onto a g x g grid, pixels scaled to [0,1].
    std::vector<double> x(d, 0.0);
    std::vector<int> counts(d, 0);
    for (std::uint32_t r = 0; r < rows; ++r) {
      std::uint32_t cell_r = std::min<std::uint32_t>(r * g / rows, g - 1);
      for (std::uint32_t c = 0; c < cols; ++c) {
        std::uint32_t cell_c = std::min<std::uint32_t>(c * g / cols, g - 1);
        int idx = static_cast<int>(cell_r * g + cell_c);
        x[idx] += pix[r * cols + c] / 255.0;
        counts[idx]++;
      }
    }
    for (int j = 0; j < d; ++j)
      if (counts[j] > 0) x[j] /= counts[j];
    ds.x.push_back(std::move(x));
    ds.y.push_back(label);
  }
  ds.classes = max_label + 1;
  ds.validate();
  return ds;
}

}  // namespace metastack
