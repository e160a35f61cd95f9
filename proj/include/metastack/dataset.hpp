#pragma once

#include <string>
#include <vector>

#include "metastack/rng.hpp"

namespace metastack {

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  int d = 0;
  int classes = 0;

  std::size_t size() const { return x.size(); }
  void validate() const;
};

// Parameters of the synthetic classification task: C Gaussian clusters with
// unit-separated means, label-skewed shards controlled by heterogeneity q.
struct SyntheticSpec {
  int d = 10;
  int classes = 3;
  int per_class = 40;          // total samples per class across all clients
  double cluster_spread = 0.3;
  double heterogeneity = 0.0;  // q in [1/C, 1]; 0 means "use 1/C" (i.i.d.)

  double q_effective() const;
  void validate() const;
};

std::vector<double> class_mean(const SyntheticSpec& spec, int c);

std::vector<Dataset> make_synthetic_dataset(const SyntheticSpec& spec, int n_clients,
                                            RngStream& rng);

// I.i.d. draw from the same clusters, used for server-side splits.
Dataset sample_iid_dataset(const SyntheticSpec& spec, int per_class, RngStream& rng);

// Optional ingestion of IDX image/label files (big-endian magic 0x00000803 /
// 0x00000801), downsampled to d features via average pooling. d must be a
// perfect square.
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         int d, int max_samples);

}  // namespace metastack
