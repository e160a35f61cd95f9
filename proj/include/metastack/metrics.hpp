#pragma once

#include <fstream>
#include <optional>
#include <string>

namespace metastack {

// Stable CSV schema; missing fields stay empty but every column is present.
inline constexpr const char* kMetricsHeader =
    "iter,round,clean_loss,clean_acc,backdoor_acc,rD_mean,rA_mean,residual_D,"
    "residual_A_max,wallclock_s";

struct MetricsRow {
  std::optional<int> iter;
  std::optional<int> round;
  std::optional<double> clean_loss;
  std::optional<double> clean_acc;
  std::optional<double> backdoor_acc;
  std::optional<double> rD_mean;
  std::optional<double> rA_mean;
  std::optional<double> residual_D;
  std::optional<double> residual_A_max;
  std::optional<double> wallclock_s;
};

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const MetricsRow& row);
  void flush();

 private:
  std::ofstream out_;
};

std::string format_metric(double v);

}  // namespace metastack
