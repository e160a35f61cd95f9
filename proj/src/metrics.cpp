#include "metastack/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace metastack {

std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
  out_ << kMetricsHeader << "\n";
}

namespace {

void put(std::ofstream& out, const std::optional<int>& v, bool first) {
  if (!first) out << ",";
  if (v) out << *v;
}

void put(std::ofstream& out, const std::optional<double>& v, bool first) {
  if (!first) out << ",";
  if (v && std::isfinite(*v)) out << format_metric(*v);
}

}  // namespace

void MetricsWriter::write(const MetricsRow& r) {
  put(out_, r.iter, true);
  put(out_, r.round, false);
  put(out_, r.clean_loss, false);
  put(out_, r.clean_acc, false);
  put(out_, r.backdoor_acc, false);
  put(out_, r.rD_mean, false);
  put(out_, r.rA_mean, false);
  put(out_, r.residual_D, false);
  put(out_, r.residual_A_max, false);
  put(out_, r.wallclock_s, false);
  out_ << "\n";
}

void MetricsWriter::flush() { out_.flush(); }

}  // namespace metastack
