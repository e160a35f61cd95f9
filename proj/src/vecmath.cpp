#include "metastack/vecmath.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace metastack {

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(std::span<double> x, double a) {
  for (double& v : x) v *= a;
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

double pairwise_sum_range(std::span<const double> v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum_range(v, lo, mid) + pairwise_sum_range(v, mid, hi);
}

void pairwise_rows_range(const std::vector<std::vector<double>>& rows,
                         std::size_t lo, std::size_t hi, std::span<double> out) {
  if (hi - lo <= 8) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& r = rows[i];
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += r[j];
    }
    return;
  }
  std::size_t mid = lo + (hi - lo) / 2;
  std::vector<double> left(out.size(), 0.0), right(out.size(), 0.0);
  pairwise_rows_range(rows, lo, mid, left);
  pairwise_rows_range(rows, mid, hi, right);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = left[j] + right[j];
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return pairwise_sum_range(v, 0, v.size());
}

void pairwise_sum_rows(const std::vector<std::vector<double>>& rows,
                       std::span<double> out) {
  for (double& v : out) v = 0.0;
  if (rows.empty()) return;
  for (const auto& r : rows)
    if (r.size() != out.size())
      throw std::invalid_argument("pairwise_sum_rows: inconsistent row sizes");
  pairwise_rows_range(rows, 0, rows.size(), out);
}

void Matrix::add_scaled(const Matrix& other, double a) {
  assert(rows == other.rows && cols == other.cols);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += a * other.data[i];
}

std::vector<double> Matrix::transpose_times(std::span<const double> x) const {
  assert(x.size() == rows);
  std::vector<double> y(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double xi = x[i];
    const double* row = data.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) y[j] += xi * row[j];
  }
  return y;
}

}  // namespace metastack
