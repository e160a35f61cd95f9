#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace metastack {

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);
void axpy(double a, std::span<const double> x, std::span<double> y);  // y += a*x
void scale(std::span<double> x, double a);
bool all_finite(std::span<const double> x);

// Fixed-order pairwise tree sum: bit-stable for a fixed element order,
// independent of how work was split across threads.
double pairwise_sum(std::span<const double> v);

// out = pairwise tree sum over rows (each row a vector of size out.size()).
void pairwise_sum_rows(const std::vector<std::vector<double>>& rows,
                       std::span<double> out);

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void add_scaled(const Matrix& other, double a);
  // y = M^T x  (x has rows entries, result has cols entries)
  std::vector<double> transpose_times(std::span<const double> x) const;
};

}  // namespace metastack
