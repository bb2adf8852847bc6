#include "ctrfusion/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <limits>

namespace ctrfusion::kernels {
namespace {

inline double a_at(const GemmShape& s, std::span<const double> a, std::size_t i, std::size_t t) {
  return s.trans_a == Trans::kNo ? a[i * s.k + t] : a[t * s.m + i];
}

inline double b_at(const GemmShape& s, std::span<const double> b, std::size_t t, std::size_t j) {
  return s.trans_b == Trans::kNo ? b[t * s.n + j] : b[j * s.k + t];
}

// One output row of the fast gemm. Summation over t is ascending for every
// element, matching gemm_reference.
void gemm_row(const GemmShape& s, std::span<const double> a, std::span<const double> b, double* crow,
              std::size_t i, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] = 0.0;
  }
  if (s.trans_b == Trans::kNo) {
    for (std::size_t t = 0; t < s.k; ++t) {
      const double av = a_at(s, a, i, t);
      const double* brow = b.data() + t * s.n;
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* brow = b.data() + j * s.k;
      double acc = crow[j];
      if (s.trans_a == Trans::kNo) {
        const double* arow = a.data() + i * s.k;
        for (std::size_t t = 0; t < s.k; ++t) acc += arow[t] * brow[t];
      } else {
        for (std::size_t t = 0; t < s.k; ++t) acc += a[t * s.m + i] * brow[t];
      }
      crow[j] = acc;
    }
  }
}

bool softmax_row(const double* in, std::size_t cols, std::span<const unsigned char> mask, double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask.empty() || mask[j]) mx = std::max(mx, in[j]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) return false;
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask.empty() || mask[j]) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  return true;
}

}  // namespace

void gemm_reference(const GemmShape& s, std::span<const double> a, std::span<const double> b,
                    std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t t = 0; t < s.k; ++t) acc += a_at(s, a, i, t) * b_at(s, b, t, j);
      c[i * s.n + j] = acc;
    }
  }
}

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  const std::size_t work = s.m * s.n * s.k;
  const auto rows = static_cast<long>(s.m);
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold && s.m > 1)
  for (long i = 0; i < rows; ++i) {
    gemm_row(s, a, b, c.data() + static_cast<std::size_t>(i) * s.n, static_cast<std::size_t>(i), accumulate);
  }
}

bool masked_softmax_rows_reference(std::span<const double> scores, std::size_t rows, std::size_t cols,
                                   std::span<const unsigned char> mask, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (!softmax_row(scores.data() + r * cols, cols, mask, out.data() + r * cols)) return false;
  }
  return true;
}

bool masked_softmax_rows(std::span<const double> scores, std::size_t rows, std::size_t cols,
                         std::span<const unsigned char> mask, std::span<double> out) {
  bool ok = true;
  const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) reduction(&& : ok) if (rows * cols >= kParallelThreshold)
  for (long r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    ok = softmax_row(scores.data() + row * cols, cols, mask, out.data() + row * cols) && ok;
  }
  return ok;
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace ctrfusion::kernels
