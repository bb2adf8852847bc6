#pragma once

#include <cstddef>
#include <span>

// Dense fp64 kernels. Every kernel has a serial reference version kept for
// tests and benchmarks; the production version may split the outer loop across
// OpenMP threads but always accumulates each output element in the same order
// as the reference, so both produce bitwise-identical results.
namespace ctrfusion::kernels {

enum class Trans { kNo, kYes };

// c (m x n) = op(a) (m x k) * op(b) (k x n), optionally accumulating into c.
// op(a) is a (m x k) or a^T with a stored (k x m); likewise for b.
struct GemmShape {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  Trans trans_a = Trans::kNo;
  Trans trans_b = Trans::kNo;
};

void gemm_reference(const GemmShape& shape, std::span<const double> a, std::span<const double> b,
                    std::span<double> c, bool accumulate = false);
void gemm(const GemmShape& shape, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate = false);

// Row-wise softmax of a (rows x cols) matrix. mask has one byte per column;
// columns with mask 0 get exactly 0. Returns false when some row has no
// unmasked column.
bool masked_softmax_rows_reference(std::span<const double> scores, std::size_t rows, std::size_t cols,
                                   std::span<const unsigned char> mask, std::span<double> out);
bool masked_softmax_rows(std::span<const double> scores, std::size_t rows, std::size_t cols,
                         std::span<const unsigned char> mask, std::span<double> out);

// Work (in multiply-adds) above which the parallel kernels fork threads.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

int max_threads();
void set_threads(int threads);

}  // namespace ctrfusion::kernels
