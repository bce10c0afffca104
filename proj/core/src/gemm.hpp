#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

namespace lmwt::detail {

typedef double Vec8 __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
  Vec8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, Vec8 v) { std::memcpy(p, &v, sizeof v); }

/// C[m x n] += A[m x k] * B[k x n], all row-major.
///
/// Full 8 x 16 tiles of C are accumulated in vector registers over the
/// whole k range; leftover rows and columns fall back to scalar loops.
inline void gemm_acc(const double* __restrict a, const double* __restrict b,
                     double* __restrict c, std::size_t m, std::size_t k,
                     std::size_t n) {
  constexpr std::size_t kRows = 8, kCols = 16;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= n; j += kCols) {
      Vec8 lo[kRows], hi[kRows];
      for (std::size_t r = 0; r < kRows; ++r) lo[r] = hi[r] = Vec8{};
      for (std::size_t p = 0; p < k; ++p) {
        const Vec8 b0 = load8(b + p * n + j);
        const Vec8 b1 = load8(b + p * n + j + 8);
        for (std::size_t r = 0; r < kRows; ++r) {
          const double av = a[(i + r) * k + p];
          lo[r] += av * b0;
          hi[r] += av * b1;
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        double* crow = c + (i + r) * n + j;
        store8(crow, load8(crow) + lo[r]);
        store8(crow + 8, load8(crow + 8) + hi[r]);
      }
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < kRows; ++r) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + r) * k + p] * b[p * n + j];
        c[(i + r) * n + j] += acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline std::vector<double> transpose(const double* a, std::size_t rows,
                                     std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

}  // namespace lmwt::detail
