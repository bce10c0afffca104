#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lmwt/tensor.hpp"

namespace lmwt {

// Differentiable primitives. Each records its local gradient rule on the
// active tape when an input requires a gradient.

/// Elementwise sum. `b` may match `a` or a trailing suffix of `a`'s shape,
/// in which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product with the same broadcasting rule as add().
Tensor mul(const Tensor& a, const Tensor& b);
/// a * b[index], where b is a vector and index selects one learnable scalar.
Tensor scale_by_entry(const Tensor& a, const Tensor& b, std::size_t index);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
/// Softmax over the last axis, computed with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor sum(const Tensor& a);

/// Rows 0, 2, 4, ... and rows 1, 3, 5, ... of a rank-2 tensor.
std::pair<Tensor, Tensor> split_even_odd(const Tensor& a);
/// Inverse of split_even_odd.
Tensor interleave(const Tensor& even, const Tensor& odd);

/// Each row of a rank-2 tensor repeated `factor` consecutive times.
Tensor upsample_repeat(const Tensor& a, std::size_t factor);
/// Appends zero rows until the tensor has `target_rows` rows.
Tensor pad_rows(const Tensor& a, std::size_t target_rows);
/// Same values viewed with another shape of equal element count.
Tensor reshape(const Tensor& a, Shape shape);
/// Rows [begin, end) of a rank-2 tensor.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// out[i] = table[ids[i]]
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);

/// Mean label-smoothed cross entropy over rows with non-zero mask.
///
/// The target distribution puts (1 - smoothing) + smoothing / V on the
/// target id and smoothing / V elsewhere. An empty mask counts every row.
Tensor cross_entropy_label_smoothed(const Tensor& logits,
                                    std::span<const std::int32_t> targets,
                                    double smoothing,
                                    std::span<const std::uint8_t> mask = {});

/// Throws NumericError when any value is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

}  // namespace lmwt
