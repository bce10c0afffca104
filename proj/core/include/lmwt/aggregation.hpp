#pragma once

#include <cstddef>
#include <random>

#include "lmwt/tensor.hpp"
#include "lmwt/wavelet.hpp"

namespace lmwt {

/// Learnable fusion of a multi-scale decomposition back to T x d.
struct AggregationParams {
  Tensor gates;  // L + 1 entries: one per detail scale, then final_approx
  Tensor w_out;  // d x d
  Tensor b_out;  // d

  std::size_t levels() const { return gates.numel() - 1; }
};

/// Gates 1 / (L + 1), Xavier-uniform w_out, zero bias.
AggregationParams init_agg_params(std::size_t dim, std::size_t levels,
                                  std::mt19937_64& rng);

/// Y = (sum_l g_l * up(d_l, 2^{l+1}) + g_L * up(a, 2^L)) W_out + b_out,
/// where up() repeats each row. Output has the decomposition's original
/// length.
Tensor combine(const MultiScaleDecomposition& dec, const AggregationParams& p);

}  // namespace lmwt
