#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lmwt/tensor.hpp"

namespace lmwt {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

// ---------------------------------------------------------------------------
// Classical Haar transform on plain vectors.

struct HaarCoefficients {
  std::vector<double> approx;
  std::vector<double> detail;
};

/// a_i = (x_{2i} + x_{2i+1}) / sqrt(2), d_i = (x_{2i} - x_{2i+1}) / sqrt(2).
/// Throws ShapeError for odd lengths; pad the signal first.
HaarCoefficients haar_forward_classical(std::span<const double> x);
std::vector<double> haar_inverse_classical(std::span<const double> approx,
                                           std::span<const double> detail);

/// Multi-level classical decomposition of a 1-D signal.
struct ClassicalDecomposition {
  std::vector<std::vector<double>> details;  // details[l] has n / 2^{l+1} values
  std::vector<double> approx;                // n / 2^L values
};

ClassicalDecomposition haar_decompose_classical(std::span<const double> x,
                                                std::size_t levels);
std::vector<double> haar_reconstruct_classical(const ClassicalDecomposition& dec);

// ---------------------------------------------------------------------------
// Learnable transform on T x d sequences.

struct InverseScaleParams {
  Tensor alpha, beta, gamma, delta;
};

/// Per-dimension mixing vectors for one decomposition level.
struct ScaleParams {
  std::size_t level = 0;
  Tensor alpha, beta, gamma, delta;
  std::optional<InverseScaleParams> inverse;

  std::size_t dim() const { return alpha.numel(); }
  /// The four forward vectors, in alpha, beta, gamma, delta order.
  std::vector<Tensor> forward_tensors() const {
    return {alpha, beta, gamma, delta};
  }
};

/// Haar constants plus N(0, sigma^2) noise per element. Forward vectors are
/// drawn first (alpha, beta, gamma, delta), then the inverse vectors.
ScaleParams init_scale_params(std::size_t dim, std::size_t level, double sigma,
                              std::mt19937_64& rng, bool with_inverse = true);
/// Exact Haar constants in both directions.
ScaleParams classical_scale_params(std::size_t dim, std::size_t level = 0);

/// A_i = alpha * x_{2i} + beta * x_{2i+1}; D_i = gamma * x_{2i} + delta * x_{2i+1}.
///
/// `x` is rank 2 with an even row count. Rows may stack several sequences
/// as long as each one has even length, since pairs never straddle them.
std::pair<Tensor, Tensor> learnable_haar_forward(const Tensor& x,
                                                 const ScaleParams& p);

/// x_{2i} = alpha_inv * A_i + gamma_inv * D_i;
/// x_{2i+1} = beta_inv * A_i + delta_inv * D_i.
Tensor learnable_haar_inverse(const Tensor& approx, const Tensor& detail,
                              const ScaleParams& p);

struct MultiScaleDecomposition {
  std::vector<Tensor> details;  // details[l] has T / 2^{l+1} rows
  Tensor final_approx;          // T / 2^L rows
  std::size_t original_length = 0;

  std::size_t levels() const { return details.size(); }
};

/// Applies learnable_haar_forward recursively, feeding each level's
/// approximation into the next.
MultiScaleDecomposition multiscale_decompose(const Tensor& x,
                                             std::span<const ScaleParams> params);

/// Smallest multiple of 2^levels that is >= length.
std::size_t padded_length(std::size_t length, std::size_t levels);

struct PaddedSequence {
  Tensor values;
  std::size_t original_length = 0;
};

/// Appends zero rows up to `target` rows and records the original length
/// so the loss can mask the padding.
PaddedSequence pad_sequence(const Tensor& x, std::size_t target);

}  // namespace lmwt
