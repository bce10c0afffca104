#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "lmwt/aggregation.hpp"
#include "lmwt/tensor.hpp"
#include "lmwt/wavelet.hpp"

namespace lmwt {

struct LayerNormParams {
  Tensor gain, bias;
};

struct FfnParams {
  Tensor w1, b1;  // d x d_ff, d_ff
  Tensor w2, b2;  // d_ff x d, d
};

/// Learnable multi-scale Haar mixer: per-level transforms plus fusion.
struct WaveletMixerParams {
  std::vector<ScaleParams> scales;
  AggregationParams agg;
};

/// Baseline multi-head self-attention. Heads split the columns of the
/// projection matrices, so d_k = d_v = d / heads.
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // each d x d
  std::size_t heads = 1;
  bool causal = false;
};

using MixerParams = std::variant<WaveletMixerParams, AttentionParams>;

struct LayerParams {
  LayerNormParams ln1, ln2;
  MixerParams mixer;
  FfnParams ffn;
  double dropout_p = 0.0;
};

/// How a forward pass runs: sequences of `seq_len` rows are stacked in
/// the row axis; dropout draws from `rng` only when `training` is set.
struct ForwardContext {
  std::size_t seq_len = 0;
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// Sinusoidal table: PE[t, 2k] = sin(t / 10000^{2k/d}), PE[t, 2k+1] = cos(.).
Tensor positional_encoding(std::size_t length, std::size_t dim);

/// Row lookup into `table` plus the positional encoding of each position
/// within its sequence. `tokens` holds whole sequences of `seq_len` ids.
Tensor embed(std::span<const std::int32_t> tokens, const Tensor& table,
             std::size_t seq_len);

/// softmax(Q K^T / sqrt(d_k)) V per sequence and head, on stacked rows.
/// Without an active tape the weights are formed one query row at a time.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      std::size_t seq_len, std::size_t heads, bool causal);

Tensor self_attention(const Tensor& x, const AttentionParams& p,
                      std::size_t seq_len);
/// Decompose, then combine. `seq_len` must be divisible by 2^L.
Tensor wavelet_mixer(const Tensor& x, const WaveletMixerParams& p,
                     std::size_t seq_len);
Tensor apply_mixer(const Tensor& x, const MixerParams& p, std::size_t seq_len);

/// ReLU(X W1 + b1) W2 + b2.
Tensor ffn(const Tensor& x, const FfnParams& p);

/// Inverted dropout: zero each element with probability p and scale
/// survivors by 1 / (1 - p) when training; identity otherwise.
Tensor dropout(const Tensor& x, double p, std::mt19937_64* rng, bool training);

/// X' = X + Dropout(Mixer(LN(X))); Y = X' + Dropout(FFN(LN(X'))).
Tensor lmw_encoder_layer(const Tensor& x, const LayerParams& p,
                         const ForwardContext& ctx);
/// Same step structure as the encoder, applied to the target sequence.
/// There is no encoder-output input.
Tensor lmw_decoder_layer(const Tensor& y_target, const LayerParams& p,
                         const ForwardContext& ctx);

LayerNormParams init_layer_norm(std::size_t dim);
FfnParams init_ffn(std::size_t dim, std::size_t hidden, std::mt19937_64& rng);
/// With `share_across_levels` every level aliases the level-0 vectors.
WaveletMixerParams init_wavelet_mixer(std::size_t dim, std::size_t levels,
                                      double sigma, std::mt19937_64& rng,
                                      bool share_across_levels = false);
AttentionParams init_attention(std::size_t dim, std::size_t heads,
                               std::mt19937_64& rng);

}  // namespace lmwt
