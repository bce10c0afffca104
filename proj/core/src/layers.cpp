#include "lmwt/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lmwt/init.hpp"
#include "lmwt/op_counter.hpp"
#include "lmwt/ops.hpp"

namespace lmwt {

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) {
    throw ShapeError("positional_encoding: dimension " + std::to_string(dim) +
                     " must be even");
  }
  std::vector<double> pe(length * dim);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t k = 0; k < dim / 2; ++k) {
      const double freq =
          std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / freq;
      pe[t * dim + 2 * k] = std::sin(angle);
      pe[t * dim + 2 * k + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, dim}, std::move(pe));
}

Tensor embed(std::span<const std::int32_t> tokens, const Tensor& table,
             std::size_t seq_len) {
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw ShapeError("embed: " + std::to_string(tokens.size()) +
                     " tokens do not form whole sequences of length " +
                     std::to_string(seq_len));
  }
  const std::size_t d = table.cols();
  const std::size_t batch = tokens.size() / seq_len;
  Tensor rows = gather_rows(table, tokens);
  Tensor stacked = reshape(rows, {batch, seq_len, d});
  Tensor with_pos = add(stacked, positional_encoding(seq_len, d));
  return reshape(with_pos, {batch * seq_len, d});
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      std::size_t seq_len, std::size_t heads, bool causal) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention_core", q.shape(), k.shape());
  }
  const std::size_t rows = q.dim(0), d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention_core: width " + std::to_string(d) +
                     " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (seq_len == 0 || rows % seq_len != 0) {
    throw ShapeError("attention_core: " + std::to_string(rows) +
                     " rows do not form sequences of length " +
                     std::to_string(seq_len));
  }
  const std::size_t dk = d / heads;
  const std::size_t batch = rows / seq_len;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool keep_weights =
      Tape::current() != nullptr &&
      (q.requires_grad() || k.requires_grad() || v.requires_grad());

  std::vector<double> out(rows * d, 0.0);
  std::vector<double> weights;
  if (keep_weights) weights.resize(batch * heads * seq_len * seq_len);
  std::vector<double> row(seq_len);
  const double* pq = q.data().data();
  const double* pk = k.data().data();
  const double* pv = v.data().data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dk;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const double* qi = pq + (b * seq_len + i) * d + off;
        const std::size_t visible = causal ? i + 1 : seq_len;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < visible; ++j) {
          const double* kj = pk + (b * seq_len + j) * d + off;
          double s = 0.0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          row[j] = s * inv_sqrt;
          mx = std::max(mx, row[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < visible; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        const double inv = 1.0 / total;
        double* oi = out.data() + (b * seq_len + i) * d + off;
        for (std::size_t j = 0; j < visible; ++j) {
          const double w = row[j] * inv;
          const double* vj = pv + (b * seq_len + j) * d + off;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += w * vj[c];
          if (keep_weights) {
            weights[((b * heads + h) * seq_len + i) * seq_len + j] = w;
          }
        }
      }
    }
  }
  const std::uint64_t pairs =
      static_cast<std::uint64_t>(batch) * heads * seq_len * seq_len;
  op_counter::add(OpKind::kScores, 2ull * pairs * dk);
  op_counter::add(OpKind::kMix, 2ull * pairs * dk);

  return make_output(
      {rows, d}, std::move(out), {&q, &k, &v},
      [q, k, v, seq_len, heads, dk, d, batch, inv_sqrt,
       weights = std::move(weights)](detail::Node& o) {
        const double* pq = q.data().data();
        const double* pk = k.data().data();
        const double* pv = v.data().data();
        const double* go = o.grad.data();
        std::vector<double>& gq = q.node().ensure_grad();
        std::vector<double>& gk = k.node().ensure_grad();
        std::vector<double>& gv = v.node().ensure_grad();
        std::vector<double> dp(seq_len);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dk;
            const double* w =
                weights.data() + (b * heads + h) * seq_len * seq_len;
            for (std::size_t i = 0; i < seq_len; ++i) {
              const std::size_t ri = (b * seq_len + i) * d + off;
              const double* wi = w + i * seq_len;
              double dot = 0.0;
              for (std::size_t j = 0; j < seq_len; ++j) {
                const std::size_t rj = (b * seq_len + j) * d + off;
                double s = 0.0;
                for (std::size_t c = 0; c < dk; ++c) {
                  s += go[ri + c] * pv[rj + c];
                  gv[rj + c] += wi[j] * go[ri + c];
                }
                dp[j] = s;
                dot += wi[j] * s;
              }
              for (std::size_t j = 0; j < seq_len; ++j) {
                const double ds = wi[j] * (dp[j] - dot) * inv_sqrt;
                if (ds == 0.0) continue;
                const std::size_t rj = (b * seq_len + j) * d + off;
                for (std::size_t c = 0; c < dk; ++c) {
                  gq[ri + c] += ds * pk[rj + c];
                  gk[rj + c] += ds * pq[ri + c];
                }
              }
            }
          }
        }
      });
}

Tensor self_attention(const Tensor& x, const AttentionParams& p,
                      std::size_t seq_len) {
  Tensor q = matmul(x, p.w_q);
  Tensor k = matmul(x, p.w_k);
  Tensor v = matmul(x, p.w_v);
  return matmul(attention_core(q, k, v, seq_len, p.heads, p.causal), p.w_o);
}

Tensor wavelet_mixer(const Tensor& x, const WaveletMixerParams& p,
                     std::size_t seq_len) {
  const std::size_t levels = p.scales.size();
  if (levels == 0 || levels >= 64 || seq_len % (std::size_t{1} << levels) != 0) {
    throw ShapeError("wavelet_mixer: sequence length " +
                     std::to_string(seq_len) + " is not divisible by 2^" +
                     std::to_string(levels) + "; pad the sequence first");
  }
  return combine(multiscale_decompose(x, p.scales), p.agg);
}

Tensor apply_mixer(const Tensor& x, const MixerParams& p, std::size_t seq_len) {
  return std::visit(
      [&](const auto& params) -> Tensor {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, WaveletMixerParams>) {
          return wavelet_mixer(x, params, seq_len);
        } else {
          return self_attention(x, params, seq_len);
        }
      },
      p);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  Tensor hidden = relu(add(matmul(x, p.w1), p.b1));
  return add(matmul(hidden, p.w2), p.b2);
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64* rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error("dropout: probability must lie in [0, 1), got " +
                std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw Error("dropout: training mode needs an rng");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = u(*rng) < p ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

namespace {

Tensor residual_block(const Tensor& x, const LayerParams& p,
                      const ForwardContext& ctx) {
  Tensor normed = layer_norm(x, p.ln1.gain, p.ln1.bias);
  Tensor mixed = apply_mixer(normed, p.mixer, ctx.seq_len);
  Tensor x1 = add(x, dropout(mixed, p.dropout_p, ctx.rng, ctx.training));
  Tensor normed2 = layer_norm(x1, p.ln2.gain, p.ln2.bias);
  Tensor fed = ffn(normed2, p.ffn);
  return add(x1, dropout(fed, p.dropout_p, ctx.rng, ctx.training));
}

}  // namespace

Tensor lmw_encoder_layer(const Tensor& x, const LayerParams& p,
                         const ForwardContext& ctx) {
  return residual_block(x, p, ctx);
}

Tensor lmw_decoder_layer(const Tensor& y_target, const LayerParams& p,
                         const ForwardContext& ctx) {
  return residual_block(y_target, p, ctx);
}

LayerNormParams init_layer_norm(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

FfnParams init_ffn(std::size_t dim, std::size_t hidden, std::mt19937_64& rng) {
  FfnParams p;
  p.w1 = xavier_uniform(dim, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = xavier_uniform(hidden, dim, rng);
  p.b2 = Tensor::zeros({dim}, true);
  return p;
}

WaveletMixerParams init_wavelet_mixer(std::size_t dim, std::size_t levels,
                                      double sigma, std::mt19937_64& rng,
                                      bool share_across_levels) {
  WaveletMixerParams p;
  for (std::size_t l = 0; l < levels; ++l) {
    if (share_across_levels && l > 0) {
      ScaleParams alias = p.scales.front();
      alias.level = l;
      p.scales.push_back(std::move(alias));
    } else {
      p.scales.push_back(init_scale_params(dim, l, sigma, rng, false));
    }
  }
  p.agg = init_agg_params(dim, levels, rng);
  return p;
}

AttentionParams init_attention(std::size_t dim, std::size_t heads,
                               std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("init_attention: dimension " + std::to_string(dim) +
                     " is not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.w_q = xavier_uniform(dim, dim, rng);
  p.w_k = xavier_uniform(dim, dim, rng);
  p.w_v = xavier_uniform(dim, dim, rng);
  p.w_o = xavier_uniform(dim, dim, rng);
  p.heads = heads;
  return p;
}

}  // namespace lmwt
