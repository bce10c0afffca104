#include <gtest/gtest.h>

#include <cmath>

#include "lmwt/layers.hpp"
#include "lmwt/ops.hpp"
#include "support.hpp"

namespace lmwt {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using testing::worst_grad_error;

LayerParams wavelet_layer(std::size_t d, std::size_t levels, std::mt19937_64& rng,
                          double dropout_p = 0.0) {
  LayerParams p;
  p.ln1 = init_layer_norm(d);
  p.ln2 = init_layer_norm(d);
  p.mixer = init_wavelet_mixer(d, levels, 0.05, rng);
  p.ffn = init_ffn(d, 2 * d, rng);
  p.dropout_p = dropout_p;
  return p;
}

// Brute-force softmax(q k^T / sqrt(dk)) v for one sequence.
std::vector<double> naive_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::size_t heads, bool causal) {
  const std::size_t t = q.rows(), d = q.cols(), dk = d / heads;
  std::vector<double> out(t * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> w(t, 0.0);
      double mx = -1e300;
      const std::size_t limit = causal ? i + 1 : t;
      for (std::size_t j = 0; j < limit; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += q.at(i, h * dk + c) * k.at(j, h * dk + c);
        w[j] = s / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, w[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < limit; ++j) z += (w[j] = std::exp(w[j] - mx));
      for (std::size_t j = 0; j < limit; ++j)
        for (std::size_t c = 0; c < dk; ++c)
          out[i * d + h * dk + c] += w[j] / z * v.at(j, h * dk + c);
    }
  }
  return out;
}

TEST(PositionalEncoding, KnownValues) {
  Tensor pe = positional_encoding(4, 6);
  for (std::size_t c = 0; c < 6; c += 2) {
    EXPECT_EQ(pe.at(0, c), 0.0);
    EXPECT_EQ(pe.at(0, c + 1), 1.0);
  }
  EXPECT_NEAR(pe.at(1, 0), 0.841471, 1e-6);
  for (double v : positional_encoding(50, 8).data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(positional_encoding(4, 5), ShapeError);
}

TEST(Embed, LookupPlusPosition) {
  Tensor table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<std::int32_t> tokens{2, 2, 0, 1};
  Tensor x = embed(tokens, table, 2);
  Tensor pe = positional_encoding(2, 2);
  ASSERT_EQ(x.shape(), (Shape{4, 2}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_DOUBLE_EQ(x.at(r, c), table.at(tokens[r], c) + pe.at(r % 2, c));
  // Repeated tokens only differ by position.
  EXPECT_DOUBLE_EQ(x.at(0, 0) - pe.at(0, 0), x.at(1, 0) - pe.at(1, 0));
  std::vector<std::int32_t> bad{0, 3};
  EXPECT_THROW(embed(bad, table, 2), Error);
}

TEST(Embed, GradientOnlyReachesUsedRows) {
  std::mt19937_64 rng(1);
  Tensor table = random_tensor({5, 4}, rng);
  Tensor w = random_tensor({6, 4}, rng, 1.0, false);
  std::vector<std::int32_t> tokens{1, 3, 1, 4, 4, 1};
  auto loss = [&] { return sum(mul(embed(tokens, table, 3), w)); };
  EXPECT_LT(worst_grad_error(loss, {table}), 1e-4);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(table.grad()[0 * 4 + c], 0.0);
    EXPECT_EQ(table.grad()[2 * 4 + c], 0.0);
    EXPECT_NE(table.grad()[1 * 4 + c], 0.0);
  }
}

TEST(Attention, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  for (std::size_t heads : {1u, 2u}) {
    for (bool causal : {false, true}) {
      const std::size_t t = 3, d = 4;
      Tensor q = random_tensor({t, d}, rng, 1.0, false);
      Tensor k = random_tensor({t, d}, rng, 1.0, false);
      Tensor v = random_tensor({t, d}, rng, 1.0, false);
      Tensor got = attention_core(q, k, v, t, heads, causal);
      EXPECT_LT(max_abs_diff(got.data(), naive_attention(q, k, v, heads, causal)), 1e-13);
    }
  }
}

TEST(Attention, SequencesDoNotMix) {
  std::mt19937_64 rng(3);
  Tensor q = random_tensor({8, 4}, rng, 1.0, false);
  Tensor k = random_tensor({8, 4}, rng, 1.0, false);
  Tensor v = random_tensor({8, 4}, rng, 1.0, false);
  Tensor both = attention_core(q, k, v, 4, 2, false);
  Tensor second = attention_core(slice_rows(q, 4, 8), slice_rows(k, 4, 8),
                                 slice_rows(v, 4, 8), 4, 2, false);
  EXPECT_LT(max_abs_diff(slice_rows(both, 4, 8).data(), second.data()), 1e-15);
}

TEST(Attention, WeightRowsSumToOne) {
  // With V = I the output rows are the attention weights themselves.
  std::mt19937_64 rng(4);
  const std::size_t t = 6;
  Tensor q = random_tensor({t, t}, rng, 2.0, false);
  Tensor k = random_tensor({t, t}, rng, 2.0, false);
  std::vector<double> eye(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) eye[i * t + i] = 1.0;
  Tensor w = attention_core(q, k, Tensor::from({t, t}, eye), t, 1, false);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += w.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Attention, SingleTokenIgnoresQueries) {
  std::mt19937_64 rng(5);
  AttentionParams p = init_attention(4, 2, rng);
  Tensor x = random_tensor({1, 4}, rng, 1.0, false);
  Tensor y = self_attention(x, p, 1);
  Tensor expected = matmul(matmul(x, p.w_v), p.w_o);
  EXPECT_LT(max_abs_diff(y.data(), expected.data()), 1e-14);
}

TEST(Attention, IdenticalRowsAttendUniformly) {
  std::mt19937_64 rng(6);
  Tensor row = random_tensor({1, 4}, rng, 1.0, false);
  Tensor x = upsample_repeat(row, 5);
  Tensor v = random_tensor({5, 4}, rng, 1.0, false);
  Tensor y = attention_core(x, x, v, 5, 1, false);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 5; ++j) mean += v.at(j, c) / 5.0;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y.at(i, c), mean, 1e-14);
  }
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    AttentionParams p = init_attention(4, 2, rng);
    p.causal = seed % 2 == 1;
    Tensor x = random_tensor({6, 4}, rng);
    Tensor w = random_tensor({6, 4}, rng, 1.0, false);
    auto loss = [&] { return sum(mul(self_attention(x, p, 3), w)); };
    EXPECT_LT(worst_grad_error(loss, {x, p.w_q, p.w_k, p.w_v, p.w_o}), 1e-4);
  }
}

TEST(Ffn, ZeroWeightsGiveBias) {
  std::mt19937_64 rng(7);
  FfnParams p = init_ffn(3, 5, rng);
  p.w1 = Tensor::zeros({3, 5});
  p.w2 = Tensor::zeros({5, 3});
  p.b2 = Tensor::from({3}, {1, -2, 3});
  Tensor y = ffn(random_tensor({4, 3}, rng, 1.0, false), p);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(r, c), p.b2.at(c));
}

TEST(Ffn, ZeroInputPassesBiasPath) {
  std::mt19937_64 rng(8);
  FfnParams p = init_ffn(2, 3, rng);
  p.b1 = Tensor::from({3}, {1, -1, 2});
  p.b2 = Tensor::from({2}, {0.5, 0.25});
  Tensor y = ffn(Tensor::zeros({1, 2}), p);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = p.b2.at(c);
    for (std::size_t h = 0; h < 3; ++h) s += std::max(0.0, p.b1.at(h)) * p.w2.at(h, c);
    EXPECT_NEAR(y.at(0, c), s, 1e-15);
  }
}

TEST(Ffn, MatchesNaiveLoops) {
  std::mt19937_64 rng(9);
  FfnParams p = init_ffn(3, 4, rng);
  p.b1 = random_tensor({4}, rng, 1.0, false);
  p.b2 = random_tensor({3}, rng, 1.0, false);
  Tensor x = random_tensor({5, 3}, rng, 1.0, false);
  Tensor y = ffn(x, p);
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> hid(4);
    for (std::size_t h = 0; h < 4; ++h) {
      double s = p.b1.at(h);
      for (std::size_t c = 0; c < 3; ++c) s += x.at(r, c) * p.w1.at(c, h);
      hid[h] = std::max(0.0, s);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      double s = p.b2.at(c);
      for (std::size_t h = 0; h < 4; ++h) s += hid[h] * p.w2.at(h, c);
      EXPECT_NEAR(y.at(r, c), s, 1e-14);
    }
  }
}

TEST(Dropout, IdentityCases) {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor({10, 10}, rng, 1.0, false);
  EXPECT_TRUE(dropout(x, 0.0, &rng, true).same_storage(x));
  EXPECT_TRUE(dropout(x, 0.5, &rng, false).same_storage(x));
  EXPECT_THROW(dropout(x, 1.0, &rng, true), Error);
  EXPECT_THROW(dropout(x, -0.1, &rng, true), Error);
}

TEST(Dropout, ZeroFractionAndScale) {
  std::mt19937_64 rng(11);
  Tensor x = Tensor::full({100000}, 1.0);
  const double p = 0.3;
  Tensor y = dropout(x, p, &rng, true);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / (1.0 - p));
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, p, 0.02);
}

TEST(Layer, ShapePreservedAndDeterministic) {
  std::mt19937_64 rng(12);
  LayerParams p = wavelet_layer(4, 2, rng);
  Tensor x = random_tensor({8, 4}, rng, 1.0, false);
  ForwardContext ctx{8, false, nullptr};
  Tensor y1 = lmw_encoder_layer(x, p, ctx);
  Tensor y2 = lmw_encoder_layer(x, p, ctx);
  EXPECT_EQ(y1.shape(), x.shape());
  EXPECT_EQ(max_abs_diff(y1.data(), y2.data()), 0.0);
  EXPECT_EQ(lmw_decoder_layer(x, p, ctx).shape(), x.shape());
}

TEST(Layer, ZeroWeightsGiveIdentity) {
  std::mt19937_64 rng(13);
  LayerParams p = wavelet_layer(4, 2, rng);
  auto& mix = std::get<WaveletMixerParams>(p.mixer);
  mix.agg.w_out = Tensor::zeros({4, 4});
  mix.agg.gates = Tensor::zeros({3});
  p.ffn.w1 = Tensor::zeros({4, 8});
  p.ffn.w2 = Tensor::zeros({8, 4});
  Tensor x = random_tensor({8, 4}, rng, 1.0, false);
  ForwardContext ctx{8, false, nullptr};
  EXPECT_EQ(max_abs_diff(lmw_encoder_layer(x, p, ctx).data(), x.data()), 0.0);
  EXPECT_EQ(max_abs_diff(lmw_decoder_layer(x, p, ctx).data(), x.data()), 0.0);
}

TEST(Layer, MatchesScriptedComposition) {
  std::mt19937_64 rng(14);
  LayerParams p = wavelet_layer(6, 3, rng);
  Tensor x = random_tensor({16, 6}, rng, 1.0, false);
  const auto& mix = std::get<WaveletMixerParams>(p.mixer);
  Tensor xt = layer_norm(x, p.ln1.gain, p.ln1.bias);
  Tensor xh = combine(multiscale_decompose(xt, mix.scales), mix.agg);
  Tensor x1 = add(x, xh);
  Tensor xt1 = layer_norm(x1, p.ln2.gain, p.ln2.bias);
  Tensor hidden = relu(add(matmul(xt1, p.ffn.w1), p.ffn.b1));
  Tensor y = add(x1, add(matmul(hidden, p.ffn.w2), p.ffn.b2));
  ForwardContext ctx{16, false, nullptr};
  EXPECT_EQ(max_abs_diff(lmw_encoder_layer(x, p, ctx).data(), y.data()), 0.0);
  EXPECT_EQ(max_abs_diff(lmw_decoder_layer(x, p, ctx).data(), y.data()), 0.0);
}

TEST(Layer, DropoutOnlyWhenTraining) {
  std::mt19937_64 rng(15);
  LayerParams p = wavelet_layer(4, 2, rng, 0.5);
  Tensor x = random_tensor({8, 4}, rng, 1.0, false);
  ForwardContext eval{8, false, nullptr};
  std::mt19937_64 drop(1);
  ForwardContext train{8, true, &drop};
  Tensor a = lmw_encoder_layer(x, p, eval);
  Tensor b = lmw_encoder_layer(x, p, train);
  EXPECT_GT(max_abs_diff(a.data(), b.data()), 0.0);
}

TEST(Layer, UnpaddedLengthFails) {
  std::mt19937_64 rng(16);
  LayerParams p = wavelet_layer(4, 3, rng);
  ForwardContext ctx{12, false, nullptr};
  EXPECT_THROW(lmw_encoder_layer(Tensor::zeros({12, 4}), p, ctx), ShapeError);
}

std::vector<Tensor> layer_tensors(const LayerParams& p) {
  std::vector<Tensor> out{p.ln1.gain, p.ln1.bias, p.ln2.gain, p.ln2.bias,
                          p.ffn.w1,   p.ffn.b1,   p.ffn.w2,   p.ffn.b2};
  if (const auto* w = std::get_if<WaveletMixerParams>(&p.mixer)) {
    for (const auto& s : w->scales)
      for (const auto& t : s.forward_tensors()) out.push_back(t);
    out.push_back(w->agg.gates);
    out.push_back(w->agg.w_out);
    out.push_back(w->agg.b_out);
  } else {
    const auto& a = std::get<AttentionParams>(p.mixer);
    for (const auto& t : {a.w_q, a.w_k, a.w_v, a.w_o}) out.push_back(t);
  }
  return out;
}

class LayerGradient : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradient, EncoderLayerAllParams) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  LayerParams p = wavelet_layer(4, 3, rng);
  // Perturb the defaults so no gradient sits at a symmetric point.
  for (auto* t : {&p.ln1.gain, &p.ln1.bias, &p.ln2.gain, &p.ln2.bias, &p.ffn.b1, &p.ffn.b2}) {
    *t = add(*t, random_tensor(t->shape(), rng, 0.3, false)).detach();
    t->set_requires_grad(true);
  }
  Tensor x = random_tensor({16, 4}, rng);
  Tensor w = random_tensor({16, 4}, rng, 1.0, false);
  ForwardContext ctx{8, false, nullptr};
  auto loss = [&] { return sum(mul(lmw_encoder_layer(x, p, ctx), w)); };
  auto inputs = layer_tensors(p);
  inputs.push_back(x);
  EXPECT_LT(worst_grad_error(loss, inputs), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, LayerGradient, ::testing::Range(0, 20));

TEST(Layer, EveryParameterReceivesGradient) {
  std::mt19937_64 rng(17);
  for (bool attention : {false, true}) {
    LayerParams p = wavelet_layer(8, 3, rng);
    if (attention) p.mixer = init_attention(8, 2, rng);
    Tensor x = random_tensor({16, 8}, rng, 1.0, false);
    Tensor w = random_tensor({16, 8}, rng, 1.0, false);
    ForwardContext ctx{16, false, nullptr};
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(sum(mul(lmw_encoder_layer(x, p, ctx), w)));
    }
    for (const auto& t : layer_tensors(p)) {
      ASSERT_TRUE(t.has_grad());
      double norm = 0.0;
      for (double g : t.grad()) norm += g * g;
      EXPECT_GT(norm, 0.0);
    }
  }
}

}  // namespace
}  // namespace lmwt
