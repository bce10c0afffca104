#include "lmwt/wavelet.hpp"

#include <string>

#include "lmwt/op_counter.hpp"
#include "lmwt/ops.hpp"

namespace lmwt {

HaarCoefficients haar_forward_classical(std::span<const double> x) {
  if (x.size() % 2 != 0) {
    throw ShapeError("haar_forward: signal length " + std::to_string(x.size()) +
                     " is odd; pad it to an even length first");
  }
  HaarCoefficients out;
  const std::size_t half = x.size() / 2;
  out.approx.resize(half);
  out.detail.resize(half);
  for (std::size_t i = 0; i < half; ++i) {
    out.approx[i] = (x[2 * i] + x[2 * i + 1]) * kInvSqrt2;
    out.detail[i] = (x[2 * i] - x[2 * i + 1]) * kInvSqrt2;
  }
  return out;
}

std::vector<double> haar_inverse_classical(std::span<const double> approx,
                                           std::span<const double> detail) {
  if (approx.size() != detail.size()) {
    throw ShapeError("haar_inverse: approx has " +
                     std::to_string(approx.size()) + " values, detail has " +
                     std::to_string(detail.size()));
  }
  std::vector<double> x(2 * approx.size());
  for (std::size_t i = 0; i < approx.size(); ++i) {
    x[2 * i] = (approx[i] + detail[i]) * kInvSqrt2;
    x[2 * i + 1] = (approx[i] - detail[i]) * kInvSqrt2;
  }
  return x;
}

ClassicalDecomposition haar_decompose_classical(std::span<const double> x,
                                                std::size_t levels) {
  if (levels == 0) throw Error("haar_decompose: need at least one level");
  if (levels >= 64 || x.size() % (std::size_t{1} << levels) != 0) {
    throw ShapeError("haar_decompose: length " + std::to_string(x.size()) +
                     " is not divisible by 2^" + std::to_string(levels) +
                     "; pad the signal first");
  }
  ClassicalDecomposition dec;
  std::vector<double> current(x.begin(), x.end());
  for (std::size_t l = 0; l < levels; ++l) {
    auto c = haar_forward_classical(current);
    dec.details.push_back(std::move(c.detail));
    current = std::move(c.approx);
  }
  dec.approx = std::move(current);
  return dec;
}

std::vector<double> haar_reconstruct_classical(const ClassicalDecomposition& dec) {
  std::vector<double> current = dec.approx;
  for (std::size_t l = dec.details.size(); l-- > 0;) {
    current = haar_inverse_classical(current, dec.details[l]);
  }
  return current;
}

namespace {

Tensor vector_param(std::size_t dim, double center, double sigma,
                    std::mt19937_64& rng) {
  std::vector<double> v(dim, center);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& x : v) x += noise(rng);
  }
  return Tensor::from({dim}, std::move(v), true);
}

void check_vector(const char* name, const Tensor& t, std::size_t dim) {
  if (!t.defined() || t.rank() != 1 || t.numel() != dim) {
    throw ShapeError(std::string("scale parameter ") + name + " must have " +
                     std::to_string(dim) + " entries" +
                     (t.defined() ? ", got " + shape_to_string(t.shape())
                                  : std::string(", got none")));
  }
}

}  // namespace

ScaleParams init_scale_params(std::size_t dim, std::size_t level, double sigma,
                              std::mt19937_64& rng, bool with_inverse) {
  if (sigma < 0.0) throw Error("init_scale_params: sigma must be >= 0");
  ScaleParams p;
  p.level = level;
  p.alpha = vector_param(dim, kInvSqrt2, sigma, rng);
  p.beta = vector_param(dim, kInvSqrt2, sigma, rng);
  p.gamma = vector_param(dim, kInvSqrt2, sigma, rng);
  p.delta = vector_param(dim, -kInvSqrt2, sigma, rng);
  if (with_inverse) {
    InverseScaleParams inv;
    inv.alpha = vector_param(dim, kInvSqrt2, sigma, rng);
    inv.beta = vector_param(dim, kInvSqrt2, sigma, rng);
    inv.gamma = vector_param(dim, kInvSqrt2, sigma, rng);
    inv.delta = vector_param(dim, -kInvSqrt2, sigma, rng);
    p.inverse = std::move(inv);
  }
  return p;
}

ScaleParams classical_scale_params(std::size_t dim, std::size_t level) {
  std::mt19937_64 unused(0);
  return init_scale_params(dim, level, 0.0, unused, true);
}

std::pair<Tensor, Tensor> learnable_haar_forward(const Tensor& x,
                                                 const ScaleParams& p) {
  if (x.rank() != 2) {
    throw ShapeError("learnable_haar_forward: expected T x d, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (rows % 2 != 0) {
    throw ShapeError("learnable_haar_forward: sequence length " +
                     std::to_string(rows) +
                     " is odd; pad the sequence to an even length first");
  }
  check_vector("alpha", p.alpha, d);
  check_vector("beta", p.beta, d);
  check_vector("gamma", p.gamma, d);
  check_vector("delta", p.delta, d);

  const std::size_t half = rows / 2;
  std::vector<double> approx(half * d), detail(half * d);
  const double* __restrict px = x.data().data();
  const double* __restrict al = p.alpha.data().data();
  const double* __restrict be = p.beta.data().data();
  const double* __restrict ga = p.gamma.data().data();
  const double* __restrict de = p.delta.data().data();
  for (std::size_t i = 0; i < half; ++i) {
    const double* __restrict x0 = px + (2 * i) * d;
    const double* __restrict x1 = x0 + d;
    double* __restrict a = approx.data() + i * d;
    double* __restrict dd = detail.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      a[j] = al[j] * x0[j] + be[j] * x1[j];
      dd[j] = ga[j] * x0[j] + de[j] * x1[j];
    }
  }
  // Four multiply-accumulates per pair and dimension.
  op_counter::add(OpKind::kTransform, 2ull * 4ull * half * d);

  // Both outputs share one rule shape: out_i = w0 * x_{2i} + w1 * x_{2i+1}.
  auto rule = [x, half, d](Tensor w0, Tensor w1) {
    return [x, half, d, w0, w1](detail::Node& o) {
      const double* px = x.data().data();
      const double* g = o.grad.data();
      if (x.requires_grad()) {
        auto& gx = x.node().ensure_grad();
        const double* p0 = w0.data().data();
        const double* p1 = w1.data().data();
        for (std::size_t i = 0; i < half; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            gx[(2 * i) * d + j] += p0[j] * g[i * d + j];
            gx[(2 * i + 1) * d + j] += p1[j] * g[i * d + j];
          }
      }
      if (w0.requires_grad()) {
        auto& gw = w0.node().ensure_grad();
        for (std::size_t i = 0; i < half; ++i)
          for (std::size_t j = 0; j < d; ++j)
            gw[j] += g[i * d + j] * px[(2 * i) * d + j];
      }
      if (w1.requires_grad()) {
        auto& gw = w1.node().ensure_grad();
        for (std::size_t i = 0; i < half; ++i)
          for (std::size_t j = 0; j < d; ++j)
            gw[j] += g[i * d + j] * px[(2 * i + 1) * d + j];
      }
    };
  };
  Tensor a = make_output({half, d}, std::move(approx), {&x, &p.alpha, &p.beta},
                         rule(p.alpha, p.beta));
  Tensor dt = make_output({half, d}, std::move(detail),
                          {&x, &p.gamma, &p.delta}, rule(p.gamma, p.delta));
  return {a, dt};
}

Tensor learnable_haar_inverse(const Tensor& approx, const Tensor& detail,
                              const ScaleParams& p) {
  if (!p.inverse) {
    throw Error("learnable_haar_inverse: scale " + std::to_string(p.level) +
                " has no inverse parameters");
  }
  if (approx.shape() != detail.shape()) {
    throw ShapeError("learnable_haar_inverse", approx.shape(), detail.shape());
  }
  const auto& inv = *p.inverse;
  const std::size_t d = approx.cols();
  check_vector("alpha_inv", inv.alpha, d);
  check_vector("beta_inv", inv.beta, d);
  check_vector("gamma_inv", inv.gamma, d);
  check_vector("delta_inv", inv.delta, d);
  Tensor even = add(mul(approx, inv.alpha), mul(detail, inv.gamma));
  Tensor odd = add(mul(approx, inv.beta), mul(detail, inv.delta));
  return interleave(even, odd);
}

MultiScaleDecomposition multiscale_decompose(const Tensor& x,
                                             std::span<const ScaleParams> params) {
  const std::size_t levels = params.size();
  if (levels == 0) throw Error("multiscale_decompose: need at least one level");
  if (x.rank() != 2) {
    throw ShapeError("multiscale_decompose: expected T x d, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  if (levels >= 64 || rows % (std::size_t{1} << levels) != 0) {
    throw ShapeError("multiscale_decompose: length " + std::to_string(rows) +
                     " is not divisible by 2^" + std::to_string(levels) +
                     "; call pad_sequence first");
  }
  MultiScaleDecomposition dec;
  dec.original_length = rows;
  Tensor current = x;
  for (const auto& p : params) {
    auto [a, d] = learnable_haar_forward(current, p);
    dec.details.push_back(std::move(d));
    current = std::move(a);
  }
  dec.final_approx = std::move(current);
  return dec;
}

std::size_t padded_length(std::size_t length, std::size_t levels) {
  const std::size_t block = std::size_t{1} << levels;
  return (length + block - 1) / block * block;
}

PaddedSequence pad_sequence(const Tensor& x, std::size_t target) {
  if (x.rank() != 2) {
    throw ShapeError("pad_sequence: expected T x d, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  if (target == rows) return {x, rows};
  return {pad_rows(x, target), rows};
}

}  // namespace lmwt
