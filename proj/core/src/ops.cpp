#include "lmwt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "lmwt/op_counter.hpp"

namespace lmwt {

namespace {

// Number of elements `b` repeats over when broadcast against `a`; throws
// unless b's shape equals a's or is a trailing suffix of it.
std::size_t broadcast_period(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw ShapeError(op, sa, sb);
  }
  return b.numel();
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     shape_to_string(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t period = broadcast_period("add", a, b);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t base = 0; base < n; base += period) {
    for (std::size_t i = 0; i < period; ++i) out[base + i] = pa[base + i] + pb[i];
  }
  op_counter::add(OpKind::kElementwise, n);
  return make_output(a.shape(), std::move(out), {&a, &b},
                     [a, b, period](detail::Node& o) {
                       accumulate_grad(a, o.grad);
                       if (!b.requires_grad()) return;
                       auto& gb = b.node().ensure_grad();
                       for (std::size_t base = 0; base < o.grad.size();
                            base += period) {
                         for (std::size_t i = 0; i < period; ++i)
                           gb[i] += o.grad[base + i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return add(a, scale(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t period = broadcast_period("mul", a, b);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t base = 0; base < n; base += period) {
    for (std::size_t i = 0; i < period; ++i) out[base + i] = pa[base + i] * pb[i];
  }
  op_counter::add(OpKind::kElementwise, n);
  return make_output(
      a.shape(), std::move(out), {&a, &b}, [a, b, period](detail::Node& o) {
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        const std::size_t n = o.grad.size();
        if (a.requires_grad()) {
          auto& ga = a.node().ensure_grad();
          for (std::size_t base = 0; base < n; base += period)
            for (std::size_t i = 0; i < period; ++i)
              ga[base + i] += o.grad[base + i] * pb[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.node().ensure_grad();
          for (std::size_t base = 0; base < n; base += period)
            for (std::size_t i = 0; i < period; ++i)
              gb[i] += o.grad[base + i] * pa[base + i];
        }
      });
}

Tensor scale_by_entry(const Tensor& a, const Tensor& b, std::size_t index) {
  if (index >= b.numel()) {
    throw ShapeError("scale_by_entry: index " + std::to_string(index) +
                     " out of range for " + shape_to_string(b.shape()));
  }
  const double factor = b.at(index);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  op_counter::add(OpKind::kElementwise, out.size());
  return make_output(a.shape(), std::move(out), {&a, &b},
                     [a, b, index](detail::Node& o) {
                       const double factor = b.at(index);
                       if (a.requires_grad()) {
                         auto& ga = a.node().ensure_grad();
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           ga[i] += o.grad[i] * factor;
                       }
                       if (b.requires_grad()) {
                         double acc = 0.0;
                         const double* pa = a.data().data();
                         for (std::size_t i = 0; i < o.grad.size(); ++i)
                           acc += o.grad[i] * pa[i];
                         b.node().ensure_grad()[index] += acc;
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  op_counter::add(OpKind::kElementwise, out.size());
  return make_output(a.shape(), std::move(out), {&a},
                     [a, factor](detail::Node& o) {
                       auto& ga = a.node().ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i)
                         ga[i] += o.grad[i] * factor;
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  op_counter::add(OpKind::kProjection, 2ull * m * k * n);
  return make_output(
      {m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](detail::Node& o) {
        if (a.requires_grad()) {
          // dA = dC B^T
          const auto bt = detail::transpose(b.data().data(), k, n);
          detail::gemm_acc(o.grad.data(), bt.data(),
                           a.node().ensure_grad().data(), m, n, k);
        }
        if (b.requires_grad()) {
          // dB = A^T dC
          const auto at = detail::transpose(a.data().data(), m, k);
          detail::gemm_acc(at.data(), o.grad.data(),
                           b.node().ensure_grad().data(), k, m, n);
        }
      });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_output(a.shape(), std::move(out), {&a}, [a](detail::Node& o) {
    auto& ga = a.node().ensure_grad();
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (pa[i] > 0.0) ga[i] += o.grad[i];
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.numel());
  const double* pa = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = pa + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - mx);
      total += y[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
  return make_output(a.shape(), std::move(out), {&a},
                     [a, rows, cols](detail::Node& o) {
                       auto& ga = a.node().ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* yr = o.data.data() + r * cols;
                         const double* gr = o.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c)
                           dot += gr[c] * yr[c];
                         for (std::size_t c = 0; c < cols; ++c)
                           ga[r * cols + c] += yr[c] * (gr[c] - dot);
                       }
                     });
}


Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (gain.numel() != cols || gain.rank() != 1) {
    throw ShapeError("layer_norm gain", a.shape(), gain.shape());
  }
  if (bias.numel() != cols || bias.rank() != 1) {
    throw ShapeError("layer_norm bias", a.shape(), bias.shape());
  }
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  std::vector<double> xhat(a.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(a.numel());
  const double* pa = a.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = pa + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (x[c] - mean) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * pg[c] + pb[c];
    }
  }
  op_counter::add(OpKind::kElementwise, 2ull * a.numel());
  return make_output(
      a.shape(), std::move(out), {&a, &gain, &bias},
      [a, gain, bias, rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node& o) {
        const double* pg = gain.data().data();
        const double* go = o.grad.data();
        if (gain.requires_grad()) {
          auto& gg = gain.node().ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              gg[c] += go[r * cols + c] * xhat[r * cols + c];
        }
        if (bias.requires_grad()) {
          auto& gb = bias.node().ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += go[r * cols + c];
        }
        if (!a.requires_grad()) return;
        auto& ga = a.node().ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = xhat.data() + r * cols;
          const double* g = go + r * cols;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = g[c] * pg[c];
            mean_dh += dh;
            mean_dh_h += dh * h[c];
          }
          mean_dh *= inv_n;
          mean_dh_h *= inv_n;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = g[c] * pg[c];
            ga[r * cols + c] += inv_std[r] * (dh - mean_dh - h[c] * mean_dh_h);
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_output({1}, {total}, {&a}, [a](detail::Node& o) {
    auto& ga = a.node().ensure_grad();
    for (auto& g : ga) g += o.grad[0];
  });
}

std::pair<Tensor, Tensor> split_even_odd(const Tensor& a) {
  require_rank2("split_even_odd", a);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (rows % 2 != 0) {
    throw ShapeError("split_even_odd: row count " + std::to_string(rows) +
                     " is odd; pad the sequence to an even length first");
  }
  const std::size_t half = rows / 2;
  std::vector<double> even(half * cols), odd(half * cols);
  const double* pa = a.data().data();
  for (std::size_t i = 0; i < half; ++i) {
    std::copy_n(pa + (2 * i) * cols, cols, even.data() + i * cols);
    std::copy_n(pa + (2 * i + 1) * cols, cols, odd.data() + i * cols);
  }
  auto scatter = [a, cols](std::size_t parity) {
    return [a, cols, parity](detail::Node& o) {
      auto& ga = a.node().ensure_grad();
      const std::size_t half = o.data.size() / cols;
      for (std::size_t i = 0; i < half; ++i)
        for (std::size_t c = 0; c < cols; ++c)
          ga[(2 * i + parity) * cols + c] += o.grad[i * cols + c];
    };
  };
  Tensor e = make_output({half, cols}, std::move(even), {&a}, scatter(0));
  Tensor od = make_output({half, cols}, std::move(odd), {&a}, scatter(1));
  return {e, od};
}

Tensor interleave(const Tensor& even, const Tensor& odd) {
  require_rank2("interleave", even);
  if (even.shape() != odd.shape()) {
    throw ShapeError("interleave", even.shape(), odd.shape());
  }
  const std::size_t half = even.dim(0), cols = even.dim(1);
  std::vector<double> out(2 * half * cols);
  for (std::size_t i = 0; i < half; ++i) {
    std::copy_n(even.data().data() + i * cols, cols, out.data() + 2 * i * cols);
    std::copy_n(odd.data().data() + i * cols, cols,
                out.data() + (2 * i + 1) * cols);
  }
  return make_output({2 * half, cols}, std::move(out), {&even, &odd},
                     [even, odd, half, cols](detail::Node& o) {
                       for (std::size_t parity = 0; parity < 2; ++parity) {
                         const Tensor& t = parity == 0 ? even : odd;
                         if (!t.requires_grad()) continue;
                         auto& g = t.node().ensure_grad();
                         for (std::size_t i = 0; i < half; ++i)
                           for (std::size_t c = 0; c < cols; ++c)
                             g[i * cols + c] +=
                                 o.grad[(2 * i + parity) * cols + c];
                       }
                     });
}

Tensor upsample_repeat(const Tensor& a, std::size_t factor) {
  require_rank2("upsample_repeat", a);
  if (factor < 1) throw Error("upsample_repeat: factor must be >= 1");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * factor * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < factor; ++k)
      std::copy_n(a.data().data() + r * cols, cols,
                  out.data() + (r * factor + k) * cols);
  return make_output({rows * factor, cols}, std::move(out), {&a},
                     [a, rows, cols, factor](detail::Node& o) {
                       auto& ga = a.node().ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t k = 0; k < factor; ++k)
                           for (std::size_t c = 0; c < cols; ++c)
                             ga[r * cols + c] +=
                                 o.grad[(r * factor + k) * cols + c];
                     });
}

Tensor pad_rows(const Tensor& a, std::size_t target_rows) {
  require_rank2("pad_rows", a);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (target_rows < rows) {
    throw ShapeError("pad_rows: target " + std::to_string(target_rows) +
                     " is shorter than the sequence (" + std::to_string(rows) +
                     " rows)");
  }
  std::vector<double> out(target_rows * cols, 0.0);
  std::copy(a.data().begin(), a.data().end(), out.begin());
  return make_output({target_rows, cols}, std::move(out), {&a},
                     [a](detail::Node& o) {
                       accumulate_grad(a, std::span<const double>(o.grad).first(
                                              a.numel()));
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape", a.shape(), shape);
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_output(std::move(shape), std::move(out), {&a},
                     [a](detail::Node& o) { accumulate_grad(a, o.grad); });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", a);
  const std::size_t cols = a.dim(1);
  if (begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " +
                     shape_to_string(a.shape()));
  }
  std::vector<double> out(a.data().begin() + begin * cols,
                          a.data().begin() + end * cols);
  return make_output({end - begin, cols}, std::move(out), {&a},
                     [a, begin, cols](detail::Node& o) {
                       auto& ga = a.node().ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i)
                         ga[begin * cols + i] += o.grad[i];
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  require_rank2("gather_rows", table);
  const std::size_t vocab = table.dim(0), cols = table.dim(1);
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  std::vector<double> out(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error("token id " + std::to_string(ids[i]) +
                  " out of vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(table.data().data() + ids[i] * cols, cols,
                out.data() + i * cols);
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return make_output({ids.size(), cols}, std::move(out), {&table},
                     [table, cols, kept = std::move(kept)](detail::Node& o) {
                       auto& g = table.node().ensure_grad();
                       for (std::size_t i = 0; i < kept.size(); ++i)
                         for (std::size_t c = 0; c < cols; ++c)
                           g[kept[i] * cols + c] += o.grad[i * cols + c];
                     });
}

Tensor cross_entropy_label_smoothed(const Tensor& logits,
                                    std::span<const std::int32_t> targets,
                                    double smoothing,
                                    std::span<const std::uint8_t> mask) {
  require_rank2("cross_entropy", logits);
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_to_string(logits.shape()));
  }
  if (!mask.empty() && mask.size() != rows) {
    throw ShapeError("cross_entropy: mask of length " +
                     std::to_string(mask.size()) + " for logits " +
                     shape_to_string(logits.shape()));
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw Error("cross_entropy: smoothing must lie in [0, 1)");
  }
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r)
    if (mask.empty() || mask[r]) ++counted;
  if (counted == 0) throw Error("cross_entropy: every position is masked");

  const double off = smoothing / static_cast<double>(vocab);
  const double on = 1.0 - smoothing + off;
  std::vector<double> probs(rows * vocab);
  double total = 0.0;
  const double* pl = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw Error("cross_entropy: target id " + std::to_string(t) +
                  " out of range for vocabulary " + std::to_string(vocab));
    }
    const double* z = pl + r * vocab;
    double* p = probs.data() + r * vocab;
    const double mx = *std::max_element(z, z + vocab);
    double s = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) {
      p[v] = std::exp(z[v] - mx);
      s += p[v];
    }
    const double inv = 1.0 / s;
    for (std::size_t v = 0; v < vocab; ++v) p[v] *= inv;
    if (!mask.empty() && !mask[r]) continue;
    const double lse = mx + std::log(s);
    double expected_logit = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) expected_logit += off * z[v];
    expected_logit += (on - off) * z[t];
    total += lse - expected_logit;
  }
  const double inv_count = 1.0 / static_cast<double>(counted);
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  return make_output(
      {1}, {total * inv_count}, {&logits},
      [logits, rows, vocab, on, off, inv_count, probs = std::move(probs),
       tg = std::move(tg), mk = std::move(mk)](detail::Node& o) {
        auto& g = logits.node().ensure_grad();
        const double up = o.grad[0] * inv_count;
        for (std::size_t r = 0; r < rows; ++r) {
          if (!mk.empty() && !mk[r]) continue;
          for (std::size_t v = 0; v < vocab; ++v) {
            const double q = static_cast<std::int32_t>(v) == tg[r] ? on : off;
            g[r * vocab + v] += up * (probs[r * vocab + v] - q);
          }
        }
      });
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value encountered");
    }
  }
}

}  // namespace lmwt
