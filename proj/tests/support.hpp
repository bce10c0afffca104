#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "lmwt/gradcheck.hpp"
#include "lmwt/tensor.hpp"

namespace lmwt::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0,
                            bool requires_grad = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> analytic_grad(const Tensor& t) {
  if (!t.has_grad()) return std::vector<double>(t.numel(), 0.0);
  return {t.grad().begin(), t.grad().end()};
}

/// Largest relative error between taped and central-difference gradients
/// of `loss` over every tensor in `inputs`.
inline double worst_grad_error(const std::function<Tensor()>& loss,
                               std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    const auto analytic = analytic_grad(t);
    const auto numeric = finite_difference_gradient(
        [&](const Tensor&) { return loss().item(); }, t, h);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace lmwt::testing
