#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lmwt/tensor.hpp"

namespace lmwt {

/// Central-difference gradient of a scalar function.
///
/// Perturbs each element of `x` in place by +-h, evaluates `f(x)` and
/// restores the original value, so `f` may read `x` through any alias (for
/// example a model parameter). `f` must be deterministic.
std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor& x, double h = 1e-5);

/// ||a - b||_2 / max(||a||_2, ||b||_2), or 0 when both are (near) zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace lmwt
