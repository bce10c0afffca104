#pragma once

#include <cstddef>
#include <random>

#include "lmwt/tensor.hpp"

namespace lmwt {

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); shape fan_in x fan_out.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);
/// N(0, stddev^2) entries.
Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace lmwt
