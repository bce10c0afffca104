#include "lmwt/init.hpp"

#include <cmath>

namespace lmwt {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace lmwt
