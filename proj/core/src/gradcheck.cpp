#include "lmwt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lmwt {

std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_gradient: h must be positive");
  auto values = x.mutable_data();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double up = f(x);
    values[i] = original - h;
    const double down = f(x);
    values[i] = original;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("relative_error: lengths " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

}  // namespace lmwt
