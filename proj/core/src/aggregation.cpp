#include "lmwt/aggregation.hpp"

#include <string>

#include "lmwt/init.hpp"
#include "lmwt/ops.hpp"

namespace lmwt {

AggregationParams init_agg_params(std::size_t dim, std::size_t levels,
                                  std::mt19937_64& rng) {
  AggregationParams p;
  p.gates = Tensor::full({levels + 1}, 1.0 / static_cast<double>(levels + 1),
                         true);
  p.w_out = xavier_uniform(dim, dim, rng);
  p.b_out = Tensor::zeros({dim}, true);
  return p;
}

Tensor combine(const MultiScaleDecomposition& dec, const AggregationParams& p) {
  const std::size_t levels = dec.levels();
  if (!p.gates.defined() || p.gates.numel() != levels + 1) {
    throw ShapeError("combine: " + std::to_string(levels) +
                     " levels need " + std::to_string(levels + 1) +
                     " gates, got " +
                     (p.gates.defined() ? std::to_string(p.gates.numel())
                                        : std::string("none")));
  }
  const std::size_t length = dec.original_length;
  const std::size_t d = dec.final_approx.cols();
  if (p.w_out.shape() != Shape{d, d}) {
    throw ShapeError("combine w_out", Shape{d, d}, p.w_out.shape());
  }
  auto expect_rows = [&](const Tensor& t, std::size_t factor, const char* what) {
    if (t.rank() != 2 || t.dim(0) * factor != length || t.dim(1) != d) {
      throw ShapeError(std::string("combine: ") + what + " has shape " +
                       shape_to_string(t.shape()) + ", inconsistent with T=" +
                       std::to_string(length) + ", d=" + std::to_string(d));
    }
  };

  Tensor mixed;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t factor = std::size_t{1} << (l + 1);
    expect_rows(dec.details[l], factor, "detail");
    Tensor term = scale_by_entry(upsample_repeat(dec.details[l], factor),
                                 p.gates, l);
    mixed = mixed.defined() ? add(mixed, term) : term;
  }
  const std::size_t factor = std::size_t{1} << levels;
  expect_rows(dec.final_approx, factor, "final approximation");
  Tensor approx_term =
      scale_by_entry(upsample_repeat(dec.final_approx, factor), p.gates, levels);
  mixed = mixed.defined() ? add(mixed, approx_term) : approx_term;
  return add(matmul(mixed, p.w_out), p.b_out);
}

}  // namespace lmwt
