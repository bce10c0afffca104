#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmwt/model.hpp"

namespace lmwt {

/// Magnitudes of one coefficient sequence, laid out dim x width.
struct CoefficientBlock {
  std::string name;  // "detail0", "detail1", ..., "approx2"
  std::size_t level = 0;
  bool approx = false;
  std::size_t width = 0;
  std::vector<double> magnitudes;
};

/// Heatmap of a wavelet mixer's decomposition: rows are feature dimensions,
/// each block spans the coefficient positions at one scale.
struct HeatmapExport {
  std::size_t dim = 0;
  std::size_t length = 0;  // padded input length
  std::vector<CoefficientBlock> blocks;
};

/// Runs the model in inference mode up to `layer` (encoder layers first,
/// then decoder layers) and decomposes that layer's normalized input with
/// its learned scale parameters. Inputs whose length is not a multiple of
/// 2^L are zero-padded after embedding.
HeatmapExport export_coefficients(const Model& model,
                                  std::span<const std::int32_t> tokens,
                                  std::size_t layer = 0);

/// Header `dim,detail0_0,...,approx{L-1}_{w-1}`; one row per dimension.
std::string heatmap_csv(const HeatmapExport& heatmap);
/// The same layout restricted to one block.
std::string heatmap_block_csv(const HeatmapExport& heatmap, std::size_t block);

}  // namespace lmwt
