#include "lmwt/coefficients.hpp"

#include <charconv>
#include <cmath>

#include "lmwt/layers.hpp"
#include "lmwt/ops.hpp"
#include "lmwt/wavelet.hpp"

namespace lmwt {

namespace {

CoefficientBlock to_block(const Tensor& coeffs, std::string name,
                          std::size_t level, bool approx) {
  CoefficientBlock b;
  b.name = std::move(name);
  b.level = level;
  b.approx = approx;
  b.width = coeffs.dim(0);
  const std::size_t dim = coeffs.dim(1);
  b.magnitudes.resize(dim * b.width);
  for (std::size_t pos = 0; pos < b.width; ++pos)
    for (std::size_t j = 0; j < dim; ++j)
      b.magnitudes[j * b.width + pos] = std::abs(coeffs.at(pos, j));
  return b;
}

}  // namespace

HeatmapExport export_coefficients(const Model& model,
                                  std::span<const std::int32_t> tokens,
                                  std::size_t layer) {
  const auto& c = model.config();
  if (c.mixer != MixerKind::kWavelet) {
    throw Error("export_coefficients: the model does not use the wavelet mixer");
  }
  const std::size_t total_layers = model.encoder().size() + model.decoder().size();
  if (layer >= total_layers) {
    throw Error("export_coefficients: layer " + std::to_string(layer) +
                " out of range (model has " + std::to_string(total_layers) + ")");
  }
  if (tokens.empty()) throw Error("export_coefficients: no tokens");

  Tensor x = embed(tokens, model.embedding(), tokens.size());
  PaddedSequence padded = pad_sequence(x, padded_length(tokens.size(), c.levels));
  ForwardContext ctx{padded.values.dim(0), false, nullptr};
  Tensor h = padded.values;
  for (std::size_t i = 0; i < layer; ++i) {
    h = i < model.encoder().size()
            ? lmw_encoder_layer(h, model.encoder()[i], ctx)
            : lmw_decoder_layer(h, model.decoder()[i - model.encoder().size()], ctx);
  }
  const LayerParams& p = layer < model.encoder().size()
                             ? model.encoder()[layer]
                             : model.decoder()[layer - model.encoder().size()];
  const auto& mixer = std::get<WaveletMixerParams>(p.mixer);
  Tensor normed = layer_norm(h, p.ln1.gain, p.ln1.bias);
  MultiScaleDecomposition dec = multiscale_decompose(normed, mixer.scales);

  HeatmapExport out;
  out.dim = c.d_model;
  out.length = ctx.seq_len;
  for (std::size_t l = 0; l < dec.levels(); ++l) {
    out.blocks.push_back(to_block(dec.details[l], "detail" + std::to_string(l), l, false));
  }
  const std::size_t last = dec.levels() - 1;
  out.blocks.push_back(
      to_block(dec.final_approx, "approx" + std::to_string(last), last, true));
  for (const auto& b : out.blocks) {
    for (double v : b.magnitudes) {
      if (!std::isfinite(v)) {
        throw NumericError("export_coefficients: non-finite coefficient in " + b.name);
      }
    }
  }
  return out;
}

namespace {

std::string blocks_csv(const HeatmapExport& heatmap,
                       std::span<const CoefficientBlock> blocks) {
  std::string out = "dim";
  for (const auto& b : blocks)
    for (std::size_t pos = 0; pos < b.width; ++pos)
      out += "," + b.name + "_" + std::to_string(pos);
  out += "\n";
  char buf[64];
  for (std::size_t j = 0; j < heatmap.dim; ++j) {
    out += std::to_string(j);
    for (const auto& b : blocks) {
      for (std::size_t pos = 0; pos < b.width; ++pos) {
        auto [ptr, ec] =
            std::to_chars(buf, buf + sizeof(buf), b.magnitudes[j * b.width + pos]);
        out += ",";
        out.append(buf, ptr);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string heatmap_csv(const HeatmapExport& heatmap) {
  return blocks_csv(heatmap, heatmap.blocks);
}

std::string heatmap_block_csv(const HeatmapExport& heatmap, std::size_t block) {
  if (block >= heatmap.blocks.size()) {
    throw Error("heatmap_block_csv: block " + std::to_string(block) +
                " out of range");
  }
  return blocks_csv(heatmap, std::span(heatmap.blocks).subspan(block, 1));
}

}  // namespace lmwt
