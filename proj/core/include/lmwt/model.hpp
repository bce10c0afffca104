#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmwt/layers.hpp"
#include "lmwt/tensor.hpp"

namespace lmwt {

enum class MixerKind { kWavelet, kAttention };
enum class Task { kCopy, kReverse, kPairSumParity };

std::string to_string(MixerKind kind);
std::string to_string(Task task);
MixerKind parse_mixer(const std::string& text);
Task parse_task(const std::string& text);

struct ModelConfig {
  std::size_t vocab = 16;
  std::size_t seq_len = 32;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t heads = 4;  // attention mixer only
  std::size_t levels = 3;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 0;
  double dropout = 0.1;
  MixerKind mixer = MixerKind::kWavelet;
  Task task = Task::kCopy;
  double sigma_init = 0.01;
  bool share_scales = false;
  bool causal_attention = false;
  /// Source in the first half of each sequence, answer slots in the second.
  bool seq2seq = false;

  /// Throws Error naming the first violated constraint.
  void validate() const;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Token embedding, a stack of encoder layers followed by decoder layers,
/// and a linear output head over the vocabulary.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Logits of shape (batch * seq_len) x vocab. `ctx.seq_len` is the
  /// length of each stacked sequence.
  Tensor forward(std::span<const std::int32_t> tokens,
                 const ForwardContext& ctx) const;
  /// Runs the layers on an embedded input of shape (batch * seq_len) x d.
  Tensor forward_embedded(const Tensor& x, const ForwardContext& ctx) const;
  Tensor head(const Tensor& hidden) const;

  /// Every trainable tensor, each storage listed once, in a fixed order.
  std::vector<NamedParam> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Parameter counts keyed by sub-layer ("enc.0.mixer", "head", ...).
  std::map<std::string, std::size_t> parameter_groups() const;
  std::size_t parameter_count() const;

  const Tensor& embedding() const { return embedding_; }
  const std::vector<LayerParams>& encoder() const { return encoder_; }
  const std::vector<LayerParams>& decoder() const { return decoder_; }

 private:
  ModelConfig config_;
  Tensor embedding_;
  std::vector<LayerParams> encoder_;
  std::vector<LayerParams> decoder_;
  Tensor head_w_, head_b_;
};

/// Greedy generation that stays causal with a non-causal mixer: each step
/// re-runs the model on the current prefix padded with zero rows to a
/// multiple of 2^L and reads the logits at the last real position.
std::vector<std::int32_t> decode_causal_pad(const Model& model,
                                            std::vector<std::int32_t> prefix,
                                            std::size_t new_tokens);

// Checkpoint: {"format": "lmwt-checkpoint", "version": 1, "params":
// {name: {"shape": [...], "values": [...]}}} with f64 decimal values.
std::string checkpoint_to_string(const Model& model);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Rebuilds a model for `config` and overwrites every parameter from the
/// document; names and shapes must match exactly.
Model load_checkpoint(const std::filesystem::path& path,
                      const ModelConfig& config);
Model checkpoint_from_string(const std::string& text, const ModelConfig& config);

}  // namespace lmwt
