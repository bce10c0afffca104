#include "lmwt/model.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "lmwt/init.hpp"
#include "lmwt/ops.hpp"
#include "lmwt/wavelet.hpp"

namespace lmwt {

std::string to_string(MixerKind kind) {
  return kind == MixerKind::kWavelet ? "wavelet" : "attention";
}

std::string to_string(Task task) {
  switch (task) {
    case Task::kCopy:
      return "copy";
    case Task::kReverse:
      return "reverse";
    case Task::kPairSumParity:
      return "pair-sum-parity";
  }
  return "unknown";
}

MixerKind parse_mixer(const std::string& text) {
  if (text == "wavelet") return MixerKind::kWavelet;
  if (text == "attention") return MixerKind::kAttention;
  throw Error("unknown mixer '" + text + "' (expected wavelet or attention)");
}

Task parse_task(const std::string& text) {
  if (text == "copy") return Task::kCopy;
  if (text == "reverse") return Task::kReverse;
  if (text == "pair-sum-parity") return Task::kPairSumParity;
  throw Error("unknown task '" + text +
              "' (expected copy, reverse or pair-sum-parity)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("config: " + msg); };
  if (vocab < 2) fail("vocab must be at least 2");
  if (seq_len < 2) fail("seq_len must be at least 2");
  if (d_model == 0 || d_model % 2 != 0) fail("d_model must be positive and even");
  if (d_ff == 0) fail("d_ff must be positive");
  if (encoder_layers + decoder_layers == 0) fail("need at least one layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (sigma_init < 0.0) fail("sigma_init must be >= 0");
  if (seq2seq && seq_len % 2 != 0) fail("seq2seq needs an even seq_len");
  if (mixer == MixerKind::kWavelet) {
    if (levels == 0 || levels >= 32) fail("levels must be in 1..31");
    if (seq_len % (std::size_t{1} << levels) != 0) {
      fail("seq_len " + std::to_string(seq_len) + " must be divisible by 2^" +
           std::to_string(levels) + " for the wavelet mixer");
    }
  } else {
    if (heads == 0 || d_model % heads != 0) {
      fail("d_model " + std::to_string(d_model) + " must be divisible by " +
           std::to_string(heads) + " heads");
    }
  }
}

namespace {

LayerParams make_layer(const ModelConfig& c, std::mt19937_64& rng) {
  LayerParams p;
  p.ln1 = init_layer_norm(c.d_model);
  if (c.mixer == MixerKind::kWavelet) {
    p.mixer = init_wavelet_mixer(c.d_model, c.levels, c.sigma_init, rng,
                                 c.share_scales);
  } else {
    AttentionParams a = init_attention(c.d_model, c.heads, rng);
    a.causal = c.causal_attention;
    p.mixer = std::move(a);
  }
  p.ln2 = init_layer_norm(c.d_model);
  p.ffn = init_ffn(c.d_model, c.d_ff, rng);
  p.dropout_p = c.dropout;
  return p;
}

void append_layer(std::vector<NamedParam>& out, const std::string& prefix,
                  const LayerParams& p) {
  out.push_back({prefix + ".ln1.gain", p.ln1.gain});
  out.push_back({prefix + ".ln1.bias", p.ln1.bias});
  if (const auto* w = std::get_if<WaveletMixerParams>(&p.mixer)) {
    for (const auto& s : w->scales) {
      const std::string sp = prefix + ".mixer.scale." + std::to_string(s.level);
      out.push_back({sp + ".alpha", s.alpha});
      out.push_back({sp + ".beta", s.beta});
      out.push_back({sp + ".gamma", s.gamma});
      out.push_back({sp + ".delta", s.delta});
    }
    out.push_back({prefix + ".mixer.agg.gates", w->agg.gates});
    out.push_back({prefix + ".mixer.agg.w_out", w->agg.w_out});
    out.push_back({prefix + ".mixer.agg.b_out", w->agg.b_out});
  } else {
    const auto& a = std::get<AttentionParams>(p.mixer);
    out.push_back({prefix + ".mixer.w_q", a.w_q});
    out.push_back({prefix + ".mixer.w_k", a.w_k});
    out.push_back({prefix + ".mixer.w_v", a.w_v});
    out.push_back({prefix + ".mixer.w_o", a.w_o});
  }
  out.push_back({prefix + ".ln2.gain", p.ln2.gain});
  out.push_back({prefix + ".ln2.bias", p.ln2.bias});
  out.push_back({prefix + ".ffn.w1", p.ffn.w1});
  out.push_back({prefix + ".ffn.b1", p.ffn.b1});
  out.push_back({prefix + ".ffn.w2", p.ffn.w2});
  out.push_back({prefix + ".ffn.b2", p.ffn.b2});
}

std::string group_of(const std::string& name) {
  // "enc.0.mixer.scale.1.alpha" -> "enc.0.mixer"; "head.weight" -> "head"
  const auto first = name.find('.');
  const std::string root = name.substr(0, first);
  if (root != "enc" && root != "dec") return root;
  const auto second = name.find('.', first + 1);
  const auto third = name.find('.', second + 1);
  return name.substr(0, third);
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  embedding_ = normal_tensor({config_.vocab, config_.d_model}, 1.0, rng);
  for (std::size_t i = 0; i < config_.encoder_layers; ++i)
    encoder_.push_back(make_layer(config_, rng));
  for (std::size_t i = 0; i < config_.decoder_layers; ++i)
    decoder_.push_back(make_layer(config_, rng));
  head_w_ = xavier_uniform(config_.d_model, config_.vocab, rng);
  head_b_ = Tensor::zeros({config_.vocab}, true);
}

Tensor Model::forward_embedded(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  for (const auto& layer : encoder_) h = lmw_encoder_layer(h, layer, ctx);
  for (const auto& layer : decoder_) h = lmw_decoder_layer(h, layer, ctx);
  return h;
}

Tensor Model::head(const Tensor& hidden) const {
  return add(matmul(hidden, head_w_), head_b_);
}

Tensor Model::forward(std::span<const std::int32_t> tokens,
                      const ForwardContext& ctx) const {
  Tensor x = embed(tokens, embedding_, ctx.seq_len);
  return head(forward_embedded(x, ctx));
}

std::vector<NamedParam> Model::named_parameters() const {
  std::vector<NamedParam> all;
  all.push_back({"embed.weight", embedding_});
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    append_layer(all, "enc." + std::to_string(i), encoder_[i]);
  for (std::size_t i = 0; i < decoder_.size(); ++i)
    append_layer(all, "dec." + std::to_string(i), decoder_[i]);
  all.push_back({"head.weight", head_w_});
  all.push_back({"head.bias", head_b_});

  std::vector<NamedParam> unique;
  std::set<const detail::Node*> seen;
  for (auto& p : all) {
    if (seen.insert(&p.tensor.node()).second) unique.push_back(std::move(p));
  }
  return unique;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::map<std::string, std::size_t> Model::parameter_groups() const {
  std::map<std::string, std::size_t> groups;
  for (const auto& p : named_parameters()) {
    groups[group_of(p.name)] += p.tensor.numel();
  }
  return groups;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

std::vector<std::int32_t> decode_causal_pad(const Model& model,
                                            std::vector<std::int32_t> prefix,
                                            std::size_t new_tokens) {
  if (prefix.empty()) throw Error("decode_causal_pad: empty prefix");
  const auto& c = model.config();
  const std::size_t levels = c.mixer == MixerKind::kWavelet ? c.levels : 0;
  for (std::size_t step = 0; step < new_tokens; ++step) {
    const std::size_t length = prefix.size();
    Tensor x = embed(prefix, model.embedding(), length);
    const std::size_t target = std::max<std::size_t>(
        padded_length(length, levels), 2);
    PaddedSequence padded = pad_sequence(x, target);
    ForwardContext ctx{target, false, nullptr};
    Tensor logits = model.head(model.forward_embedded(padded.values, ctx));
    const std::size_t vocab = logits.cols();
    const auto row = logits.data().subspan((length - 1) * vocab, vocab);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    prefix.push_back(static_cast<std::int32_t>(best));
  }
  return prefix;
}

std::string checkpoint_to_string(const Model& model) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.named_parameters()) {
    params[p.name] = {{"shape", p.tensor.shape()},
                      {"values", std::vector<double>(p.tensor.data().begin(),
                                                     p.tensor.data().end())}};
  }
  nlohmann::json doc = {
      {"format", "lmwt-checkpoint"}, {"version", 1}, {"params", params}};
  return doc.dump() + "\n";
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(model);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model checkpoint_from_string(const std::string& text, const ModelConfig& config) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "lmwt-checkpoint" || doc.value("version", 0) != 1) {
    throw Error("checkpoint: unsupported format or version");
  }
  const auto& params = doc.at("params");
  Model model(config, 0);
  auto named = model.named_parameters();
  if (params.size() != named.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(params.size()) +
                     " tensors, config expects " + std::to_string(named.size()));
  }
  for (auto& p : named) {
    if (!params.contains(p.name)) {
      throw ShapeError("checkpoint is missing parameter " + p.name);
    }
    const auto& entry = params.at(p.name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != p.tensor.shape()) {
      throw ShapeError("checkpoint " + p.name, p.tensor.shape(), shape);
    }
    const auto values = entry.at("values").get<std::vector<double>>();
    if (values.size() != p.tensor.numel()) {
      throw ShapeError("checkpoint " + p.name + ": wrong value count");
    }
    std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path,
                      const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_string(buffer.str(), config);
}

}  // namespace lmwt
