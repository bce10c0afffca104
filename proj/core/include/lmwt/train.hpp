#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmwt/model.hpp"
#include "lmwt/tensor.hpp"

namespace lmwt {

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 32;
  std::size_t warmup = 400;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t eval_batches = 4;
  /// Evaluate every this many steps (0 = only at the end).
  std::size_t eval_every = 0;
  /// Stop once an evaluation reaches this token accuracy (0 = never).
  double target_accuracy = 0.0;
};

/// Model and training settings read from one flat `key = value` file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_string(const RunConfig& config);

/// One batch of whole sequences stacked row-wise.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;  // 1 where the position counts in the loss
};

/// Random sequences with task labels: copy (targets = inputs), reverse
/// (targets[t] = inputs[T-1-t]) or pair-sum-parity (targets[t] = sum of the
/// pair containing t, mod 2). With `seq2seq` the source fills the first
/// half, the second half holds token 0 and carries the labels.
Batch make_batch(Task task, std::size_t vocab, std::size_t seq_len,
                 std::size_t batch, std::mt19937_64& rng, bool seq2seq = false);

/// d^-0.5 * min(step^-0.5, step * warmup^-1.5); step starts at 1.
double lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t d_model = 64;
  std::size_t warmup = 400;
};

/// Adam with bias correction and the warmup / inverse-sqrt schedule.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config);

  /// Applies one update from the parameters' current gradients and returns
  /// the learning rate used. Throws if a parameter has no gradient.
  double step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct Metrics {
  double loss = 0.0;            // label-smoothed cross entropy
  double perplexity = 1.0;      // exp of the unsmoothed mean NLL
  double token_accuracy = 0.0;  // argmax == target over counted positions
  std::size_t tokens = 0;
};

/// Metrics for logits against a batch, computed from values only.
Metrics score_logits(const Tensor& logits, const Batch& batch, double smoothing);

struct LossResult {
  Tensor loss;
  Metrics metrics;
};

LossResult forward_loss(const Model& model, const Batch& batch,
                        double smoothing, bool training = false,
                        std::mt19937_64* rng = nullptr);

/// Token-weighted aggregate over batches, dropout off.
Metrics evaluate(const Model& model, std::span<const Batch> batches,
                 double smoothing);

struct TraceRow {
  std::size_t step;
  double loss;
  double token_acc;
  double lr;
};

struct EvalPoint {
  std::size_t step;
  Metrics metrics;
};

struct TrainReport {
  std::vector<TraceRow> trace;
  std::vector<EvalPoint> evals;
  Metrics initial;
  Metrics final;
  std::size_t steps_run = 0;
  Model model;
};

struct TrainOptions {
  /// When set, writes loss_trace.csv and checkpoint.json here.
  std::optional<std::filesystem::path> out_dir;
  /// Called after every evaluation.
  std::function<void(const EvalPoint&)> on_eval;
};

/// Deterministic given the configs: model init, data and dropout draw from
/// independent streams derived from `train.seed`.
TrainReport train(const ModelConfig& model_config, const TrainConfig& train,
                  const TrainOptions& options = {});

/// The fixed held-out batches train() evaluates on.
std::vector<Batch> evaluation_batches(const ModelConfig& model_config,
                                      const TrainConfig& train);

/// Mean training loss over the `window` steps ending at `step` (1-based).
double moving_average_loss(std::span<const TraceRow> trace, std::size_t step,
                           std::size_t window = 100);

/// Header `step,loss,token_acc,lr`.
std::string loss_trace_csv(std::span<const TraceRow> trace);
void write_loss_trace_csv(const std::filesystem::path& path,
                          std::span<const TraceRow> trace);

/// Entropy of the smoothed target distribution: the floor of the loss.
double smoothed_target_entropy(std::size_t vocab, double smoothing);

}  // namespace lmwt
