#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lmwt/ops.hpp"
#include "lmwt/train.hpp"
#include "support.hpp"

namespace lmwt {
namespace {

using testing::max_abs_diff;

ModelConfig tiny_config(MixerKind mixer = MixerKind::kWavelet) {
  ModelConfig c;
  c.vocab = 6;
  c.seq_len = 8;
  c.d_model = 8;
  c.d_ff = 16;
  c.heads = 2;
  c.levels = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.mixer = mixer;
  return c;
}

TrainConfig tiny_train(std::size_t steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch = 4;
  t.warmup = 10;
  t.eval_batches = 2;
  return t;
}

TEST(Config, Validation) {
  ModelConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.seq_len = 6;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config(MixerKind::kAttention);
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c.seq_len = 6;
  c.heads = 2;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParseRoundTrip) {
  RunConfig rc;
  rc.model = tiny_config(MixerKind::kAttention);
  rc.model.task = Task::kPairSumParity;
  rc.train = tiny_train(77);
  rc.train.seed = 5;
  const std::string text = run_config_to_string(rc);
  RunConfig back = parse_run_config(text);
  EXPECT_EQ(run_config_to_string(back), text);
  EXPECT_EQ(back.model.mixer, MixerKind::kAttention);
  EXPECT_EQ(back.train.steps, 77u);
}

TEST(Config, ParseErrors) {
  EXPECT_THROW(parse_run_config("vocab = 16\nbogus = 1\n"), Error);
  EXPECT_THROW(parse_run_config("vocab 16\n"), Error);
  EXPECT_THROW(parse_run_config("vocab = sixteen\n"), Error);
  EXPECT_THROW(parse_run_config("mixer = conv\n"), Error);
  RunConfig rc = parse_run_config("# comment\n\n levels = 2  # trailing\n");
  EXPECT_EQ(rc.model.levels, 2u);
}

TEST(Schedule, KnownValues) {
  EXPECT_NEAR(lr_schedule(4000, 512, 4000), 6.988e-4, 1e-7);
  EXPECT_DOUBLE_EQ(lr_schedule(400, 64, 400), 1.0 / std::sqrt(64.0 * 400.0));
  EXPECT_THROW(lr_schedule(0, 64, 400), Error);
}

TEST(Schedule, WarmupThenDecay) {
  double prev = 0.0;
  for (std::size_t s = 1; s <= 400; ++s) {
    const double lr = lr_schedule(s, 64, 400);
    EXPECT_GE(lr, prev);
    prev = lr;
  }
  for (std::size_t s = 401; s <= 2000; ++s) {
    const double lr = lr_schedule(s, 64, 400);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Adam, ZeroGradLeavesParams) {
  Tensor w = Tensor::from({3}, {1, 2, 3}, true);
  AdamOptimizer opt({w}, {});
  w.node().ensure_grad();
  opt.step();
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()),
            (std::vector<double>{1, 2, 3}));
}

TEST(Adam, MissingGradientIsAnError) {
  Tensor w = Tensor::from({1}, {1.0}, true);
  AdamOptimizer opt({w}, {});
  EXPECT_THROW(opt.step(), Error);
}

TEST(Adam, ConstantGradientStepsBySignedLr) {
  Tensor w = Tensor::from({2}, {0.0, 0.0}, true);
  AdamOptimizer opt({w}, {0.9, 0.98, 1e-9, 64, 400});
  double before0 = 0.0, lr = 0.0;
  for (int i = 0; i < 200; ++i) {
    w.node().grad = {0.5, -3.0};
    before0 = w.at(0);
    const double before1 = w.at(1);
    lr = opt.step();
    EXPECT_NEAR(w.at(0) - before0, -lr, 1e-6 * lr);
    EXPECT_NEAR(w.at(1) - before1, lr, 1e-6 * lr);
  }
  EXPECT_EQ(opt.step_count(), 200u);
  EXPECT_EQ(opt.first_moments()[0].size(), 2u);
}

TEST(Adam, ReducesQuadratic) {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  AdamOptimizer opt({x}, {0.9, 0.98, 1e-9, 4, 1});
  auto f = [&] { return sum(mul(x, x)); };
  const double before = f().item();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(f());
  }
  opt.step();
  EXPECT_LT(f().item(), before);
}

TEST(Batch, CopyTargetsEqualInputs) {
  std::mt19937_64 rng(0);
  Batch b = make_batch(Task::kCopy, 16, 32, 4, rng);
  EXPECT_EQ(b.inputs, b.targets);
  EXPECT_EQ(b.inputs.size(), 128u);
  for (auto m : b.mask) EXPECT_EQ(m, 1);
  for (auto t : b.inputs) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, 16);
  }
}

TEST(Batch, ReverseAndParityLabels) {
  std::mt19937_64 rng(1);
  const std::size_t t = 8;
  Batch r = make_batch(Task::kReverse, 10, t, 3, rng);
  Batch p = make_batch(Task::kPairSumParity, 10, t, 3, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < t; ++i) {
      EXPECT_EQ(r.targets[s * t + i], r.inputs[s * t + t - 1 - i]);
      const std::size_t base = s * t + 2 * (i / 2);
      EXPECT_EQ(p.targets[s * t + i], (p.inputs[base] + p.inputs[base + 1]) % 2);
    }
  }
}

TEST(Batch, PalindromeReversesToItself) {
  std::vector<std::int32_t> pal{1, 2, 3, 3, 2, 1};
  std::vector<std::int32_t> rev(pal.rbegin(), pal.rend());
  EXPECT_EQ(pal, rev);
  std::mt19937_64 rng(2);
  Batch r = make_batch(Task::kReverse, 4, 6, 50, rng);
  for (std::size_t s = 0; s < 50; ++s) {
    std::vector<std::int32_t> in(r.inputs.begin() + s * 6, r.inputs.begin() + s * 6 + 6);
    if (std::equal(in.begin(), in.end(), in.rbegin())) {
      EXPECT_TRUE(std::equal(in.begin(), in.end(), r.targets.begin() + s * 6));
    }
  }
}

TEST(Batch, Seq2SeqLayout) {
  std::mt19937_64 rng(3);
  const std::size_t t = 8;
  Batch b = make_batch(Task::kReverse, 10, t, 2, rng, true);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < t / 2; ++i) {
      EXPECT_EQ(b.mask[s * t + i], 0);
      EXPECT_EQ(b.mask[s * t + t / 2 + i], 1);
      EXPECT_EQ(b.inputs[s * t + t / 2 + i], 0);
      EXPECT_EQ(b.targets[s * t + t / 2 + i], b.inputs[s * t + t / 2 - 1 - i]);
    }
  }
}

TEST(Metrics, UniformLogits) {
  std::mt19937_64 rng(4);
  Batch b = make_batch(Task::kCopy, 16, 8, 2, rng);
  Metrics m = score_logits(Tensor::zeros({16, 16}), b, 0.1);
  EXPECT_NEAR(m.loss, std::log(16.0), 1e-12);
  EXPECT_NEAR(m.perplexity, 16.0, 1e-9);
  EXPECT_EQ(m.tokens, 16u);
}

TEST(Metrics, ConfidentLogitsAreAccurate) {
  std::mt19937_64 rng(5);
  Batch b = make_batch(Task::kCopy, 5, 4, 3, rng);
  std::vector<double> logits(12 * 5, 0.0);
  for (std::size_t i = 0; i < 12; ++i) logits[i * 5 + b.targets[i]] = 30.0;
  Metrics m = score_logits(Tensor::from({12, 5}, logits), b, 0.1);
  EXPECT_DOUBLE_EQ(m.token_accuracy, 1.0);
  EXPECT_GE(m.perplexity, 1.0);
  EXPECT_GE(m.loss, smoothed_target_entropy(5, 0.1) - 1e-12);
}

TEST(Model, ForwardShapeAndDeterminism) {
  Model a(tiny_config(), 3), b(tiny_config(), 3);
  std::mt19937_64 rng(0);
  Batch batch = make_batch(Task::kCopy, 6, 8, 2, rng);
  ForwardContext ctx{8, false, nullptr};
  Tensor la = a.forward(batch.inputs, ctx), lb = b.forward(batch.inputs, ctx);
  EXPECT_EQ(la.shape(), (Shape{16, 6}));
  EXPECT_EQ(max_abs_diff(la.data(), lb.data()), 0.0);
}

TEST(Model, MixerSwapOnlyChangesMixerGroups) {
  ModelConfig w = tiny_config(MixerKind::kWavelet);
  ModelConfig a = tiny_config(MixerKind::kAttention);
  auto gw = Model(w, 0).parameter_groups();
  auto ga = Model(a, 0).parameter_groups();
  ASSERT_EQ(gw.size(), ga.size());
  for (const auto& [name, count] : gw) {
    ASSERT_TRUE(ga.count(name)) << name;
    if (name.find(".mixer") == std::string::npos) {
      EXPECT_EQ(count, ga.at(name)) << name;
    }
  }
  EXPECT_NE(gw.at("enc.0.mixer"), ga.at("enc.0.mixer"));
}

TEST(Model, SharedScalesListedOnce) {
  ModelConfig c = tiny_config();
  ModelConfig s = c;
  s.share_scales = true;
  const std::size_t per_level = 4 * c.d_model;
  EXPECT_EQ(Model(c, 0).parameter_count() - Model(s, 0).parameter_count(),
            (c.levels - 1) * per_level * (c.encoder_layers + c.decoder_layers));
}

TEST(Model, GradientsReachEveryScale) {
  Model m(tiny_config(), 1);
  std::mt19937_64 rng(1);
  Batch b = make_batch(Task::kCopy, 6, 8, 2, rng);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(forward_loss(m, b, 0.1).loss);
  }
  for (const auto& p : m.named_parameters()) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p.name;
  }
}

TEST(Model, CausalPadDecodeIgnoresFuture) {
  ModelConfig c = tiny_config();
  c.decoder_layers = 0;
  Model m(c, 2);
  std::vector<std::int32_t> prefix{1, 2, 3};
  auto out = decode_causal_pad(m, prefix, 4);
  ASSERT_EQ(out.size(), 7u);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), out.begin()));
  for (auto t : out) EXPECT_LT(t, 6);
  // Each generated token depends only on the tokens before it.
  auto again = decode_causal_pad(m, std::vector<std::int32_t>(out.begin(), out.begin() + 5), 2);
  EXPECT_EQ(again, out);
}

TEST(Checkpoint, RoundTripIsExact) {
  Model m(tiny_config(), 4);
  const std::string text = checkpoint_to_string(m);
  Model back = checkpoint_from_string(text, tiny_config());
  EXPECT_EQ(checkpoint_to_string(back), text);
  auto a = m.named_parameters(), b = back.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(max_abs_diff(a[i].tensor.data(), b[i].tensor.data()), 0.0) << a[i].name;
}

TEST(Checkpoint, RejectsMismatchedConfig) {
  Model m(tiny_config(), 4);
  ModelConfig other = tiny_config();
  other.d_model = 16;
  EXPECT_THROW(checkpoint_from_string(checkpoint_to_string(m), other), ShapeError);
  EXPECT_THROW(checkpoint_from_string("{not json", tiny_config()), Error);
  EXPECT_THROW(checkpoint_from_string("{\"format\":\"x\"}", tiny_config()), Error);
}

TEST(Train, ZeroStepsReportsInitialOnly) {
  TrainReport r = train(tiny_config(), tiny_train(0));
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.steps_run, 0u);
  EXPECT_EQ(r.final.loss, r.initial.loss);
}

TEST(Train, SameSeedSameArtifacts) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(::testing::TempDir()) / "lmwt_train_det";
  fs::remove_all(root);
  TrainConfig t = tiny_train(15);
  t.eval_every = 5;
  ModelConfig c = tiny_config();
  c.dropout = 0.2;
  TrainOptions o1, o2;
  o1.out_dir = root / "a";
  o2.out_dir = root / "b";
  TrainReport r1 = train(c, t, o1);
  TrainReport r2 = train(c, t, o2);
  EXPECT_EQ(loss_trace_csv(r1.trace), loss_trace_csv(r2.trace));
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(root / "a" / "checkpoint.json"), slurp(root / "b" / "checkpoint.json"));
  EXPECT_EQ(slurp(root / "a" / "loss_trace.csv"), slurp(root / "b" / "loss_trace.csv"));
  EXPECT_EQ(slurp(root / "a" / "loss_trace.csv").rfind("step,loss,token_acc,lr\n", 0), 0u);
  EXPECT_EQ(r1.evals.size(), 3u);
  t.seed = 1;
  TrainReport r3 = train(c, t);
  EXPECT_NE(loss_trace_csv(r1.trace), loss_trace_csv(r3.trace));
}

TEST(Train, StopsAtTargetAccuracy) {
  TrainConfig t = tiny_train(50);
  t.eval_every = 1;
  t.target_accuracy = 1e-9;
  TrainReport r = train(tiny_config(), t);
  EXPECT_EQ(r.steps_run, 1u);
}

TEST(Evaluate, RepeatableAndRejectsEmpty) {
  Model m(tiny_config(), 0);
  auto batches = evaluation_batches(tiny_config(), tiny_train(1));
  Metrics a = evaluate(m, batches, 0.1), b = evaluate(m, batches, 0.1);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_GE(a.perplexity, 1.0);
  EXPECT_THROW(evaluate(m, {}, 0.1), Error);
}

TEST(Trace, MovingAverage) {
  std::vector<TraceRow> trace;
  for (std::size_t s = 1; s <= 10; ++s) trace.push_back({s, double(s), 0.0, 0.0});
  EXPECT_DOUBLE_EQ(moving_average_loss(trace, 10, 4), (7 + 8 + 9 + 10) / 4.0);
  EXPECT_DOUBLE_EQ(moving_average_loss(trace, 2, 4), 1.5);
  EXPECT_THROW(moving_average_loss(trace, 11, 4), Error);
}

}  // namespace
}  // namespace lmwt
