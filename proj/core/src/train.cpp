#include "lmwt/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lmwt/ops.hpp"

namespace lmwt {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error("config: " + key + " expects a non-negative integer, got '" +
                v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw Error("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: " + key + " expects true or false, got '" + v + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), which};
  return std::mt19937_64(seq);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  ModelConfig& m = rc.model;
  TrainConfig& t = rc.train;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) +
                  ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "vocab") m.vocab = parse_size(key, v);
    else if (key == "seq_len") m.seq_len = parse_size(key, v);
    else if (key == "d_model") m.d_model = parse_size(key, v);
    else if (key == "d_ff") m.d_ff = parse_size(key, v);
    else if (key == "heads") m.heads = parse_size(key, v);
    else if (key == "levels") m.levels = parse_size(key, v);
    else if (key == "encoder_layers") m.encoder_layers = parse_size(key, v);
    else if (key == "decoder_layers") m.decoder_layers = parse_size(key, v);
    else if (key == "dropout") m.dropout = parse_real(key, v);
    else if (key == "mixer") m.mixer = parse_mixer(v);
    else if (key == "task") m.task = parse_task(v);
    else if (key == "sigma_init") m.sigma_init = parse_real(key, v);
    else if (key == "share_scales") m.share_scales = parse_bool(key, v);
    else if (key == "causal_attention") m.causal_attention = parse_bool(key, v);
    else if (key == "seq2seq") m.seq2seq = parse_bool(key, v);
    else if (key == "steps") t.steps = parse_size(key, v);
    else if (key == "batch") t.batch = parse_size(key, v);
    else if (key == "warmup") t.warmup = parse_size(key, v);
    else if (key == "label_smoothing") t.label_smoothing = parse_real(key, v);
    else if (key == "seed") t.seed = parse_size(key, v);
    else if (key == "beta1") t.beta1 = parse_real(key, v);
    else if (key == "beta2") t.beta2 = parse_real(key, v);
    else if (key == "eps") t.eps = parse_real(key, v);
    else if (key == "eval_batches") t.eval_batches = parse_size(key, v);
    else if (key == "eval_every") t.eval_every = parse_size(key, v);
    else if (key == "target_accuracy") t.target_accuracy = parse_real(key, v);
    else throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  m.validate();
  if (t.batch == 0) throw Error("config: batch must be positive");
  if (t.warmup == 0) throw Error("config: warmup must be positive");
  if (t.eval_batches == 0) throw Error("config: eval_batches must be positive");
  if (!(t.label_smoothing >= 0.0 && t.label_smoothing < 1.0)) {
    throw Error("config: label_smoothing must lie in [0, 1)");
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_to_string(const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  const TrainConfig& t = rc.train;
  std::ostringstream os;
  os << "vocab = " << m.vocab << "\n"
     << "seq_len = " << m.seq_len << "\n"
     << "d_model = " << m.d_model << "\n"
     << "d_ff = " << m.d_ff << "\n"
     << "heads = " << m.heads << "\n"
     << "levels = " << m.levels << "\n"
     << "encoder_layers = " << m.encoder_layers << "\n"
     << "decoder_layers = " << m.decoder_layers << "\n"
     << "dropout = " << format_real(m.dropout) << "\n"
     << "mixer = " << to_string(m.mixer) << "\n"
     << "task = " << to_string(m.task) << "\n"
     << "sigma_init = " << format_real(m.sigma_init) << "\n"
     << "share_scales = " << (m.share_scales ? "true" : "false") << "\n"
     << "causal_attention = " << (m.causal_attention ? "true" : "false") << "\n"
     << "seq2seq = " << (m.seq2seq ? "true" : "false") << "\n"
     << "steps = " << t.steps << "\n"
     << "batch = " << t.batch << "\n"
     << "warmup = " << t.warmup << "\n"
     << "label_smoothing = " << format_real(t.label_smoothing) << "\n"
     << "seed = " << t.seed << "\n"
     << "beta1 = " << format_real(t.beta1) << "\n"
     << "beta2 = " << format_real(t.beta2) << "\n"
     << "eps = " << format_real(t.eps) << "\n"
     << "eval_batches = " << t.eval_batches << "\n"
     << "eval_every = " << t.eval_every << "\n"
     << "target_accuracy = " << format_real(t.target_accuracy) << "\n";
  return os.str();
}

Batch make_batch(Task task, std::size_t vocab, std::size_t seq_len,
                 std::size_t batch, std::mt19937_64& rng, bool seq2seq) {
  if (vocab < 2 || seq_len < 2 || batch == 0) {
    throw Error("make_batch: need vocab >= 2, seq_len >= 2 and batch >= 1");
  }
  if (seq2seq && seq_len % 2 != 0) {
    throw Error("make_batch: seq2seq needs an even sequence length");
  }
  const std::size_t source_len = seq2seq ? seq_len / 2 : seq_len;
  if (task == Task::kPairSumParity && source_len % 2 != 0) {
    throw Error("make_batch: pair-sum-parity needs an even source length");
  }
  Batch b;
  b.size = batch;
  b.seq_len = seq_len;
  b.inputs.resize(batch * seq_len);
  b.targets.resize(batch * seq_len);
  b.mask.assign(batch * seq_len, 1);
  std::uniform_int_distribution<std::int32_t> token(
      0, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> source(source_len), labels(source_len);
  for (std::size_t s = 0; s < batch; ++s) {
    for (auto& x : source) x = token(rng);
    for (std::size_t t = 0; t < source_len; ++t) {
      switch (task) {
        case Task::kCopy:
          labels[t] = source[t];
          break;
        case Task::kReverse:
          labels[t] = source[source_len - 1 - t];
          break;
        case Task::kPairSumParity: {
          const std::size_t first = 2 * (t / 2);
          labels[t] = (source[first] + source[first + 1]) % 2;
          break;
        }
      }
    }
    std::int32_t* in = b.inputs.data() + s * seq_len;
    std::int32_t* tg = b.targets.data() + s * seq_len;
    std::uint8_t* mk = b.mask.data() + s * seq_len;
    if (!seq2seq) {
      std::copy(source.begin(), source.end(), in);
      std::copy(labels.begin(), labels.end(), tg);
    } else {
      std::copy(source.begin(), source.end(), in);
      std::fill(in + source_len, in + seq_len, 0);
      std::fill(tg, tg + source_len, 0);
      std::fill(mk, mk + source_len, 0);
      std::copy(labels.begin(), labels.end(), tg + source_len);
    }
  }
  return b;
}

double lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw Error("lr_schedule: steps are numbered from 1");
  if (warmup == 0 || d_model == 0) {
    throw Error("lr_schedule: warmup and d_model must be positive");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double AdamOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw Error("adam: parameter " + std::to_string(i) + " of shape " +
                  shape_to_string(params_[i].shape()) + " has no gradient");
    }
  }
  ++step_;
  const double lr = lr_schedule(step_, config_.d_model, config_.warmup);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
      v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
  return lr;
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Metrics score_logits(const Tensor& logits, const Batch& batch, double smoothing) {
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  if (rows != batch.targets.size()) {
    throw ShapeError("score_logits: " + std::to_string(rows) +
                     " logit rows for " + std::to_string(batch.targets.size()) +
                     " targets");
  }
  const double off = smoothing / static_cast<double>(vocab);
  const double on = 1.0 - smoothing + off;
  double nll = 0.0, smoothed = 0.0;
  std::size_t correct = 0, counted = 0;
  const double* pl = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!batch.mask.empty() && !batch.mask[r]) continue;
    const double* z = pl + r * vocab;
    const auto target = static_cast<std::size_t>(batch.targets[r]);
    const double mx = *std::max_element(z, z + vocab);
    double s = 0.0, mean_z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) {
      s += std::exp(z[v] - mx);
      mean_z += z[v];
    }
    const double lse = mx + std::log(s);
    nll += lse - z[target];
    smoothed += lse - (off * mean_z + (on - off) * z[target]);
    const auto best = static_cast<std::size_t>(std::max_element(z, z + vocab) - z);
    if (best == target) ++correct;
    ++counted;
  }
  if (counted == 0) throw Error("score_logits: every position is masked");
  Metrics m;
  m.tokens = counted;
  m.loss = smoothed / static_cast<double>(counted);
  m.perplexity = std::exp(nll / static_cast<double>(counted));
  m.token_accuracy = static_cast<double>(correct) / static_cast<double>(counted);
  return m;
}

LossResult forward_loss(const Model& model, const Batch& batch,
                        double smoothing, bool training, std::mt19937_64* rng) {
  ForwardContext ctx{batch.seq_len, training, rng};
  Tensor logits = model.forward(batch.inputs, ctx);
  check_finite(logits, "forward_loss logits");
  Tensor loss =
      cross_entropy_label_smoothed(logits, batch.targets, smoothing, batch.mask);
  return {loss, score_logits(logits, batch, smoothing)};
}

Metrics evaluate(const Model& model, std::span<const Batch> batches,
                 double smoothing) {
  if (batches.empty()) throw Error("evaluate: no batches");
  double loss = 0.0, log_ppl = 0.0, acc = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    ForwardContext ctx{b.seq_len, false, nullptr};
    Metrics m = score_logits(model.forward(b.inputs, ctx), b, smoothing);
    const double n = static_cast<double>(m.tokens);
    loss += m.loss * n;
    log_ppl += std::log(m.perplexity) * n;
    acc += m.token_accuracy * n;
    tokens += m.tokens;
  }
  const double n = static_cast<double>(tokens);
  return {loss / n, std::exp(log_ppl / n), acc / n, tokens};
}

std::vector<Batch> evaluation_batches(const ModelConfig& mc,
                                      const TrainConfig& tc) {
  std::mt19937_64 rng = stream(tc.seed, 3);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < tc.eval_batches; ++i) {
    out.push_back(make_batch(mc.task, mc.vocab, mc.seq_len, tc.batch, rng,
                             mc.seq2seq));
  }
  return out;
}

TrainReport train(const ModelConfig& mc, const TrainConfig& tc,
                  const TrainOptions& options) {
  mc.validate();
  Model model(mc, tc.seed);
  AdamOptimizer opt(model.parameters(),
                    {tc.beta1, tc.beta2, tc.eps, mc.d_model, tc.warmup});
  std::mt19937_64 data_rng = stream(tc.seed, 1);
  std::mt19937_64 dropout_rng = stream(tc.seed, 2);
  const auto eval_set = evaluation_batches(mc, tc);

  std::vector<TraceRow> trace;
  std::vector<EvalPoint> evals;
  const Metrics initial = evaluate(model, eval_set, tc.label_smoothing);
  std::size_t steps_run = 0;
  for (std::size_t step = 1; step <= tc.steps; ++step) {
    Batch batch = make_batch(mc.task, mc.vocab, mc.seq_len, tc.batch, data_rng,
                             mc.seq2seq);
    Metrics batch_metrics;
    {
      Tape tape;
      TapeScope scope(tape);
      LossResult r =
          forward_loss(model, batch, tc.label_smoothing, true, &dropout_rng);
      tape.backward(r.loss);
      batch_metrics = r.metrics;
    }
    if (!std::isfinite(batch_metrics.loss)) {
      throw NumericError("train: loss became non-finite at step " +
                         std::to_string(step));
    }
    const double lr = opt.step();
    opt.zero_grad();
    trace.push_back({step, batch_metrics.loss, batch_metrics.token_accuracy, lr});
    steps_run = step;
    if (tc.eval_every != 0 && step % tc.eval_every == 0) {
      EvalPoint point{step, evaluate(model, eval_set, tc.label_smoothing)};
      evals.push_back(point);
      if (options.on_eval) options.on_eval(point);
      if (tc.target_accuracy > 0.0 &&
          point.metrics.token_accuracy >= tc.target_accuracy) {
        break;
      }
    }
  }
  const Metrics final_metrics =
      steps_run == 0 ? initial : evaluate(model, eval_set, tc.label_smoothing);

  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    write_loss_trace_csv(*options.out_dir / "loss_trace.csv", trace);
    save_checkpoint(model, *options.out_dir / "checkpoint.json");
  }
  return TrainReport{std::move(trace), std::move(evals), initial, final_metrics,
                     steps_run, std::move(model)};
}

double moving_average_loss(std::span<const TraceRow> trace, std::size_t step,
                           std::size_t window) {
  if (step == 0 || step > trace.size() || window == 0) {
    throw Error("moving_average_loss: step " + std::to_string(step) +
                " outside a trace of " + std::to_string(trace.size()) +
                " steps");
  }
  const std::size_t begin = step > window ? step - window : 0;
  double total = 0.0;
  for (std::size_t i = begin; i < step; ++i) total += trace[i].loss;
  return total / static_cast<double>(step - begin);
}

std::string loss_trace_csv(std::span<const TraceRow> trace) {
  std::string out = "step,loss,token_acc,lr\n";
  for (const auto& row : trace) {
    out += std::to_string(row.step) + "," + format_real(row.loss) + "," +
           format_real(row.token_acc) + "," + format_real(row.lr) + "\n";
  }
  return out;
}

void write_loss_trace_csv(const std::filesystem::path& path,
                          std::span<const TraceRow> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write loss trace " + path.string());
  out << loss_trace_csv(trace);
  if (!out) throw Error("failed writing loss trace " + path.string());
}

double smoothed_target_entropy(std::size_t vocab, double smoothing) {
  const double off = smoothing / static_cast<double>(vocab);
  const double on = 1.0 - smoothing + off;
  double h = -on * std::log(on);
  if (off > 0.0) h -= static_cast<double>(vocab - 1) * off * std::log(off);
  return h;
}

}  // namespace lmwt
