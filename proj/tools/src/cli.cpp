#include "lmwt/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmwt/bench.hpp"
#include "lmwt/coefficients.hpp"
#include "lmwt/model.hpp"
#include "lmwt/train.hpp"
#include "lmwt/wavelet.hpp"

namespace lmwt {

namespace fs = std::filesystem;

namespace {

fs::path default_out_dir() {
  const char* env = std::getenv("LMWT_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path("lmwt_out");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
bool parse_number(const std::string& text, T& value) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// Non-blank lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (!t.empty()) out.emplace_back(lineno, std::move(t));
  }
  return out;
}

Error csv_error(const fs::path& path, std::size_t lineno, const std::string& msg) {
  return Error(path.string() + ":" + std::to_string(lineno) + ": " + msg);
}

// One numeric column; a non-numeric first line is taken as a header.
std::vector<double> read_signal_csv(const fs::path& path) {
  std::vector<double> values;
  const auto lines = csv_lines(read_text(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    if (line.find(',') != std::string::npos) {
      throw csv_error(path, lineno, "expected a single column");
    }
    double v = 0.0;
    if (!parse_number(line, v)) {
      if (i == 0) continue;
      throw csv_error(path, lineno, "not a number: '" + line + "'");
    }
    if (!std::isfinite(v)) throw csv_error(path, lineno, "non-finite value");
    values.push_back(v);
  }
  if (values.empty()) throw Error(path.string() + ": no values");
  return values;
}

// Integers separated by commas and/or newlines, optional header line.
std::vector<std::int32_t> read_tokens_csv(const fs::path& path, std::size_t vocab) {
  std::vector<std::int32_t> tokens;
  const auto lines = csv_lines(read_text(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const auto fields = split(line, ',');
    std::vector<std::int32_t> row;
    bool numeric = true;
    for (const auto& f : fields) {
      std::int64_t v = 0;
      if (!parse_number(f, v)) {
        numeric = false;
        break;
      }
      if (v < 0 || static_cast<std::uint64_t>(v) >= vocab) {
        throw csv_error(path, lineno,
                        "token id " + std::to_string(v) + " outside [0, " +
                            std::to_string(vocab) + ")");
      }
      row.push_back(static_cast<std::int32_t>(v));
    }
    if (!numeric) {
      if (i == 0) continue;
      throw csv_error(path, lineno, "expected integer token ids");
    }
    tokens.insert(tokens.end(), row.begin(), row.end());
  }
  if (tokens.empty()) throw Error(path.string() + ": no tokens");
  return tokens;
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"loss", m.loss},
          {"perplexity", m.perplexity},
          {"token_accuracy", m.token_accuracy},
          {"tokens", m.tokens}};
}

void print_metrics(std::ostream& out, const Metrics& m) {
  out << "loss " << fmt(m.loss) << "\n"
      << "perplexity " << fmt(m.perplexity) << "\n"
      << "token_accuracy " << fmt(m.token_accuracy) << "\n"
      << "tokens " << m.tokens << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  if (a.steps) rc.train.steps = *a.steps;
  if (a.seed) rc.train.seed = *a.seed;
  const fs::path dir = a.out.empty() ? default_out_dir() : fs::path(a.out);

  TrainOptions options;
  options.out_dir = dir;
  options.on_eval = [&out](const EvalPoint& p) {
    out << "step " << p.step << " loss " << fmt(p.metrics.loss) << " acc "
        << fmt(p.metrics.token_accuracy) << "\n";
  };
  const TrainReport report = train(rc.model, rc.train, options);

  nlohmann::json doc = {{"task", to_string(rc.model.task)},
                        {"mixer", to_string(rc.model.mixer)},
                        {"seed", rc.train.seed},
                        {"steps_run", report.steps_run},
                        {"parameters", report.model.parameter_count()},
                        {"initial", metrics_json(report.initial)},
                        {"final", metrics_json(report.final)}};
  write_text(dir / "metrics.json", doc.dump(2) + "\n");
  write_text(dir / "config.txt", run_config_to_string(rc));

  out << "trained " << report.steps_run << " steps ("
      << report.model.parameter_count() << " parameters)\n";
  print_metrics(out, report.final);
  out << "wrote " << (dir / "loss_trace.csv").string() << ", "
      << (dir / "checkpoint.json").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  const Model model = load_checkpoint(a.checkpoint, rc.model);
  const auto batches = evaluation_batches(rc.model, rc.train);
  const Metrics m = evaluate(model, batches, rc.train.label_smoothing);
  if (!std::isfinite(m.loss)) throw NumericError("eval: non-finite loss");

  nlohmann::json doc = metrics_json(m);
  doc["task"] = to_string(rc.model.task);
  doc["seed"] = rc.train.seed;
  const fs::path path =
      a.out.empty() ? default_out_dir() / "eval.json" : fs::path(a.out);
  write_text(path, doc.dump(2) + "\n");
  print_metrics(out, m);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string mixer = "both";
  std::size_t tmin = 256, tmax = 8192, d = 64, levels = 3, reps = 5, heads = 1;
  std::uint64_t seed = 0;
  bool parallel = false;
  std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  std::vector<MixerKind> kinds;
  if (a.mixer == "both") {
    kinds = {MixerKind::kWavelet, MixerKind::kAttention};
  } else {
    kinds = {parse_mixer(a.mixer)};
  }
  BenchOptions o;
  o.lengths = powers_of_two(a.tmin, a.tmax);
  o.dim = a.d;
  o.levels = a.levels;
  o.heads = a.heads;
  o.reps = a.reps;
  o.seed = a.seed;
  o.parallel = a.parallel;

  std::vector<BenchReport> reports;
  for (MixerKind k : kinds) {
    o.mixer = k;
    reports.push_back(bench_mixer(o));
    const auto& r = reports.back();
    for (const auto& p : r.points) {
      out << to_string(k) << " T=" << p.length << " median_s=" << fmt(p.median_seconds)
          << " mulads=" << p.mulads << "\n";
    }
    if (r.points.size() >= 4) {
      out << to_string(k) << " slope=" << fmt(r.fit.slope) << " ci95=["
          << fmt(r.fit.ci_low) << ", " << fmt(r.fit.ci_high) << "]\n";
    }
  }
  const fs::path csv = a.out.empty() ? default_out_dir() / "bench.csv" : fs::path(a.out);
  fs::path summary = csv;
  summary.replace_filename(csv.stem().string() + "_summary.json");
  write_text(csv, bench_csv(reports));
  write_text(summary, bench_summary_json(reports));
  out << "wrote " << csv.string() << ", " << summary.string() << "\n";
  return kExitOk;
}

struct HaarArgs {
  std::string input;
  std::optional<std::size_t> levels;
  bool inverse = false;
  std::string out;
};

ClassicalDecomposition read_decomposition_csv(const fs::path& path) {
  const auto lines = csv_lines(read_text(path));
  if (lines.empty() || lines.front().second != "band,level,index,value") {
    throw Error(path.string() + ": expected header band,level,index,value");
  }
  std::map<std::size_t, std::vector<double>> details;
  std::optional<std::size_t> approx_level;
  std::vector<double> approx;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const auto f = split(line, ',');
    std::size_t level = 0, index = 0;
    double value = 0.0;
    if (f.size() != 4 || !parse_number(f[1], level) || !parse_number(f[2], index) ||
        !parse_number(f[3], value)) {
      throw csv_error(path, lineno, "expected band,level,index,value");
    }
    if (!std::isfinite(value)) throw csv_error(path, lineno, "non-finite value");
    std::vector<double>* target = nullptr;
    if (f[0] == "detail") {
      target = &details[level];
    } else if (f[0] == "approx") {
      if (approx_level && *approx_level != level) {
        throw csv_error(path, lineno, "approximation rows span several levels");
      }
      approx_level = level;
      target = &approx;
    } else {
      throw csv_error(path, lineno, "unknown band '" + f[0] + "'");
    }
    if (index != target->size()) {
      throw csv_error(path, lineno, "indices must run 0, 1, 2, ... per band");
    }
    target->push_back(value);
  }
  if (!approx_level) throw Error(path.string() + ": no approximation rows");
  const std::size_t levels = *approx_level + 1;
  ClassicalDecomposition dec;
  dec.approx = std::move(approx);
  const std::size_t n = dec.approx.size() << levels;
  for (std::size_t l = 0; l < levels; ++l) {
    auto it = details.find(l);
    const std::size_t want = n >> (l + 1);
    if (it == details.end() || it->second.size() != want) {
      throw ShapeError(path.string() + ": detail level " + std::to_string(l) +
                       " needs " + std::to_string(want) + " values");
    }
    dec.details.push_back(std::move(it->second));
  }
  if (details.size() != levels) {
    throw ShapeError(path.string() + ": detail levels beyond the approximation level");
  }
  return dec;
}

int cmd_haar(const HaarArgs& a, std::ostream& out) {
  const fs::path path = a.out.empty() ? default_out_dir() / "haar.csv" : fs::path(a.out);
  std::string text;
  if (a.inverse) {
    const ClassicalDecomposition dec = read_decomposition_csv(a.input);
    if (a.levels && *a.levels != dec.details.size()) {
      throw ShapeError("haar: file holds " + std::to_string(dec.details.size()) +
                       " levels, --levels says " + std::to_string(*a.levels));
    }
    text = "value\n";
    for (double v : haar_reconstruct_classical(dec)) text += fmt(v) + "\n";
  } else {
    const std::vector<double> x = read_signal_csv(a.input);
    const std::size_t levels = a.levels.value_or(1);
    const ClassicalDecomposition dec = haar_decompose_classical(x, levels);
    text = "band,level,index,value\n";
    for (std::size_t l = 0; l < dec.details.size(); ++l) {
      for (std::size_t i = 0; i < dec.details[l].size(); ++i) {
        text += "detail," + std::to_string(l) + "," + std::to_string(i) + "," +
                fmt(dec.details[l][i]) + "\n";
      }
    }
    for (std::size_t i = 0; i < dec.approx.size(); ++i) {
      text += "approx," + std::to_string(levels - 1) + "," + std::to_string(i) + "," +
              fmt(dec.approx[i]) + "\n";
    }
  }
  write_text(path, text);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

struct ExportArgs {
  std::string checkpoint, config, input, out;
  std::size_t layer = 0;
};

int cmd_export_coeffs(const ExportArgs& a, std::ostream& out) {
  const RunConfig rc = load_run_config(a.config);
  const Model model = load_checkpoint(a.checkpoint, rc.model);
  const auto tokens = read_tokens_csv(a.input, rc.model.vocab);
  const HeatmapExport heat = export_coefficients(model, tokens, a.layer);

  const fs::path path = a.out.empty() ? default_out_dir() / "coeffs.csv" : fs::path(a.out);
  write_text(path, heatmap_csv(heat));
  out << "wrote " << path.string() << "\n";
  for (std::size_t b = 0; b < heat.blocks.size(); ++b) {
    fs::path block_path = path;
    block_path.replace_filename(path.stem().string() + "." + heat.blocks[b].name +
                                ".csv");
    write_text(block_path, heatmap_block_csv(heat, b));
    out << "wrote " << block_path.string() << " (" << heat.dim << " x "
        << heat.blocks[b].width << ")\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Learnable multi-scale wavelet transformer toolkit", "lmwt"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("config", train_args.config, "Config file")->required();
  train_cmd->add_option("--steps", train_args.steps, "Override the step count");
  train_cmd->add_option("--seed", train_args.seed, "Override the seed");
  train_cmd->add_option("--out", train_args.out,
                        "Output directory (default $LMWT_OUT_DIR or lmwt_out)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("config", eval_args.config, "Config file")->required();
  eval_cmd->add_option("--seed", eval_args.seed, "Seed of the evaluation batches");
  eval_cmd->add_option("--out", eval_args.out, "Metrics JSON path");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Time and count mixer forward passes");
  bench_cmd->add_option("--mixer", bench_args.mixer, "wavelet, attention or both")
      ->check(CLI::IsMember({"wavelet", "attention", "both"}));
  bench_cmd->add_option("--tmin", bench_args.tmin, "Smallest T (power of two)");
  bench_cmd->add_option("--tmax", bench_args.tmax, "Largest T (power of two)");
  bench_cmd->add_option("--d", bench_args.d, "Model dimension");
  bench_cmd->add_option("--levels", bench_args.levels, "Wavelet levels");
  bench_cmd->add_option("--heads", bench_args.heads, "Attention heads");
  bench_cmd->add_option("--reps", bench_args.reps, "Repetitions per T (>= 5)");
  bench_cmd->add_option("--seed", bench_args.seed, "Input seed");
  bench_cmd->add_flag("--parallel", bench_args.parallel, "Run repetitions concurrently");
  bench_cmd->add_option("--out", bench_args.out, "CSV path; summary JSON goes beside it");

  HaarArgs haar_args;
  auto* haar_cmd = app.add_subcommand("haar", "Classical multi-level Haar transform");
  haar_cmd->add_option("--input", haar_args.input, "Input CSV")->required();
  haar_cmd->add_option("--levels", haar_args.levels, "Decomposition levels (default 1)");
  haar_cmd->add_flag("--inverse", haar_args.inverse,
                     "Reconstruct from band,level,index,value rows");
  haar_cmd->add_option("--out", haar_args.out, "Output CSV");

  ExportArgs export_args;
  auto* export_cmd =
      app.add_subcommand("export-coeffs", "Export wavelet coefficient magnitudes");
  export_cmd->add_option("checkpoint", export_args.checkpoint, "Checkpoint file")
      ->required();
  export_cmd->add_option("config", export_args.config, "Config file")->required();
  export_cmd->add_option("--input", export_args.input, "Token ids CSV")->required();
  export_cmd->add_option("--out", export_args.out, "Heatmap CSV");
  export_cmd->add_option("--layer", export_args.layer, "Layer index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "lmwt: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*bench_cmd) return cmd_bench(bench_args, out);
    if (*haar_cmd) return cmd_haar(haar_args, out);
    if (*export_cmd) return cmd_export_coeffs(export_args, out);
  } catch (const NumericError& e) {
    err << "lmwt: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "lmwt: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace lmwt
