#include "lmwt/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <future>
#include <nlohmann/json.hpp>
#include <random>

#include "lmwt/init.hpp"
#include "lmwt/layers.hpp"

namespace lmwt {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One mixer instance with its own input, so repetitions can run in
// isolation from each other.
struct MixerRig {
  Tensor input;
  MixerParams params;
  std::size_t length;

  MixerRig(MixerKind kind, std::size_t length, std::size_t dim,
           std::size_t levels, std::size_t heads, std::uint64_t seed)
      : length(length) {
    std::mt19937_64 rng(seed);
    input = normal_tensor({length, dim}, 1.0, rng);
    input.set_requires_grad(false);
    if (kind == MixerKind::kWavelet) {
      params = init_wavelet_mixer(dim, levels, 0.01, rng);
    } else {
      params = init_attention(dim, heads, rng);
    }
  }

  Tensor run() const { return apply_mixer(input, params, length); }
};

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct RepResult {
  double seconds;
  std::uint64_t mulads;
  OpCounts counts;
};

RepResult time_rep(const MixerRig& rig, std::size_t inner) {
  OpCountScope count_one;
  rig.run();
  const OpCounts counts = count_one.counts();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < inner; ++i) {
    Tensor out = rig.run();
    if (out.numel() == 0) throw Error("bench: empty mixer output");
  }
  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - start;
  return {elapsed.count() / static_cast<double>(inner), counts.total(), counts};
}

}  // namespace

std::vector<std::size_t> powers_of_two(std::size_t tmin, std::size_t tmax) {
  auto is_pow2 = [](std::size_t x) { return x != 0 && (x & (x - 1)) == 0; };
  if (!is_pow2(tmin) || !is_pow2(tmax) || tmin > tmax) {
    throw Error("sequence lengths must be powers of two with tmin <= tmax, got " +
                std::to_string(tmin) + " and " + std::to_string(tmax));
  }
  std::vector<std::size_t> out;
  for (std::size_t t = tmin; t <= tmax; t *= 2) out.push_back(t);
  return out;
}

OpCounts count_mixer_ops(MixerKind mixer, std::size_t length, std::size_t dim,
                         std::size_t levels, std::size_t heads) {
  MixerRig rig(mixer, length, dim, levels, heads, 0);
  OpCountScope scope;
  rig.run();
  return scope.counts();
}

OpCounts predicted_wavelet_counts(std::size_t length, std::size_t dim,
                                  std::size_t levels) {
  const std::uint64_t t = length, d = dim, l = levels;
  OpCounts c;
  // 8 d T (1 - 2^-L) = 8 d (T - T / 2^L), exact in integers when 2^L | T.
  c.by_kind[static_cast<std::size_t>(OpKind::kTransform)] =
      8 * d * (t - (t >> l));
  c.by_kind[static_cast<std::size_t>(OpKind::kElementwise)] = (2 * l + 2) * t * d;
  c.by_kind[static_cast<std::size_t>(OpKind::kProjection)] = 2 * t * d * d;
  return c;
}

OpCounts predicted_attention_counts(std::size_t length, std::size_t dim,
                                    std::size_t heads) {
  const std::uint64_t t = length, d = dim, h = heads, dk = dim / heads;
  OpCounts c;
  c.by_kind[static_cast<std::size_t>(OpKind::kProjection)] = 4 * 2 * t * d * d;
  c.by_kind[static_cast<std::size_t>(OpKind::kScores)] = 2 * h * t * t * dk;
  c.by_kind[static_cast<std::size_t>(OpKind::kMix)] = 2 * h * t * t * dk;
  return c;
}

BenchReport bench_mixer(const BenchOptions& o) {
  if (o.reps < 5) throw Error("bench: need at least 5 repetitions");
  if (o.lengths.empty()) throw Error("bench: no sequence lengths given");
  for (std::size_t i = 0; i < o.lengths.size(); ++i) {
    const std::size_t t = o.lengths[i];
    if (t == 0 || (t & (t - 1)) != 0 || (i > 0 && t <= o.lengths[i - 1])) {
      throw Error("bench: lengths must be strictly increasing powers of two");
    }
    if (o.mixer == MixerKind::kWavelet &&
        (o.levels == 0 || t % (std::size_t{1} << o.levels) != 0)) {
      throw Error("bench: T=" + std::to_string(t) + " is not divisible by 2^" +
                  std::to_string(o.levels));
    }
  }
  if (o.mixer == MixerKind::kAttention && (o.heads == 0 || o.dim % o.heads)) {
    throw Error("bench: dim must be divisible by heads");
  }

  BenchReport report;
  report.mixer = o.mixer;
  report.dim = o.dim;
  report.levels = o.levels;
  report.heads = o.heads;
  for (std::size_t t : o.lengths) {
    const std::uint64_t rig_seed = o.seed * 1000003ull + t;
    MixerRig warm(o.mixer, t, o.dim, o.levels, o.heads, rig_seed);
    warm.run();
    const auto start = std::chrono::steady_clock::now();
    warm.run();
    const double once = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    const std::size_t inner = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(o.min_rep_seconds /
                                              std::max(once, 1e-9))));

    std::vector<RepResult> results;
    if (o.parallel) {
      std::vector<std::future<RepResult>> jobs;
      for (std::size_t r = 0; r < o.reps; ++r) {
        jobs.push_back(std::async(std::launch::async, [&, r] {
          MixerRig rig(o.mixer, t, o.dim, o.levels, o.heads, rig_seed + r);
          return time_rep(rig, inner);
        }));
      }
      for (auto& j : jobs) results.push_back(j.get());
    } else {
      for (std::size_t r = 0; r < o.reps; ++r) {
        results.push_back(time_rep(warm, inner));
      }
    }
    std::vector<double> times;
    for (std::size_t r = 0; r < results.size(); ++r) {
      report.samples.push_back({t, r, results[r].seconds, results[r].mulads});
      times.push_back(results[r].seconds);
    }
    report.points.push_back(
        {t, o.reps, median(times), results.front().mulads, results.front().counts});
  }
  if (report.points.size() >= 4) report.fit = fit_scaling_exponent(report);
  return report;
}

double least_squares_slope(std::span<const double> xs,
                           std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error("least_squares_slope: need two or more paired points");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw Error("least_squares_slope: all x values are equal");
  return sxy / sxx;
}

ScalingFit fit_scaling_exponent(const BenchReport& report, std::size_t resamples,
                                std::uint64_t seed) {
  // Group repetition times by T, preserving increasing order.
  std::vector<std::size_t> lengths;
  std::vector<std::vector<double>> times;
  for (const auto& s : report.samples) {
    if (!(s.seconds > 0.0)) throw Error("fit_scaling_exponent: non-positive time");
    auto it = std::find(lengths.begin(), lengths.end(), s.length);
    if (it == lengths.end()) {
      lengths.push_back(s.length);
      times.push_back({s.seconds});
    } else {
      times[static_cast<std::size_t>(it - lengths.begin())].push_back(s.seconds);
    }
  }
  if (lengths.size() < 4) {
    throw Error("fit_scaling_exponent: need at least 4 distinct T values, got " +
                std::to_string(lengths.size()));
  }
  std::vector<double> log_t, log_s;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    log_t.push_back(std::log(static_cast<double>(lengths[i])));
    log_s.push_back(std::log(median(times[i])));
  }
  ScalingFit fit;
  fit.slope = least_squares_slope(log_t, log_s);

  std::mt19937_64 rng(seed);
  std::vector<double> slopes;
  slopes.reserve(resamples);
  std::vector<double> draw;
  for (std::size_t b = 0; b < resamples; ++b) {
    std::vector<double> ys;
    for (const auto& reps : times) {
      std::uniform_int_distribution<std::size_t> pick(0, reps.size() - 1);
      draw.assign(reps.size(), 0.0);
      for (auto& x : draw) x = reps[pick(rng)];
      ys.push_back(std::log(median(draw)));
    }
    slopes.push_back(least_squares_slope(log_t, ys));
  }
  if (slopes.empty()) {
    fit.ci_low = fit.ci_high = fit.slope;
    return fit;
  }
  std::sort(slopes.begin(), slopes.end());
  auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(
        std::floor(q * static_cast<double>(slopes.size() - 1)));
    return slopes[idx];
  };
  fit.ci_low = pct(0.025);
  fit.ci_high = pct(0.975);
  return fit;
}

std::string bench_csv(std::span<const BenchReport> reports) {
  std::string out = "mixer,T,rep,seconds,mulads\n";
  for (const auto& r : reports) {
    for (const auto& s : r.samples) {
      out += to_string(r.mixer) + "," + std::to_string(s.length) + "," +
             std::to_string(s.rep) + "," + format_real(s.seconds) + "," +
             std::to_string(s.mulads) + "\n";
    }
  }
  return out;
}

std::string bench_summary_json(std::span<const BenchReport> reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : r.points) {
      points.push_back({{"T", p.length},
                        {"reps", p.reps},
                        {"median_seconds", p.median_seconds},
                        {"mulads", p.mulads},
                        {"transform", p.counts[OpKind::kTransform]},
                        {"projection", p.counts[OpKind::kProjection]},
                        {"scores", p.counts[OpKind::kScores]},
                        {"mix", p.counts[OpKind::kMix]},
                        {"elementwise", p.counts[OpKind::kElementwise]}});
    }
    doc.push_back({{"mixer", to_string(r.mixer)},
                   {"d", r.dim},
                   {"levels", r.levels},
                   {"heads", r.heads},
                   {"points", points},
                   {"slope", r.fit.slope},
                   {"slope_ci95", {r.fit.ci_low, r.fit.ci_high}}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace lmwt
