#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmwt/model.hpp"
#include "lmwt/op_counter.hpp"

namespace lmwt {

struct BenchOptions {
  MixerKind mixer = MixerKind::kWavelet;
  std::vector<std::size_t> lengths;  // strictly increasing powers of two
  std::size_t dim = 64;
  std::size_t levels = 3;
  std::size_t heads = 1;
  std::size_t reps = 5;
  std::uint64_t seed = 0;
  /// Each repetition loops the forward pass until at least this long.
  double min_rep_seconds = 0.002;
  /// Run repetitions concurrently, each on its own inputs and counters.
  bool parallel = false;
};

struct BenchSample {
  std::size_t length;
  std::size_t rep;
  double seconds;  // per forward pass
  std::uint64_t mulads;
};

struct BenchPoint {
  std::size_t length;
  std::size_t reps;
  double median_seconds;
  std::uint64_t mulads;  // per forward pass; identical across reps
  OpCounts counts;
};

struct ScalingFit {
  double slope = 0.0;
  double ci_low = 0.0;   // 2.5th bootstrap percentile
  double ci_high = 0.0;  // 97.5th bootstrap percentile
};

struct BenchReport {
  MixerKind mixer = MixerKind::kWavelet;
  std::size_t dim = 0, levels = 0, heads = 0;
  std::vector<BenchSample> samples;
  std::vector<BenchPoint> points;
  ScalingFit fit;
};

/// 2^k values from tmin to tmax inclusive; both must be powers of two.
std::vector<std::size_t> powers_of_two(std::size_t tmin, std::size_t tmax);

/// Forward-only timing of one mixer (no tape) after two warmup passes,
/// with exact counts from the instrumented kernels.
BenchReport bench_mixer(const BenchOptions& options);

/// Counts of a single forward pass of the mixer sub-layer on a T x d input.
OpCounts count_mixer_ops(MixerKind mixer, std::size_t length, std::size_t dim,
                         std::size_t levels, std::size_t heads);

/// Closed-form counts, same units as the instrumented kernels.
///   transform:   8 d T (1 - 2^-L)
///   elementwise: (2L + 1) T d for gate scaling and sums, plus T d bias
///   projection:  2 T d^2
OpCounts predicted_wavelet_counts(std::size_t length, std::size_t dim,
                                  std::size_t levels);
///   projection: 4 * 2 T d^2 (Q, K, V and output)
///   scores:     2 T^2 d_k per head, mix: 2 T^2 d_v per head
OpCounts predicted_attention_counts(std::size_t length, std::size_t dim,
                                    std::size_t heads);

/// Ordinary least-squares slope of ys against xs.
double least_squares_slope(std::span<const double> xs, std::span<const double> ys);

/// Slope of log(median time) against log(T), with a percentile bootstrap
/// interval obtained by resampling repetitions within each T.
ScalingFit fit_scaling_exponent(const BenchReport& report,
                                std::size_t resamples = 1000,
                                std::uint64_t seed = 0);

/// Header `mixer,T,rep,seconds,mulads`.
std::string bench_csv(std::span<const BenchReport> reports);
/// JSON summary with per-T medians, counts and the fitted slopes.
std::string bench_summary_json(std::span<const BenchReport> reports);

}  // namespace lmwt
