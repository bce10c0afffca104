#pragma once

#include <array>
#include <cstdint>

namespace lmwt {

/// Kernel families tracked by the instrumented forward kernels.
enum class OpKind : std::size_t {
  kTransform = 0,  // learnable Haar pair mixing
  kProjection,     // dense matmuls outside attention scores
  kScores,         // Q K^T inside attention
  kMix,            // attention weights times V
  kElementwise,    // adds, products, gate scaling
  kCount
};

/// Arithmetic tallies in flop-equivalent units: a multiply-accumulate
/// counts 2, a lone multiply or add counts 1. Transcendentals (exp, sqrt)
/// and data movement are not counted.
struct OpCounts {
  std::array<std::uint64_t, static_cast<std::size_t>(OpKind::kCount)> by_kind{};

  std::uint64_t operator[](OpKind kind) const {
    return by_kind[static_cast<std::size_t>(kind)];
  }
  std::uint64_t total() const;
  OpCounts operator-(const OpCounts& rhs) const;
};

namespace op_counter {

/// Thread-local running tally. Kernels add to it on every forward call.
void add(OpKind kind, std::uint64_t mulads);
OpCounts snapshot();
void reset();

}  // namespace op_counter

/// Counts accumulated between construction and counts().
class OpCountScope {
 public:
  OpCountScope() : start_(op_counter::snapshot()) {}
  OpCounts counts() const { return op_counter::snapshot() - start_; }

 private:
  OpCounts start_;
};

}  // namespace lmwt
