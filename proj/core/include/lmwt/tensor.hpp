#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmwt {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Base class for every error the library raises on bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform. The message names both shapes.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  explicit ShapeError(const std::string& message) : Error(message) {}
};

/// A computation produced NaN or Inf, or a gradient pass was misused.
class NumericError : public Error {
 public:
  using Error::Error;
};

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const Tape* tape = nullptr;  // set for op outputs recorded on a tape

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of rank 1 to 3 holding f64 values.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// parameters and tape entries refer to one buffer. Use clone() for a deep
/// copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const;
  /// Leading dimensions folded into rows; the last axis is the row width.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    return node_->data[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const;
  /// Shares nothing with the tape: same values, no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
  friend Tensor make_output(Shape shape, std::vector<double> data,
                            std::initializer_list<const Tensor*> inputs,
                            std::function<void(detail::Node&)> backward);
};

/// Ordered record of executed ops with their local gradient rules.
///
/// Ops append entries while a TapeScope is active and at least one input
/// requires a gradient. backward() replays the entries once, in reverse.
class Tape {
 public:
  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::function<void(detail::Node&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }

  /// Populates grad on every requires_grad tensor reachable from `loss`.
  /// Throws if `loss` is not a scalar, was not produced on this tape, or if
  /// backward already ran since the last reset().
  void backward(const Tensor& loss);
  void reset();

  /// The tape ops currently record onto, or nullptr.
  static Tape* current();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target for this thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds an op output. When a tape is active and any input requires a
/// gradient, the output is tracked and `backward` is recorded; it receives
/// the output node (whose grad is populated) and must accumulate into the
/// inputs' grads.
Tensor make_output(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward);

/// Accumulates `values` into the gradient of `t` if it tracks one.
void accumulate_grad(const Tensor& t, std::span<const double> values);

}  // namespace lmwt
