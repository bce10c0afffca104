#include "lmwt/tensor.hpp"

#include <numeric>
#include <sstream>

#include "lmwt/op_counter.hpp"

namespace lmwt {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : Error(op + ": shape mismatch " + shape_to_string(a) + " vs " +
            shape_to_string(b)) {}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got " +
                     shape_to_string(shape));
  }
  for (auto extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor extents must be positive, got " +
                       shape_to_string(shape));
    }
  }
}

thread_local Tape* g_current_tape = nullptr;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::rows() const { return numel() / cols(); }
std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() needs a single element, got " +
                     shape_to_string(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::clone() const {
  return from(shape(), node_->data, node_->requires_grad && !node_->tape);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor make_output(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  Tape* tape = Tape::current();
  if (tape == nullptr) return out;
  bool tracked = false;
  for (const Tensor* in : inputs) {
    if (in->defined() && in->requires_grad()) {
      tracked = true;
      break;
    }
  }
  if (!tracked) return out;
  out.node_->requires_grad = true;
  out.node_->tape = tape;
  tape->record({out.node_, std::move(backward)});
  return out;
}

void accumulate_grad(const Tensor& t, std::span<const double> values) {
  if (!t.requires_grad()) return;
  auto& g = t.node().ensure_grad();
  for (std::size_t i = 0; i < values.size(); ++i) g[i] += values[i];
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw NumericError("backward called twice on the same tape without reset");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     (loss.defined() ? shape_to_string(loss.shape())
                                     : std::string("undefined")));
  }
  if (loss.node().tape != this) {
    throw NumericError(
        "backward: loss is detached from this tape (no tracked inputs)");
  }
  consumed_ = true;
  loss.node().ensure_grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it->output);
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

Tape* Tape::current() { return g_current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = previous_; }

// Op counter storage lives here so the core has a single translation unit
// owning the thread-local state.
namespace {
thread_local OpCounts g_counts;
}

std::uint64_t OpCounts::total() const {
  return std::accumulate(by_kind.begin(), by_kind.end(), std::uint64_t{0});
}

OpCounts OpCounts::operator-(const OpCounts& rhs) const {
  OpCounts out;
  for (std::size_t i = 0; i < by_kind.size(); ++i) {
    out.by_kind[i] = by_kind[i] - rhs.by_kind[i];
  }
  return out;
}

namespace op_counter {

void add(OpKind kind, std::uint64_t mulads) {
  g_counts.by_kind[static_cast<std::size_t>(kind)] += mulads;
}

OpCounts snapshot() { return g_counts; }

void reset() { g_counts = OpCounts{}; }

}  // namespace op_counter

}  // namespace lmwt
