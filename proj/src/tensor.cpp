#include "scl/tensor.hpp"

#include <sstream>

#include "scl/errors.hpp"

namespace scl {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) {
  auto n = shape_size(shape);
  storage_ = std::make_shared<Storage>();
  storage_->shape = std::move(shape);
  storage_->data = std::make_shared<std::vector<double>>(n, fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  storage_ = std::make_shared<Storage>();
  storage_->shape = std::move(shape);
  storage_->data = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

const Shape& Tensor::shape() const {
  if (!storage_) throw StateError("use of undefined tensor");
  return storage_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::span<double> Tensor::data() {
  shape();
  return {storage_->data->data(), storage_->data->size()};
}

std::span<const double> Tensor::data() const {
  shape();
  return {storage_->data->data(), storage_->data->size()};
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return data()[0];
}

bool Tensor::requires_grad() const {
  return storage_ && storage_->requires_grad;
}

void Tensor::set_requires_grad(bool on) {
  shape();
  storage_->requires_grad = on;
}

bool Tensor::has_grad() const { return storage_ && storage_->grad; }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient");
  return {storage_->grad->data(), storage_->grad->size()};
}

std::span<double> Tensor::grad_buffer() const {
  shape();
  if (!storage_->grad) {
    storage_->grad =
        std::make_shared<std::vector<double>>(storage_->data->size(), 0.0);
  }
  return {storage_->grad->data(), storage_->grad->size()};
}

void Tensor::clear_grad() {
  if (storage_) storage_->grad.reset();
}

Tensor Tensor::clone() const {
  Tensor out(shape(), std::vector<double>(data().begin(), data().end()));
  out.storage_->requires_grad = storage_->requires_grad;
  return out;
}

Tensor Tensor::view(Shape new_shape) const {
  if (shape_size(new_shape) != size()) {
    throw DimensionError("cannot view " + shape_str(shape()) + " as " +
                         shape_str(new_shape));
  }
  Tensor out;
  out.storage_ = std::make_shared<Storage>(*storage_);
  out.storage_->shape = std::move(new_shape);
  out.storage_->grad.reset();
  return out;
}

void Tape::record(const Tensor& output, std::vector<Tensor> operands,
                  BackwardFn fn) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  nodes_.push_back(Node{output, std::move(operands), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward() called twice on one tape");
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " +
                         shape_str(loss.shape()));
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  nodes_.clear();
}

bool needs_record(const Tape* tape,
                  std::initializer_list<const Tensor*> operands) {
  if (tape == nullptr) return false;
  for (const auto* t : operands) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace scl
