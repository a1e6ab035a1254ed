#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a handle: copies share storage. Use clone() for a deep copy.
// A tensor that is not referenced by any Tape is never mutated by forward
// ops, so it may be read concurrently from several threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double& at(std::size_t flat) { return data()[flat]; }
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> grad_buffer() const;
  void clear_grad();

  Tensor clone() const;
  // Same storage, new shape. Size must match.
  Tensor view(Shape shape) const;
  bool shares_storage(const Tensor& other) const {
    return storage_ == other.storage_;
  }

 private:
  struct Storage {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

// The computation record: ops append nodes in execution order, so the node
// list is always topologically sorted. backward() walks it in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records `fn`, which must read output.grad() and accumulate into the
  // operands' grad buffers.
  void record(const Tensor& output, std::vector<Tensor> operands,
              BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and propagates. Allowed once per tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    std::vector<Tensor> operands;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// True when an op on these operands has to be recorded on `tape`.
bool needs_record(const Tape* tape, std::initializer_list<const Tensor*> operands);

}  // namespace scl
