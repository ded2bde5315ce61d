#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace genhead {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Tape;

// Dense row-major array of doubles. Values are held behind a shared buffer so
// copies are cheap handles; a tensor produced by an op never changes after
// creation. Tracked tensors additionally carry a node id on a Tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  std::span<const double> values() const { return {data_->data(), data_->size()}; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  // In-place access for optimizers and data loaders. Shares storage with every
  // handle to the same buffer.
  std::span<double> mutable_values() { return {data_->data(), data_->size()}; }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Same values, no tape.
  Tensor detach() const;
  // Deep copy of the values, no tape.
  Tensor clone() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Named trainable array. `grad` is filled by Tape::backward for every tape leaf
// bound to this parameter.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  std::vector<double> grad;
  bool requires_grad = true;

  void zero_grad();
};

// Backward rule: maps the output gradient to one gradient per input. Rules are
// written with the ops in ops.hpp, so when called with tracked arguments they
// record their own graph (used for gradient penalties).
using BackwardFn = std::function<std::vector<Tensor>(
    const Tensor& grad_out, std::span<const Tensor> inputs, const Tensor& output)>;

struct OpRecord {
  std::string name;
  std::vector<Tensor> inputs;
  Tensor output;
  BackwardFn backward;
};

// Dynamic reverse-mode tape. Ops are appended in execution order; backward
// walks them in exact reverse order. Not copyable: tensors refer to their tape
// by address.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a parameter. Repeated calls within one tape return the same
  // node so uses accumulate. A parameter with requires_grad == false comes back
  // untracked.
  Tensor watch(Parameter& p);
  // Free-standing tracked leaf (gradient available through grad()).
  Tensor variable(const Tensor& value);

  // Attach `output` (untracked values) as the result of an op over `inputs`.
  // Returns `output` untracked when no input lives on this tape.
  Tensor record(std::string_view name, std::vector<Tensor> inputs, Tensor output,
                BackwardFn backward);

  // Accumulates d(loss)/d(leaf) into bound parameters and stores leaf
  // gradients for grad().
  void backward(const Tensor& loss);

  // d(loss)/d(wrt[i]). With create_graph the returned tensors are themselves
  // on this tape and can be differentiated again. Inputs with no path to the
  // loss get zeros.
  std::vector<Tensor> gradients(const Tensor& loss, std::span<const Tensor> wrt,
                                bool create_graph = false);

  std::optional<Tensor> grad(const Tensor& t) const;

  std::size_t op_count() const { return ops_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  const OpRecord& op(std::size_t i) const { return ops_.at(i); }
  // Index of the op producing `node`, or -1 for leaves.
  int producer(int node) const { return nodes_.at(static_cast<std::size_t>(node)).producer; }

 private:
  struct Node {
    int producer = -1;
    Parameter* param = nullptr;
  };

  Tensor make_node(const Tensor& value, int producer, Parameter* param);
  std::vector<Tensor> run_backward(const Tensor& loss, bool create_graph);

  std::vector<Node> nodes_;
  std::vector<OpRecord> ops_;
  std::unordered_map<const Parameter*, Tensor> bound_;
  std::unordered_map<int, Tensor> leaf_grads_;
};

}  // namespace genhead
