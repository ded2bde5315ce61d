#include "genhead/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "genhead/ops.hpp"

namespace genhead {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  validate_shape(shape_);
  if (values.size() != numel(shape_)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_ = std::make_shared<std::vector<double>>(numel(shape_), fill);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tensor::clone() const {
  return Tensor(shape_, std::vector<double>(data_->begin(), data_->end()));
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

void Parameter::zero_grad() {
  grad.assign(value.size(), 0.0);
}

Tensor Tape::make_node(const Tensor& value, int producer, Parameter* param) {
  Tensor t = value.detach();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{producer, param});
  return t;
}

Tensor Tape::watch(Parameter& p) {
  if (!p.requires_grad) return p.value.detach();
  if (auto it = bound_.find(&p); it != bound_.end()) return it->second;
  Tensor t = make_node(p.value, -1, &p);
  bound_.emplace(&p, t);
  return t;
}

Tensor Tape::variable(const Tensor& value) { return make_node(value, -1, nullptr); }

Tensor Tape::record(std::string_view name, std::vector<Tensor> inputs, Tensor output,
                    BackwardFn backward) {
  bool any = false;
  for (const auto& in : inputs) {
    if (!in.tracked()) continue;
    if (in.tape() != this) throw std::logic_error("op '" + std::string(name) + "' mixes tapes");
    any = true;
  }
  if (!any) return output;
  const int op_index = static_cast<int>(ops_.size());
  Tensor out = make_node(output, op_index, nullptr);
  ops_.push_back(OpRecord{std::string(name), std::move(inputs), out, std::move(backward)});
  return out;
}

std::vector<Tensor> Tape::run_backward(const Tensor& loss, bool create_graph) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward needs a scalar loss");
  }
  if (loss.tape() != this) throw std::logic_error("loss is not on this tape");

  // Nodes appended while differentiating (create_graph) never need gradients
  // in this pass, so the table covers the pre-existing nodes only.
  const std::size_t n_nodes = nodes_.size();
  std::vector<Tensor> grads(n_nodes);
  grads[static_cast<std::size_t>(loss.node())] = Tensor(loss.shape(), 1.0);

  auto accumulate = [&](int node, const Tensor& g) {
    auto& slot = grads[static_cast<std::size_t>(node)];
    slot = slot.defined() ? add(slot, g) : g;
  };

  for (int i = nodes_[static_cast<std::size_t>(loss.node())].producer; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const Tensor g = grads[static_cast<std::size_t>(ops_[idx].output.node())];
    if (!g.defined()) continue;

    // Copy out: the rule may append to ops_.
    std::vector<Tensor> original = ops_[idx].inputs;
    Tensor output = ops_[idx].output;
    BackwardFn fn = ops_[idx].backward;

    std::vector<Tensor> args = original;
    if (!create_graph) {
      for (auto& a : args) a = a.detach();
      output = output.detach();
    }
    const std::vector<Tensor> in_grads = fn(create_graph ? g : g.detach(), args, output);
    for (std::size_t j = 0; j < original.size(); ++j) {
      if (!original[j].tracked() || !in_grads[j].defined()) continue;
      if (in_grads[j].shape() != original[j].shape()) {
        throw std::logic_error("backward of '" + ops_[idx].name + "' produced gradient of shape " +
                               to_string(in_grads[j].shape()) + " for input " +
                               to_string(original[j].shape()));
      }
      accumulate(original[j].node(), in_grads[j]);
    }
  }
  return grads;
}

void Tape::backward(const Tensor& loss) {
  const auto grads = run_backward(loss, false);
  for (std::size_t n = 0; n < grads.size(); ++n) {
    if (!grads[n].defined() || nodes_[n].producer >= 0) continue;
    leaf_grads_[static_cast<int>(n)] = grads[n];
    if (Parameter* p = nodes_[n].param) {
      const auto g = grads[n].values();
      if (p->grad.size() != g.size()) p->grad.assign(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
  }
}

std::vector<Tensor> Tape::gradients(const Tensor& loss, std::span<const Tensor> wrt,
                                    bool create_graph) {
  const auto grads = run_backward(loss, create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.tracked() && w.tape() == this && static_cast<std::size_t>(w.node()) < grads.size() &&
        grads[static_cast<std::size_t>(w.node())].defined()) {
      out.push_back(grads[static_cast<std::size_t>(w.node())]);
    } else {
      out.emplace_back(w.shape(), 0.0);
    }
  }
  return out;
}

std::optional<Tensor> Tape::grad(const Tensor& t) const {
  if (!t.tracked() || t.tape() != this) return std::nullopt;
  if (auto it = leaf_grads_.find(t.node()); it != leaf_grads_.end()) return it->second;
  return std::nullopt;
}

}  // namespace genhead
