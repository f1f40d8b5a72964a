#pragma once

// Reverse-mode differentiation tape.
//
// Every operation appends a node holding its output value and a backward
// closure. backward() seeds d(loss)/d(loss) = 1 and visits the nodes in exact
// reverse recording order; closures add into their inputs' gradient buffers,
// so a value consumed twice receives the sum of both paths. Parameter leaves
// flush their accumulated gradient into Parameter::grad at the end of the sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "rpg/nn/tensor.hpp"

namespace rpg::nn {

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    return {this, nodes_.size() - 1};
  }

  /// Trainable leaf; its gradient is added to p.grad by backward().
  Var<T> parameter(Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = true;
    return {this, nodes_.size() - 1};
  }

  /// Parameter read as a constant: no gradient is produced for it.
  Var<T> frozen(const Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.external = &p.value;
    return {this, nodes_.size() - 1};
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) {
      if (v.valid() && &v.tape() != this) throw std::invalid_argument("Tape::record: input from another tape");
      needs = needs || (v.valid() && requires_grad(v.id()));
    }
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient buffer of node `id`, zero-initialized on first touch.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() != value(id).size()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var<T> loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss recorded on another tape");
    if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
    }
    for (Node& n : nodes_)
      if (n.param && !n.grad.empty()) n.param->grad += n.grad;
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

}  // namespace rpg::nn
