#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fsce/tensor.hpp"

namespace fsce {

enum class Mode { train, eval };

// A value in the computation graph. Gradient storage is allocated on first use.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;

  Tensor<T>& grad_ref() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.shape() == value.shape() && !grad.empty(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

// A learnable tensor. `dims` is the logical shape written to checkpoints
// (e.g. rank 2 for a linear weight stored as (out, in, 1, 1)).
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::uint32_t> dims;
  Var<T> var;

  Parameter() = default;
  Parameter(std::string param_name, std::vector<std::uint32_t> logical_dims, Shape shape);

  Tensor<T>& value() { return var->value; }
  const Tensor<T>& value() const { return var->value; }
  Tensor<T>& grad() { return var->grad; }
  const Tensor<T>& grad() const { return var->grad; }
  void zero_grad() { var->grad_ref().fill(T(0)); }
  std::size_t numel() const { return var->value.size(); }
};

// A non-learnable tensor that still belongs in checkpoints (batchnorm running stats).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<std::uint32_t> dims;
  Tensor<T> value;
};

// Ordered record of differentiable operations. backward() replays the
// recorded closures in strict reverse order, each exactly once.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void push(const char* op, std::function<void()> backward_fn);
  void backward(const Var<T>& loss);
  void clear();
  std::size_t size() const { return entries_.size(); }

  // Names of the operations visited by the last backward(), in visit order.
  const std::vector<const char*>& last_visit_order() const { return visited_; }
  // Names of recorded operations, in execution order.
  std::vector<const char*> recorded_ops() const;

 private:
  struct Entry {
    const char* op;
    std::function<void()> fn;
  };
  bool recording_;
  std::vector<Entry> entries_;
  std::vector<const char*> visited_;
};

// True when any of the inputs needs a gradient and the tape is recording.
template <typename T>
bool needs_grad(const Tape<T>& tape, std::initializer_list<const Var<T>*> inputs) {
  if (!tape.recording()) return false;
  for (const auto* v : inputs) {
    if (*v && (*v)->requires_grad) return true;
  }
  return false;
}

extern template struct Parameter<float>;
extern template struct Parameter<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fsce
