#include "fsce/autograd.hpp"

namespace fsce {

template <typename T>
Parameter<T>::Parameter(std::string param_name, std::vector<std::uint32_t> logical_dims, Shape shape)
    : name(std::move(param_name)), dims(std::move(logical_dims)), var(make_var(Tensor<T>(shape), true)) {
  var->grad_ref();
}

template <typename T>
void Tape<T>::push(const char* op, std::function<void()> backward_fn) {
  entries_.push_back({op, std::move(backward_fn)});
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss) throw ContractError("backward: null loss");
  if (loss->value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + loss->value.shape().str());
  }
  loss->grad_ref().fill(T(1));
  visited_.clear();
  visited_.reserve(entries_.size());
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    visited_.push_back(it->op);
    it->fn();
  }
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
}

template <typename T>
std::vector<const char*> Tape<T>::recorded_ops() const {
  std::vector<const char*> ops;
  ops.reserve(entries_.size());
  for (const auto& e : entries_) ops.push_back(e.op);
  return ops;
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fsce
