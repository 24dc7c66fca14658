#include "sit/autograd.hpp"

#include <stdexcept>

namespace sit {

namespace {
template <typename T>
GradTape<T>*& active_slot() {
  thread_local GradTape<T>* tape = nullptr;
  return tape;
}
}  // namespace

template <typename T>
GradTape<T>::GradTape() {
  prev_ = active_slot<T>();
  active_slot<T>() = this;
}

template <typename T>
GradTape<T>::~GradTape() {
  active_slot<T>() = prev_;
}

template <typename T>
GradTape<T>* GradTape<T>::active() {
  return active_slot<T>();
}

template <typename T>
void GradTape<T>::backward(TensorT<T>& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  loss.zero_grad();
  loss.grad()[0] = T(1);
  for (size_t i = steps_.size(); i-- > 0;) steps_[i]();
  clear();
}

template <typename T>
bool tracing(std::initializer_list<const TensorT<T>*> inputs) {
  if (GradTape<T>::active() == nullptr) return false;
  for (const TensorT<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template class GradTape<float>;
template class GradTape<double>;
template bool tracing<float>(std::initializer_list<const TensorT<float>*>);
template bool tracing<double>(std::initializer_list<const TensorT<double>*>);

}  // namespace sit
