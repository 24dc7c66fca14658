#include "sit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sit {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

template <typename T>
TensorT<T>::TensorT(Shape shape) : impl_(std::make_shared<TensorNode<T>>()) {
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->values.assign(static_cast<size_t>(shape_numel(impl_->shape)), T(0));
}

template <typename T>
TensorT<T>::TensorT(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorNode<T>>()) {
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value) {
  TensorT t(std::move(shape));
  for (T& v : t.impl_->values) v = value;
  return t;
}

template <typename T>
std::vector<T>& TensorT<T>::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), T(0));
  return impl_->grad;
}

template <typename T>
void TensorT<T>::zero_grad() {
  impl_->grad.assign(impl_->values.size(), T(0));
}

template <typename T>
T TensorT<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->values[0];
}

template <typename T>
T TensorT<T>::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw std::invalid_argument("at: index rank mismatch");
  int64_t flat = 0;
  int axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= dim(axis)) throw std::invalid_argument("at: index out of range");
    flat = flat * dim(axis) + i;
    ++axis;
  }
  return impl_->values[static_cast<size_t>(flat)];
}

template <typename T>
bool TensorT<T>::all_finite() const {
  for (T v : impl_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename To, typename From>
TensorT<To> cast(const TensorT<From>& t) {
  std::vector<To> out(t.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(t.values()[i]);
  return TensorT<To>(t.shape(), std::move(out));
}

template class TensorT<float>;
template class TensorT<double>;
template TensorT<float> cast<float, double>(const TensorT<double>&);
template TensorT<double> cast<double, float>(const TensorT<float>&);
template TensorT<float> cast<float, float>(const TensorT<float>&);
template TensorT<double> cast<double, double>(const TensorT<double>&);

}  // namespace sit
