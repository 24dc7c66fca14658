#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace sit {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> values;
  bool requires_grad{false};
  std::vector<T> grad;  // empty until first accumulation
};

/// Dense n-dimensional array. Handles are shallow copies sharing one node;
/// every op allocates fresh storage for its result. float is the training
/// dtype, double the gradient-check dtype (see TensorT<double> aliases).
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape);  // zero-filled
  TensorT(Shape shape, std::vector<T> values);

  static TensorT scalar(T value) { return TensorT({1}, {value}); }
  static TensorT full(Shape shape, T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }

  const T* data() const { return impl_->values.data(); }
  T* data() { return impl_->values.data(); }
  const std::vector<T>& values() const { return impl_->values; }
  std::vector<T>& values() { return impl_->values; }

  bool requires_grad() const { return impl_->requires_grad; }
  TensorT& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access.
  std::vector<T>& grad();
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  T item() const;
  T at(std::initializer_list<int64_t> index) const;
  bool all_finite() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return impl_; }

 private:
  std::shared_ptr<TensorNode<T>> impl_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

/// Dtype conversion; detached from any recorded graph.
template <typename To, typename From>
TensorT<To> cast(const TensorT<From>& t);

/// A named trainable tensor. Names are unique within a model and determine
/// checkpoint identity (e.g. "blocks.0.attn.wq.weight").
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> tensor;
};

using Parameter = ParameterT<float>;

}  // namespace sit
