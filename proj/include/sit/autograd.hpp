#pragma once

#include <functional>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

/// Reverse-mode tape (Wengert list). Ops executed while a tape is active
/// append one backward closure each; backward() replays the closures in
/// reverse execution order, which is a reverse topological order of the
/// recorded graph, then clears the tape.
///
/// Construction installs the tape as the active one for the current thread;
/// destruction restores the previous tape. One tape per training step,
/// single-threaded within a step.
template <typename T>
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }
  size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  /// Seeds d(loss)/d(loss)=1 and propagates to every recorded input.
  /// Gradients accumulate across multiple uses of a tensor. loss must be
  /// scalar. The tape is cleared afterwards.
  void backward(TensorT<T>& loss);

  static GradTape* active();

 private:
  std::vector<std::function<void()>> steps_;
  GradTape* prev_{nullptr};
};

/// True when an active tape should record an op over these inputs.
template <typename T>
bool tracing(std::initializer_list<const TensorT<T>*> inputs);

/// Grad buffer of a node, allocated as zeros on first use.
template <typename T>
std::vector<T>& grad_buf(const std::shared_ptr<TensorNode<T>>& node) {
  if (node->grad.empty()) node->grad.assign(node->values.size(), T(0));
  return node->grad;
}

}  // namespace sit
