#pragma once

#include <vector>

#include "sit/autograd.hpp"
#include "sit/tensor.hpp"

namespace sit {

// Elementwise binary ops. b must match a's shape exactly, be a trailing
// suffix of it (bias over rows, positional table over a batch), or be
// scalar. Broadcasting beyond trailing-suffix is out of scope.
template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T> TensorT<T> add_scalar(const TensorT<T>& a, double s);
template <typename T> TensorT<T> mul_scalar(const TensorT<T>& a, double s);
template <typename T> TensorT<T> neg(const TensorT<T>& a);
template <typename T> TensorT<T> abs_val(const TensorT<T>& a);  // d/dx at 0 taken as 0
template <typename T> TensorT<T> exp_elem(const TensorT<T>& a);

/// Tanh-approximation GELU:
///   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T> TensorT<T> gelu(const TensorT<T>& a);

/// (m,k) x (k,n) -> (m,n). Rank-2 only.
template <typename T> TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> transpose(const TensorT<T>& a);  // rank-2

/// Batched matmul over matching leading dim: (B,m,k) x (B,k,n) -> (B,m,n).
/// With transpose_b, b is (B,n,k) and used transposed.
template <typename T> TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool transpose_b = false);

template <typename T> TensorT<T> reshape(const TensorT<T>& a, Shape shape);

/// Numerically stabilized by max subtraction along `axis`.
template <typename T> TensorT<T> softmax(const TensorT<T>& a, int axis);
template <typename T> TensorT<T> log_softmax(const TensorT<T>& a, int axis);

/// Per-vector normalization over the last axis, then affine by gamma/beta.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta, double eps = 1e-5);

template <typename T> TensorT<T> sum_all(const TensorT<T>& a);   // -> scalar
template <typename T> TensorT<T> mean_all(const TensorT<T>& a);  // -> scalar

/// out[i] = x[i, index[i]] for x (N,M). The index is not differentiated.
template <typename T> TensorT<T> take_per_row(const TensorT<T>& x, const std::vector<int64_t>& index);

/// Rows scaled to unit L2 norm; norms floored at norm_floor.
template <typename T> TensorT<T> l2_normalize_rows(const TensorT<T>& x, double norm_floor = 1e-12);

/// x (B,S,D) -> (B,count,D), tokens [start, start+count) of every sample.
template <typename T> TensorT<T> slice_tokens(const TensorT<T>& x, int64_t start, int64_t count);

/// (N,da) ++ (N,db) -> (N,da+db).
template <typename T> TensorT<T> concat_cols(const TensorT<T>& a, const TensorT<T>& b);

/// patches (B,S,D) with task-token vectors tok0,tok1 (D) -> (B,S+2,D),
/// token order [tok0, tok1, patches...]. Token grads sum over the batch.
template <typename T>
TensorT<T> prepend_task_tokens(const TensorT<T>& patches, const TensorT<T>& tok0, const TensorT<T>& tok1);

/// (B,S,D) -> (B*h,S,D/h) and back. Pure index permutations.
template <typename T> TensorT<T> split_heads(const TensorT<T>& x, int64_t num_heads);
template <typename T> TensorT<T> merge_heads(const TensorT<T>& x, int64_t num_heads);

/// x (M,K) * w (K,N) + b (N).
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

}  // namespace sit
