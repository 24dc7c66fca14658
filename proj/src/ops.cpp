#include "sit/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <stdexcept>

namespace sit {

namespace {

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
                 int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Validates the broadcast contract of the binary elementwise ops and returns
// b's element count; b indexes as flat % bn in a's row-major order.
template <typename T>
int64_t broadcast_count(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() == b.shape()) return b.numel();
  if (b.numel() == 1) return 1;
  if (b.rank() < a.rank()) {
    bool suffix = true;
    for (int i = 0; i < b.rank(); ++i) {
      if (b.dim(b.rank() - 1 - i) != a.dim(a.rank() - 1 - i)) suffix = false;
    }
    if (suffix) return b.numel();
  }
  throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()) + " are not broadcast-compatible");
}

// Decomposition of a shape around one axis for fiber-wise ops.
struct AxisSplit {
  int64_t outer, len, inner;
};

template <typename T>
AxisSplit split_axis(const char* op, const TensorT<T>& a, int axis) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                shape_str(a.shape()));
  }
  AxisSplit s{1, a.dim(axis), 1};
  for (int i = 0; i < axis; ++i) s.outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) s.inner *= a.dim(i);
  return s;
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  const int64_t bn = broadcast_count("add", a, b);
  const int64_t n = a.numel();
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  if (bn == n) {
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  } else {
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % bn];
  }
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, n, bn] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        T* ga = grad_buf(an).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
      }
      if (bnode->requires_grad) {
        T* gb = grad_buf(bnode).data();
        for (int64_t i = 0; i < n; ++i) gb[i % bn] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  const int64_t bn = broadcast_count("sub", a, b);
  const int64_t n = a.numel();
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i % bn];
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, n, bn] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        T* ga = grad_buf(an).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
      }
      if (bnode->requires_grad) {
        T* gb = grad_buf(bnode).data();
        for (int64_t i = 0; i < n; ++i) gb[i % bn] -= gy[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  const int64_t bn = broadcast_count("mul", a, b);
  const int64_t n = a.numel();
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i % bn];
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, n, bn] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        T* ga = grad_buf(an).data();
        const T* pb2 = bnode->values.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * pb2[i % bn];
      }
      if (bnode->requires_grad) {
        T* gb = grad_buf(bnode).data();
        const T* pa2 = an->values.data();
        for (int64_t i = 0; i < n; ++i) gb[i % bn] += gy[i] * pa2[i];
      }
    });
  }
  return out;
}

namespace {

// Shared scaffold for unary elementwise ops: fwd computes the output value,
// dfn the local derivative from (x, y).
template <typename T, typename Fwd, typename Dfn>
TensorT<T> unary_op(const TensorT<T>& a, Fwd fwd, Dfn dfn) {
  const int64_t n = a.numel();
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, n, dfn] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T* gy = on->grad.data();
      const T* px = an->values.data();
      const T* py = on->values.data();
      T* ga = grad_buf(an).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * dfn(px[i], py[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, double s) {
  const T c = static_cast<T>(s);
  return unary_op(
      a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, double s) {
  const T c = static_cast<T>(s);
  return unary_op(
      a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
TensorT<T> neg(const TensorT<T>& a) {
  return unary_op(
      a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
TensorT<T> abs_val(const TensorT<T>& a) {
  return unary_op(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
TensorT<T> exp_elem(const TensorT<T>& a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& a) {
  constexpr double kRoot2OverPi = 0.7978845608028654;
  constexpr double kCubic = 0.044715;
  return unary_op(
      a,
      [](T x) {
        const double xd = static_cast<double>(x);
        const double t = std::tanh(kRoot2OverPi * (xd + kCubic * xd * xd * xd));
        return static_cast<T>(0.5 * xd * (1.0 + t));
      },
      [](T x, T) {
        const double xd = static_cast<double>(x);
        const double u = kRoot2OverPi * (xd + kCubic * xd * xd * xd);
        const double t = std::tanh(u);
        const double du = kRoot2OverPi * (1.0 + 3.0 * kCubic * xd * xd);
        return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
      });
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out({m, n});
  gemm(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0), out.data(), n);
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, m, n, k] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        gemm(false, true, m, k, n, T(1), gy, n, bnode->values.data(), n, T(1), grad_buf(an).data(), k);
      }
      if (bnode->requires_grad) {
        gemm(true, false, k, n, m, T(1), an->values.data(), k, gy, n, T(1), grad_buf(bnode).data(), n);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expects rank-2, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  TensorT<T> out({n, m});
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  }
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, m, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T* gy = on->grad.data();
      T* ga = grad_buf(an).data();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) ga[i * n + j] += gy[j * m + i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw std::invalid_argument("bmm: expects rank-3 operands, got " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  const int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw std::invalid_argument("bmm: shapes disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                                (transpose_b ? " (b transposed)" : ""));
  }
  TensorT<T> out({batch, m, n});
  const int64_t sa = m * k, sb = b.dim(1) * b.dim(2), so = m * n;
  for (int64_t i = 0; i < batch; ++i) {
    gemm(false, transpose_b, m, n, k, T(1), a.data() + i * sa, k, b.data() + i * sb, transpose_b ? k : n, T(0),
         out.data() + i * so, n);
  }
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, batch, m, n, k, sa, sb, so, transpose_b] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        T* ga = grad_buf(an).data();
        for (int64_t i = 0; i < batch; ++i) {
          // dA = dC * B^T, or dC * B when b was used transposed
          gemm(false, !transpose_b, m, k, n, T(1), gy + i * so, n, bnode->values.data() + i * sb,
               transpose_b ? k : n, T(1), ga + i * sa, k);
        }
      }
      if (bnode->requires_grad) {
        T* gb = grad_buf(bnode).data();
        for (int64_t i = 0; i < batch; ++i) {
          if (transpose_b) {
            // C = A B^T with B (n,k): dB = dC^T A
            gemm(true, false, n, k, m, T(1), gy + i * so, n, an->values.data() + i * sa, k, T(1), gb + i * sb, k);
          } else {
            // dB = A^T dC
            gemm(true, false, k, n, m, T(1), an->values.data() + i * sa, k, gy + i * so, n, T(1), gb + i * sb, n);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  TensorT<T> out(std::move(shape), a.values());
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T* gy = on->grad.data();
      T* ga = grad_buf(an).data();
      const int64_t n = static_cast<int64_t>(on->grad.size());
      for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& a, int axis) {
  const AxisSplit s = split_axis("softmax", a, axis);
  TensorT<T> out(a.shape());
  const T* px = a.data();
  T* py = out.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t in = 0; in < s.inner; ++in) {
      const int64_t base = o * s.len * s.inner + in;
      T mx = px[base];
      for (int64_t j = 1; j < s.len; ++j) mx = std::max(mx, px[base + j * s.inner]);
      T sum = T(0);
      for (int64_t j = 0; j < s.len; ++j) {
        const T e = std::exp(px[base + j * s.inner] - mx);
        py[base + j * s.inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (int64_t j = 0; j < s.len; ++j) py[base + j * s.inner] *= inv;
    }
  }
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, s] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T* gy = on->grad.data();
      const T* py2 = on->values.data();
      T* ga = grad_buf(an).data();
      for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
          const int64_t base = o * s.len * s.inner + in;
          T dot = T(0);
          for (int64_t j = 0; j < s.len; ++j) dot += gy[base + j * s.inner] * py2[base + j * s.inner];
          for (int64_t j = 0; j < s.len; ++j) {
            const int64_t idx = base + j * s.inner;
            ga[idx] += py2[idx] * (gy[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> log_softmax(const TensorT<T>& a, int axis) {
  const AxisSplit s = split_axis("log_softmax", a, axis);
  TensorT<T> out(a.shape());
  const T* px = a.data();
  T* py = out.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t in = 0; in < s.inner; ++in) {
      const int64_t base = o * s.len * s.inner + in;
      T mx = px[base];
      for (int64_t j = 1; j < s.len; ++j) mx = std::max(mx, px[base + j * s.inner]);
      T sum = T(0);
      for (int64_t j = 0; j < s.len; ++j) sum += std::exp(px[base + j * s.inner] - mx);
      const T lse = mx + std::log(sum);
      for (int64_t j = 0; j < s.len; ++j) py[base + j * s.inner] = px[base + j * s.inner] - lse;
    }
  }
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, s] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T* gy = on->grad.data();
      const T* py2 = on->values.data();
      T* ga = grad_buf(an).data();
      for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
          const int64_t base = o * s.len * s.inner + in;
          T total = T(0);
          for (int64_t j = 0; j < s.len; ++j) total += gy[base + j * s.inner];
          for (int64_t j = 0; j < s.len; ++j) {
            const int64_t idx = base + j * s.inner;
            ga[idx] += gy[idx] - std::exp(py2[idx]) * total;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta, double eps) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: scalar input");
  const int64_t d = x.dim(x.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw std::invalid_argument("layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  }
  const int64_t rows = x.numel() / d;
  TensorT<T> out(x.shape());
  std::vector<T> xhat(static_cast<size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<size_t>(rows));
  const T* px = x.data();
  const T* pg = gamma.data();
  const T* pb = beta.data();
  T* py = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T mean = T(0);
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (int64_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * inv;
      xhat[static_cast<size_t>(r * d + j)] = h;
      py[r * d + j] = h * pg[j] + pb[j];
    }
  }
  if (tracing<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    GradTape<T>::active()->record([xn, gn, bn, on, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (bn->requires_grad) {
        T* gb = grad_buf(bn).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
        }
      }
      if (gn->requires_grad) {
        T* gg = grad_buf(gn).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < d; ++j) gg[j] += gy[r * d + j] * xhat[static_cast<size_t>(r * d + j)];
        }
      }
      if (xn->requires_grad) {
        T* gx = grad_buf(xn).data();
        const T* pg2 = gn->values.data();
        for (int64_t r = 0; r < rows; ++r) {
          // dxhat = gy * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          T m1 = T(0), m2 = T(0);
          for (int64_t j = 0; j < d; ++j) {
            const T dh = gy[r * d + j] * pg2[j];
            m1 += dh;
            m2 += dh * xhat[static_cast<size_t>(r * d + j)];
          }
          m1 /= static_cast<T>(d);
          m2 /= static_cast<T>(d);
          const T inv = inv_std[static_cast<size_t>(r)];
          for (int64_t j = 0; j < d; ++j) {
            const T dh = gy[r * d + j] * pg2[j];
            gx[r * d + j] += inv * (dh - m1 - xhat[static_cast<size_t>(r * d + j)] * m2);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
  const int64_t n = a.numel();
  T acc = T(0);
  const T* pa = a.data();
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  TensorT<T> out = TensorT<T>::scalar(acc);
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T g = on->grad[0];
      T* ga = grad_buf(an).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
  const int64_t n = a.numel();
  T acc = T(0);
  const T* pa = a.data();
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  TensorT<T> out = TensorT<T>::scalar(acc / static_cast<T>(n));
  if (tracing<T>({&a})) {
    out.set_requires_grad(true);
    auto an = a.node(), on = out.node();
    GradTape<T>::active()->record([an, on, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      const T g = on->grad[0] / static_cast<T>(n);
      T* ga = grad_buf(an).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorT<T> take_per_row(const TensorT<T>& x, const std::vector<int64_t>& index) {
  if (x.rank() != 2) throw std::invalid_argument("take_per_row: expects rank-2, got " + shape_str(x.shape()));
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (static_cast<int64_t>(index.size()) != rows) {
    throw std::invalid_argument("take_per_row: need one index per row");
  }
  for (int64_t i : index) {
    if (i < 0 || i >= cols) throw std::invalid_argument("take_per_row: index " + std::to_string(i) + " out of range");
  }
  TensorT<T> out({rows});
  const T* px = x.data();
  T* py = out.data();
  for (int64_t r = 0; r < rows; ++r) py[r] = px[r * cols + index[static_cast<size_t>(r)]];
  if (tracing<T>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, rows, cols, index] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t r = 0; r < rows; ++r) gx[r * cols + index[static_cast<size_t>(r)]] += gy[r];
    });
  }
  return out;
}

template <typename T>
TensorT<T> l2_normalize_rows(const TensorT<T>& x, double norm_floor) {
  if (x.rank() != 2) throw std::invalid_argument("l2_normalize_rows: expects rank-2, got " + shape_str(x.shape()));
  const int64_t rows = x.dim(0), d = x.dim(1);
  TensorT<T> out(x.shape());
  std::vector<T> eff_norm(static_cast<size_t>(rows));
  std::vector<uint8_t> floored(static_cast<size_t>(rows));
  const T* px = x.data();
  T* py = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    T sq = T(0);
    for (int64_t j = 0; j < d; ++j) sq += px[r * d + j] * px[r * d + j];
    const T n = std::sqrt(sq);
    const T eff = std::max(static_cast<T>(norm_floor), n);
    eff_norm[static_cast<size_t>(r)] = eff;
    floored[static_cast<size_t>(r)] = n < static_cast<T>(norm_floor) ? 1 : 0;
    for (int64_t j = 0; j < d; ++j) py[r * d + j] = px[r * d + j] / eff;
  }
  if (tracing<T>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    GradTape<T>::active()->record(
        [xn, on, rows, d, eff_norm = std::move(eff_norm), floored = std::move(floored)] {
          if (on->grad.empty() || !xn->requires_grad) return;
          const T* gy = on->grad.data();
          const T* py2 = on->values.data();
          T* gx = grad_buf(xn).data();
          for (int64_t r = 0; r < rows; ++r) {
            const T inv = T(1) / eff_norm[static_cast<size_t>(r)];
            if (floored[static_cast<size_t>(r)]) {
              // below the floor the divisor is constant
              for (int64_t j = 0; j < d; ++j) gx[r * d + j] += gy[r * d + j] * inv;
              continue;
            }
            T dot = T(0);
            for (int64_t j = 0; j < d; ++j) dot += gy[r * d + j] * py2[r * d + j];
            for (int64_t j = 0; j < d; ++j) {
              gx[r * d + j] += (gy[r * d + j] - py2[r * d + j] * dot) * inv;
            }
          }
        });
  }
  return out;
}

template <typename T>
TensorT<T> slice_tokens(const TensorT<T>& x, int64_t start, int64_t count) {
  if (x.rank() != 3) throw std::invalid_argument("slice_tokens: expects rank-3, got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
  if (start < 0 || count <= 0 || start + count > s) {
    throw std::invalid_argument("slice_tokens: range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") out of " + std::to_string(s) + " tokens");
  }
  TensorT<T> out({b, count, d});
  const T* px = x.data();
  T* py = out.data();
  for (int64_t i = 0; i < b; ++i) {
    const T* src = px + (i * s + start) * d;
    T* dst = py + i * count * d;
    for (int64_t j = 0; j < count * d; ++j) dst[j] = src[j];
  }
  if (tracing<T>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, b, s, d, start, count] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t i = 0; i < b; ++i) {
        T* dst = gx + (i * s + start) * d;
        const T* src = gy + i * count * d;
        for (int64_t j = 0; j < count * d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat_cols(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("concat_cols: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int64_t rows = a.dim(0), da = a.dim(1), db = b.dim(1);
  TensorT<T> out({rows, da + db});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < da; ++j) po[r * (da + db) + j] = pa[r * da + j];
    for (int64_t j = 0; j < db; ++j) po[r * (da + db) + da + j] = pb[r * db + j];
  }
  if (tracing<T>({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bnode = b.node(), on = out.node();
    GradTape<T>::active()->record([an, bnode, on, rows, da, db] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (an->requires_grad) {
        T* ga = grad_buf(an).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < da; ++j) ga[r * da + j] += gy[r * (da + db) + j];
        }
      }
      if (bnode->requires_grad) {
        T* gb = grad_buf(bnode).data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < db; ++j) gb[r * db + j] += gy[r * (da + db) + da + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> prepend_task_tokens(const TensorT<T>& patches, const TensorT<T>& tok0, const TensorT<T>& tok1) {
  if (patches.rank() != 3) {
    throw std::invalid_argument("prepend_task_tokens: patches must be rank-3, got " + shape_str(patches.shape()));
  }
  const int64_t b = patches.dim(0), s = patches.dim(1), d = patches.dim(2);
  if (tok0.numel() != d || tok1.numel() != d) {
    throw std::invalid_argument("prepend_task_tokens: token width must be " + std::to_string(d));
  }
  TensorT<T> out({b, s + 2, d});
  const T* pp = patches.data();
  const T* p0 = tok0.data();
  const T* p1 = tok1.data();
  T* po = out.data();
  for (int64_t i = 0; i < b; ++i) {
    T* row = po + i * (s + 2) * d;
    for (int64_t j = 0; j < d; ++j) row[j] = p0[j];
    for (int64_t j = 0; j < d; ++j) row[d + j] = p1[j];
    const T* src = pp + i * s * d;
    for (int64_t j = 0; j < s * d; ++j) row[2 * d + j] = src[j];
  }
  if (tracing<T>({&patches, &tok0, &tok1})) {
    out.set_requires_grad(true);
    auto pn = patches.node(), n0 = tok0.node(), n1 = tok1.node(), on = out.node();
    GradTape<T>::active()->record([pn, n0, n1, on, b, s, d] {
      if (on->grad.empty()) return;
      const T* gy = on->grad.data();
      if (n0->requires_grad) {
        T* g0 = grad_buf(n0).data();
        for (int64_t i = 0; i < b; ++i) {
          const T* row = gy + i * (s + 2) * d;
          for (int64_t j = 0; j < d; ++j) g0[j] += row[j];
        }
      }
      if (n1->requires_grad) {
        T* g1 = grad_buf(n1).data();
        for (int64_t i = 0; i < b; ++i) {
          const T* row = gy + i * (s + 2) * d;
          for (int64_t j = 0; j < d; ++j) g1[j] += row[d + j];
        }
      }
      if (pn->requires_grad) {
        T* gp = grad_buf(pn).data();
        for (int64_t i = 0; i < b; ++i) {
          const T* row = gy + i * (s + 2) * d;
          T* dst = gp + i * s * d;
          for (int64_t j = 0; j < s * d; ++j) dst[j] += row[2 * d + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> split_heads(const TensorT<T>& x, int64_t num_heads) {
  if (x.rank() != 3) throw std::invalid_argument("split_heads: expects rank-3, got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
  if (num_heads <= 0 || d % num_heads != 0) {
    throw std::invalid_argument("split_heads: width " + std::to_string(d) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  const int64_t dh = d / num_heads;
  TensorT<T> out({b * num_heads, s, dh});
  const T* px = x.data();
  T* py = out.data();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t h = 0; h < num_heads; ++h) {
      for (int64_t t = 0; t < s; ++t) {
        const T* src = px + (i * s + t) * d + h * dh;
        T* dst = py + ((i * num_heads + h) * s + t) * dh;
        for (int64_t j = 0; j < dh; ++j) dst[j] = src[j];
      }
    }
  }
  if (tracing<T>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, b, s, d, num_heads, dh] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t i = 0; i < b; ++i) {
        for (int64_t h = 0; h < num_heads; ++h) {
          for (int64_t t = 0; t < s; ++t) {
            T* dst = gx + (i * s + t) * d + h * dh;
            const T* src = gy + ((i * num_heads + h) * s + t) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> merge_heads(const TensorT<T>& x, int64_t num_heads) {
  if (x.rank() != 3) throw std::invalid_argument("merge_heads: expects rank-3, got " + shape_str(x.shape()));
  const int64_t bh = x.dim(0), s = x.dim(1), dh = x.dim(2);
  if (num_heads <= 0 || bh % num_heads != 0) {
    throw std::invalid_argument("merge_heads: batch " + std::to_string(bh) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  const int64_t b = bh / num_heads, d = dh * num_heads;
  TensorT<T> out({b, s, d});
  const T* px = x.data();
  T* py = out.data();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t h = 0; h < num_heads; ++h) {
      for (int64_t t = 0; t < s; ++t) {
        const T* src = px + ((i * num_heads + h) * s + t) * dh;
        T* dst = py + (i * s + t) * d + h * dh;
        for (int64_t j = 0; j < dh; ++j) dst[j] = src[j];
      }
    }
  }
  if (tracing<T>({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    GradTape<T>::active()->record([xn, on, b, s, d, num_heads, dh] {
      if (on->grad.empty() || !xn->requires_grad) return;
      const T* gy = on->grad.data();
      T* gx = grad_buf(xn).data();
      for (int64_t i = 0; i < b; ++i) {
        for (int64_t h = 0; h < num_heads; ++h) {
          for (int64_t t = 0; t < s; ++t) {
            T* dst = gx + ((i * num_heads + h) * s + t) * dh;
            const T* src = gy + (i * s + t) * d + h * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  return add(matmul(x, w), b);
}

#define SIT_INSTANTIATE_OPS(T)                                                                      \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                                    \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                                    \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                                    \
  template TensorT<T> add_scalar(const TensorT<T>&, double);                                        \
  template TensorT<T> mul_scalar(const TensorT<T>&, double);                                        \
  template TensorT<T> neg(const TensorT<T>&);                                                       \
  template TensorT<T> abs_val(const TensorT<T>&);                                                   \
  template TensorT<T> exp_elem(const TensorT<T>&);                                                  \
  template TensorT<T> gelu(const TensorT<T>&);                                                      \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                                 \
  template TensorT<T> transpose(const TensorT<T>&);                                                 \
  template TensorT<T> bmm(const TensorT<T>&, const TensorT<T>&, bool);                              \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                                            \
  template TensorT<T> softmax(const TensorT<T>&, int);                                              \
  template TensorT<T> log_softmax(const TensorT<T>&, int);                                          \
  template TensorT<T> layer_norm(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, double);  \
  template TensorT<T> sum_all(const TensorT<T>&);                                                   \
  template TensorT<T> mean_all(const TensorT<T>&);                                                  \
  template TensorT<T> take_per_row(const TensorT<T>&, const std::vector<int64_t>&);                 \
  template TensorT<T> l2_normalize_rows(const TensorT<T>&, double);                                 \
  template TensorT<T> slice_tokens(const TensorT<T>&, int64_t, int64_t);                            \
  template TensorT<T> concat_cols(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> prepend_task_tokens(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&); \
  template TensorT<T> split_heads(const TensorT<T>&, int64_t);                                      \
  template TensorT<T> merge_heads(const TensorT<T>&, int64_t);                                      \
  template TensorT<T> linear(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);

SIT_INSTANTIATE_OPS(float)
SIT_INSTANTIATE_OPS(double)

#undef SIT_INSTANTIATE_OPS

}  // namespace sit
