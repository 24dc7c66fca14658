#include "sit/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "sit/ops.hpp"

namespace sit {

template <typename T>
TensorT<T> l1_loss(const TensorT<T>& prediction, const TensorT<T>& target) {
  if (prediction.shape() != target.shape()) {
    throw std::invalid_argument("l1_loss: prediction " + shape_str(prediction.shape()) + " vs target " +
                                shape_str(target.shape()));
  }
  return mean_all(abs_val(sub(prediction, target)));
}

template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int64_t>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be (N,classes), got " + shape_str(logits.shape()));
  }
  if (static_cast<int64_t>(labels.size()) != logits.dim(0)) {
    throw std::invalid_argument("cross_entropy: need one label per row");
  }
  return neg(mean_all(take_per_row(log_softmax(logits, 1), labels)));
}

template <typename T>
TensorT<T> nt_xent(const TensorT<T>& embeddings, const std::vector<int64_t>& pair_index, double temperature) {
  if (embeddings.rank() != 2) {
    throw std::invalid_argument("nt_xent: embeddings must be (2N,d), got " + shape_str(embeddings.shape()));
  }
  const int64_t rows = embeddings.dim(0), d = embeddings.dim(1);
  if (rows < 4 || rows % 2 != 0) {
    throw std::invalid_argument("nt_xent: needs an even number of rows covering at least two pairs, got " +
                                std::to_string(rows));
  }
  if (static_cast<int64_t>(pair_index.size()) != rows) {
    throw std::invalid_argument("nt_xent: pair_index must have one entry per row");
  }
  for (int64_t i = 0; i < rows; ++i) {
    const int64_t p = pair_index[static_cast<size_t>(i)];
    if (p < 0 || p >= rows || p == i || pair_index[static_cast<size_t>(p)] != i) {
      throw std::invalid_argument("nt_xent: pair_index must pair each row with a distinct partner, both ways");
    }
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("nt_xent: temperature must be positive");
  for (int64_t r = 0; r < rows; ++r) {
    bool nonzero = false;
    for (int64_t j = 0; j < d; ++j) nonzero |= embeddings.data()[r * d + j] != T(0);
    if (!nonzero) {
      throw std::invalid_argument("nt_xent: row " + std::to_string(r) + " is all zero and has no direction");
    }
  }

  TensorT<T> z = l2_normalize_rows(embeddings);
  TensorT<T> sim = mul_scalar(matmul(z, transpose(z)), 1.0 / temperature);
  // Self-similarities leave the softmax via a constant (untracked) mask.
  TensorT<T> mask({rows, rows});
  for (int64_t i = 0; i < rows; ++i) mask.data()[i * rows + i] = T(-1e9);
  return neg(mean_all(take_per_row(log_softmax(add(sim, mask), 1), pair_index)));
}

namespace {

template <typename T>
const TensorT<T>* check_task_losses(const char* who, const TaskLossesT<T>& losses) {
  const TensorT<T>* any = nullptr;
  for (const TensorT<T>* t : {&losses.reconstruction, &losses.rotation, &losses.contrastive}) {
    if (!t->defined()) continue;
    if (t->numel() != 1) throw std::invalid_argument(std::string(who) + ": task losses must be scalars");
    any = t;
  }
  if (!any) throw std::invalid_argument(std::string(who) + ": at least one task loss required");
  return any;
}

template <typename T>
TensorT<T> accumulate(TensorT<T> acc, TensorT<T> term) {
  return acc.defined() ? add(acc, term) : term;
}

}  // namespace

template <typename T>
TensorT<T> fixed_weighted_total(const TaskLossesT<T>& losses, const double alphas[3], LossBreakdown* breakdown) {
  check_task_losses("fixed_weighted_total", losses);
  TensorT<T> total;
  LossBreakdown b;
  if (losses.reconstruction.defined()) {
    total = accumulate(total, mul_scalar(losses.reconstruction, alphas[0]));
    b.reconstruction = static_cast<double>(losses.reconstruction.item());
    b.weights[0] = alphas[0];
  }
  if (losses.rotation.defined()) {
    total = accumulate(total, mul_scalar(losses.rotation, alphas[1]));
    b.rotation = static_cast<double>(losses.rotation.item());
    b.weights[1] = alphas[1];
  }
  if (losses.contrastive.defined()) {
    total = accumulate(total, mul_scalar(losses.contrastive, alphas[2]));
    b.contrastive = static_cast<double>(losses.contrastive.item());
    b.weights[2] = alphas[2];
  }
  b.total = static_cast<double>(total.item());
  if (breakdown) *breakdown = b;
  return total;
}

template <typename T>
UncertaintyWeightsT<T>::UncertaintyWeightsT(double init)
    : s1(TensorT<T>::scalar(static_cast<T>(init))),
      s2(TensorT<T>::scalar(static_cast<T>(init))),
      s3(TensorT<T>::scalar(static_cast<T>(init))) {
  s1.set_requires_grad(true);
  s2.set_requires_grad(true);
  s3.set_requires_grad(true);
}

template <typename T>
std::vector<ParameterT<T>> UncertaintyWeightsT<T>::parameters() {
  return {{"uncertainty.s1", s1}, {"uncertainty.s2", s2}, {"uncertainty.s3", s3}};
}

template <typename T>
TensorT<T> uncertainty_total(const TaskLossesT<T>& losses, UncertaintyWeightsT<T>& weights,
                             LossBreakdown* breakdown) {
  check_task_losses("uncertainty_total", losses);
  TensorT<T> total;
  TensorT<T> reg;
  LossBreakdown b;
  if (losses.reconstruction.defined()) {
    TensorT<T> w = exp_elem(mul_scalar(weights.s1, -0.5));
    total = accumulate(total, mul(w, losses.reconstruction));
    reg = accumulate(reg, weights.s1);
    b.reconstruction = static_cast<double>(losses.reconstruction.item());
    b.weights[0] = static_cast<double>(w.item());
  }
  if (losses.rotation.defined()) {
    TensorT<T> w = exp_elem(mul_scalar(weights.s2, -1.0));
    total = accumulate(total, mul(w, losses.rotation));
    reg = accumulate(reg, weights.s2);
    b.rotation = static_cast<double>(losses.rotation.item());
    b.weights[1] = static_cast<double>(w.item());
  }
  if (losses.contrastive.defined()) {
    TensorT<T> w = exp_elem(mul_scalar(weights.s3, -1.0));
    total = accumulate(total, mul(w, losses.contrastive));
    reg = accumulate(reg, weights.s3);
    b.contrastive = static_cast<double>(losses.contrastive.item());
    b.weights[2] = static_cast<double>(w.item());
  }
  total = add(total, mul_scalar(reg, 0.5));
  b.total = static_cast<double>(total.item());
  if (breakdown) *breakdown = b;
  return total;
}

#define SIT_INSTANTIATE_LOSSES(T)                                                                       \
  template TensorT<T> l1_loss(const TensorT<T>&, const TensorT<T>&);                                    \
  template TensorT<T> cross_entropy(const TensorT<T>&, const std::vector<int64_t>&);                    \
  template TensorT<T> nt_xent(const TensorT<T>&, const std::vector<int64_t>&, double);                  \
  template TensorT<T> fixed_weighted_total(const TaskLossesT<T>&, const double[3], LossBreakdown*);     \
  template struct UncertaintyWeightsT<T>;                                                               \
  template TensorT<T> uncertainty_total(const TaskLossesT<T>&, UncertaintyWeightsT<T>&, LossBreakdown*);

SIT_INSTANTIATE_LOSSES(float)
SIT_INSTANTIATE_LOSSES(double)

#undef SIT_INSTANTIATE_LOSSES

}  // namespace sit
