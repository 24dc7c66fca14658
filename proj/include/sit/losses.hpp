#pragma once

#include <cstdint>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

// Mean absolute error over all elements. Shapes must match exactly.
template <typename T>
TensorT<T> l1_loss(const TensorT<T>& prediction, const TensorT<T>& target);

// Mean softmax cross-entropy, labels as class indices into the logit columns.
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int64_t>& labels);

// Normalized-temperature cross-entropy over cosine similarities. embeddings
// holds 2N rows (N >= 2); pair_index maps each row to its positive partner and
// must be a fixed-point-free involution. Every anchor contributes one term:
// -log softmax_j(sim(i,j)/tau) evaluated at j = pair_index[i], with sim(i,i)
// excluded from the softmax.
template <typename T>
TensorT<T> nt_xent(const TensorT<T>& embeddings, const std::vector<int64_t>& pair_index,
                   double temperature = 0.5);

// Per-term values of the most recent combined loss, for logging. weights are
// the effective multipliers applied to each term (reconstruction, rotation,
// contrastive); a disabled task reports weight 0.
struct LossBreakdown {
  double reconstruction = 0.0;
  double rotation = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double weights[3] = {0.0, 0.0, 0.0};
};

// Scalar task losses; leave a member default-constructed to disable the task.
template <typename T>
struct TaskLossesT {
  TensorT<T> reconstruction;
  TensorT<T> rotation;
  TensorT<T> contrastive;
};

using TaskLosses = TaskLossesT<float>;

// total = a1*L_rec + a2*L_rot + a3*L_con over the enabled tasks.
template <typename T>
TensorT<T> fixed_weighted_total(const TaskLossesT<T>& losses, const double alphas[3],
                                LossBreakdown* breakdown = nullptr);

// Learned homoscedastic task weights. Each s is log alpha^2 for its task, so
// the weights stay positive without constraints; s = 0 means weight 1.
template <typename T>
struct UncertaintyWeightsT {
  TensorT<T> s1, s2, s3;

  explicit UncertaintyWeightsT(double init = 0.0);
  std::vector<ParameterT<T>> parameters();
};

using UncertaintyWeights = UncertaintyWeightsT<float>;

// total = exp(-s1/2)*L_rec + exp(-s2)*L_rot + exp(-s3)*L_con + sum(s)/2,
// where the sum runs over enabled tasks only. The reconstruction term uses
// exp(-s1/2) (an L1 term corresponds to a Laplace likelihood, linear in the
// scale) while the classification-style terms use exp(-s). With every s at 0
// this reduces exactly to the plain sum of the task losses.
template <typename T>
TensorT<T> uncertainty_total(const TaskLossesT<T>& losses, UncertaintyWeightsT<T>& weights,
                             LossBreakdown* breakdown = nullptr);

}  // namespace sit
