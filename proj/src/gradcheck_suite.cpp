#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sit/autograd.hpp"
#include "sit/gradcheck.hpp"
#include "sit/losses.hpp"
#include "sit/model.hpp"
#include "sit/ops.hpp"
#include "sit/rng.hpp"

namespace sit {
namespace {

Tensor64 rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

/// Values bounded away from zero so |x| stays differentiable under the
/// finite-difference step.
Tensor64 rand_signed_away_from_zero(Shape shape, Rng& rng) {
  Tensor64 t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t.data()[i] = rng.uniform01() < 0.5 ? -mag : mag;
  }
  t.set_requires_grad(true);
  return t;
}

void run_check(std::vector<GradCheckLine>& lines, double tol, const std::string& name,
               const std::function<Tensor64()>& f, const std::vector<Tensor64*>& params) {
  GradCheckResult r = grad_check(f, params);
  lines.push_back({name, r.max_rel_err, r.max_rel_err <= tol});
}

void op_checks(std::vector<GradCheckLine>& lines, double tol, Rng& rng) {
  {
    Tensor64 a = rand_tensor({3, 4}, rng);
    Tensor64 b = rand_tensor({4}, rng);
    run_check(lines, tol, "op add(broadcast)",
              [&] { return mean_all(add(a, b)); }, {&a, &b});
    run_check(lines, tol, "op sub(broadcast)",
              [&] { return mean_all(sub(a, b)); }, {&a, &b});
    run_check(lines, tol, "op mul(broadcast)",
              [&] { return mean_all(mul(a, b)); }, {&a, &b});
  }
  {
    Tensor64 a = rand_tensor({2, 5}, rng);
    run_check(lines, tol, "op add_scalar/mul_scalar/neg",
              [&] { return mean_all(neg(mul_scalar(add_scalar(a, 0.7), 1.3))); }, {&a});
    run_check(lines, tol, "op exp", [&] { return mean_all(exp_elem(a)); }, {&a});
    run_check(lines, tol, "op gelu", [&] { return mean_all(gelu(a)); }, {&a});
  }
  {
    Tensor64 a = rand_signed_away_from_zero({3, 4}, rng);
    run_check(lines, tol, "op abs", [&] { return mean_all(abs_val(a)); }, {&a});
  }
  {
    Tensor64 a = rand_tensor({3, 4}, rng);
    Tensor64 b = rand_tensor({4, 2}, rng);
    run_check(lines, tol, "op matmul", [&] { return mean_all(matmul(a, b)); }, {&a, &b});
    Tensor64 w = rand_tensor({4, 3}, rng);
    run_check(lines, tol, "op transpose",
              [&] { return mean_all(mul(transpose(a), w)); }, {&a, &w});
    Tensor64 bias = rand_tensor({2}, rng);
    run_check(lines, tol, "op linear",
              [&] { return mean_all(linear(a, b, bias)); }, {&a, &b, &bias});
  }
  {
    Tensor64 a = rand_tensor({2, 3, 4}, rng);
    Tensor64 b = rand_tensor({2, 4, 2}, rng);
    Tensor64 bt = rand_tensor({2, 2, 4}, rng);
    run_check(lines, tol, "op bmm", [&] { return mean_all(bmm(a, b)); }, {&a, &b});
    run_check(lines, tol, "op bmm(transpose_b)",
              [&] { return mean_all(bmm(a, bt, true)); }, {&a, &bt});
  }
  {
    Tensor64 a = rand_tensor({2, 6}, rng);
    Tensor64 w = rand_tensor({3, 4}, rng);
    run_check(lines, tol, "op reshape",
              [&] { return mean_all(mul(reshape(a, {3, 4}), w)); }, {&a, &w});
  }
  {
    Tensor64 x = rand_tensor({3, 5}, rng);
    Tensor64 w = rand_tensor({3, 5}, rng);
    run_check(lines, tol, "op softmax",
              [&] { return mean_all(mul(softmax(x, 1), w)); }, {&x, &w});
    run_check(lines, tol, "op log_softmax",
              [&] { return mean_all(mul(log_softmax(x, 1), w)); }, {&x, &w});
  }
  {
    Tensor64 x = rand_tensor({3, 6}, rng);
    Tensor64 g = rand_tensor({6}, rng, 0.5, 1.5);
    Tensor64 b = rand_tensor({6}, rng);
    Tensor64 w = rand_tensor({3, 6}, rng);
    run_check(lines, tol, "op layer_norm",
              [&] { return mean_all(mul(layer_norm(x, g, b), w)); }, {&x, &g, &b, &w});
  }
  {
    Tensor64 x = rand_tensor({4, 5}, rng);
    const std::vector<int64_t> idx = {1, 0, 3, 2};
    run_check(lines, tol, "op take_per_row",
              [&] { return mean_all(take_per_row(x, idx)); }, {&x});
    Tensor64 w = rand_tensor({4, 5}, rng);
    run_check(lines, tol, "op l2_normalize_rows",
              [&] { return mean_all(mul(l2_normalize_rows(x), w)); }, {&x, &w});
  }
  {
    Tensor64 x = rand_tensor({2, 5, 3}, rng);
    Tensor64 w = rand_tensor({2, 2, 3}, rng);
    run_check(lines, tol, "op slice_tokens",
              [&] { return mean_all(mul(slice_tokens(x, 1, 2), w)); }, {&x, &w});
  }
  {
    Tensor64 a = rand_tensor({3, 2}, rng);
    Tensor64 b = rand_tensor({3, 4}, rng);
    run_check(lines, tol, "op concat_cols",
              [&] { return mean_all(concat_cols(a, b)); }, {&a, &b});
  }
  {
    Tensor64 patches = rand_tensor({2, 3, 4}, rng);
    Tensor64 t0 = rand_tensor({4}, rng);
    Tensor64 t1 = rand_tensor({4}, rng);
    run_check(lines, tol, "op prepend_task_tokens",
              [&] { return mean_all(prepend_task_tokens(patches, t0, t1)); },
              {&patches, &t0, &t1});
  }
  {
    Tensor64 x = rand_tensor({2, 4, 6}, rng);
    Tensor64 w = rand_tensor({2, 4, 6}, rng);
    run_check(lines, tol, "op split/merge_heads",
              [&] { return mean_all(mul(merge_heads(split_heads(x, 2), 2), w)); }, {&x, &w});
  }
  {
    Tensor64 images = rand_tensor({2, 3, 8, 8}, rng);
    Tensor64 w = rand_tensor({2, 4, 48}, rng);
    run_check(lines, tol, "op patchify",
              [&] { return mean_all(mul(patchify(images, 4), w)); }, {&images, &w});
    Tensor64 patches = rand_tensor({2, 4, 48}, rng);
    run_check(lines, tol, "op unpatchify",
              [&] { return mean_all(unpatchify(patches, 3, 8, 8, 4)); }, {&patches});
  }
}

ModelConfig mini_config() {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.dim = 12;
  cfg.depth = 1;
  cfg.num_heads = 2;
  cfg.mlp_ratio = 2;
  cfg.contrastive_dim = 8;
  return cfg;
}

/// Per-coordinate step-size ladder. A single step cannot serve the whole
/// model: near-zero-gradient coordinates need a wide step so one-ulp
/// evaluation noise stays under the relative-error floor, while the L1
/// reconstruction term needs a narrow step to avoid crossing |x| kinks. A
/// coordinate passes if analytic and central differences agree at any rung;
/// a miswired backward rule disagrees at every rung.
double ladder_max_rel_err(const std::function<Tensor64()>& f,
                          const std::vector<Tensor64*>& params, double tol) {
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  {
    GradTape<double> tape;
    for (auto* p : params) p->zero_grad();
    Tensor64 loss = f();
    tape.backward(loss);
    for (auto* p : params)
      analytic.push_back(p->has_grad()
                             ? p->grad()
                             : std::vector<double>(static_cast<size_t>(p->numel()), 0.0));
  }
  constexpr double kEps[] = {1e-5, 1e-4, 3e-4, 1e-3};
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    double* values = params[pi]->data();
    for (int64_t i = 0; i < params[pi]->numel(); ++i) {
      const double a = analytic[pi][static_cast<size_t>(i)];
      const double saved = values[i];
      double best = 1.0;
      for (double eps : kEps) {
        values[i] = saved + eps;
        const double up = f().item();
        values[i] = saved - eps;
        const double down = f().item();
        values[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
        best = std::min(best, rel);
        if (best <= tol) break;
      }
      max_rel = std::max(max_rel, best);
    }
  }
  return max_rel;
}

void ladder_check(std::vector<GradCheckLine>& lines, double tol, const std::string& name,
                  const std::function<Tensor64()>& f, const std::vector<Tensor64*>& params) {
  const double err = ladder_max_rel_err(f, params, tol);
  lines.push_back({name, err, err <= tol});
}

void model_checks(std::vector<GradCheckLine>& lines, double tol, uint64_t seed, Rng& rng) {
  SiTModelT<double> model(mini_config(), seed);
  model.set_requires_grad(true);

  Tensor64 images({4, 3, 8, 8});
  Tensor64 targets({4, 3, 8, 8});
  for (int64_t i = 0; i < images.numel(); ++i) {
    images.data()[i] = rng.uniform01();
    targets.data()[i] = rng.uniform01();
  }
  const std::vector<int64_t> rotation_labels = {0, 1, 2, 3};
  const std::vector<int64_t> pair_index = {1, 0, 3, 2};

  std::vector<Tensor64*> params;
  for (auto& p : model.parameters()) params.push_back(&p.tensor);

  ladder_check(lines, tol, "model reconstruction_l1",
               [&] { return l1_loss(model.forward(images).reconstruction, targets); }, params);
  ladder_check(lines, tol, "model rotation_ce",
               [&] { return cross_entropy(model.forward(images).rotation_logits, rotation_labels); },
               params);
  ladder_check(lines, tol, "model nt_xent",
               [&] { return nt_xent(model.forward(images).contrastive, pair_index, 0.5); }, params);

  auto task_losses = [&] {
    SiTOutputT<double> out = model.forward(images);
    TaskLossesT<double> losses;
    losses.reconstruction = l1_loss(out.reconstruction, targets);
    losses.rotation = cross_entropy(out.rotation_logits, rotation_labels);
    losses.contrastive = nt_xent(out.contrastive, pair_index, 0.5);
    return losses;
  };

  const double alphas[3] = {0.7, 1.0, 0.4};
  ladder_check(lines, tol, "model fixed_weighted_total",
               [&] {
                 TaskLossesT<double> losses = task_losses();
                 return fixed_weighted_total(losses, alphas);
               },
               params);

  UncertaintyWeightsT<double> weights(0.0);
  weights.s1.data()[0] = 0.2;
  weights.s2.data()[0] = -0.1;
  weights.s3.data()[0] = 0.3;
  std::vector<Tensor64*> with_s = params;
  with_s.push_back(&weights.s1);
  with_s.push_back(&weights.s2);
  with_s.push_back(&weights.s3);
  ladder_check(lines, tol, "model uncertainty_total",
               [&] {
                 TaskLossesT<double> losses = task_losses();
                 return uncertainty_total(losses, weights);
               },
               with_s);
}

}  // namespace

std::vector<GradCheckLine> run_gradcheck_suite(double tol, uint64_t seed) {
  std::vector<GradCheckLine> lines;
  Rng rng(seed);
  op_checks(lines, tol, rng);
  model_checks(lines, tol, seed, rng);
  return lines;
}

}  // namespace sit
