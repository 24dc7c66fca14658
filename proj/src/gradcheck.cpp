#include "sit/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "sit/autograd.hpp"

namespace sit {

GradCheckResult grad_check(const std::function<TensorT<double>()>& f,
                           const std::vector<TensorT<double>*>& params, double eps) {
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  {
    GradTape<double> tape;
    for (auto* p : params) p->zero_grad();
    TensorT<double> loss = f();
    if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    tape.backward(loss);
    for (auto* p : params) {
      analytic.push_back(p->has_grad() ? p->grad() : std::vector<double>(static_cast<size_t>(p->numel()), 0.0));
    }
  }
  GradCheckResult result;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    TensorT<double>& p = *params[pi];
    double* values = p.data();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double a = analytic[pi][static_cast<size_t>(i)];
      const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = "param" + std::to_string(pi);
        result.worst_index = i;
      }
    }
  }
  return result;
}

bool gradcheck_all_pass(const std::vector<GradCheckLine>& lines) {
  if (lines.empty()) return false;
  for (const auto& l : lines) {
    if (!l.pass) return false;
  }
  return true;
}

}  // namespace sit
