#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
};

// Compares reverse-mode gradients of the scalar produced by f against central
// finite differences over every coordinate of every tensor in params. f must
// recompute the value from the current contents of params on each call; it is
// invoked once under a tape and twice per coordinate without one. The relative
// error per coordinate is |analytic - fd| / max(1e-8, |analytic| + |fd|).
GradCheckResult grad_check(const std::function<TensorT<double>()>& f,
                           const std::vector<TensorT<double>*>& params, double eps = 1e-5);

// One named check within a suite report.
struct GradCheckLine {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// All per-operation checks plus the end-to-end model/loss checks, every check
// in 64-bit precision. Returns the report lines; all_pass(lines, tol) below
// summarises them.
std::vector<GradCheckLine> run_gradcheck_suite(double tol = 1e-4, uint64_t seed = 7);

bool gradcheck_all_pass(const std::vector<GradCheckLine>& lines);

}  // namespace sit
