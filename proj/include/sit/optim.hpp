#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

// Linear warmup from 0 to base_lr over warmup_steps, then either a constant
// base_lr or a half-cosine decay to floor_lr at total_steps.
struct ScheduleConfig {
  double base_lr = 5e-4;
  int64_t warmup_steps = 0;
  int64_t total_steps = 0;
  double floor_lr = 0.0;
  bool cosine = true;
};

double lr_at(const ScheduleConfig& schedule, int64_t step);

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled decay, applied only to parameters named "*.weight" (norm scales
  // and shifts are gamma/beta, so matrix weights alone decay).
  double weight_decay = 0.0;
  // Global gradient-norm clip across all parameters; 0 disables.
  double clip_norm = 0.0;
};

bool weight_decay_applies(const std::string& name);

// Adam with bias correction and decoupled weight decay. Parameters without an
// accumulated gradient are skipped in step().
template <typename T>
class AdamT {
 public:
  struct Slot {
    std::vector<T> m, v;
  };

  AdamT(std::vector<ParameterT<T>> params, AdamConfig config);

  void zero_grad();
  void step() { step(config_.lr); }
  void step(double lr);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t);
  std::vector<ParameterT<T>>& params() { return params_; }
  const AdamConfig& config() const { return config_; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<ParameterT<T>> params_;
  AdamConfig config_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace sit
