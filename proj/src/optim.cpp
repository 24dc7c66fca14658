#include "sit/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sit {

double lr_at(const ScheduleConfig& schedule, int64_t step) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (schedule.warmup_steps < 0 || schedule.base_lr < 0 || schedule.floor_lr < 0) {
    throw std::invalid_argument("lr_at: negative schedule values");
  }
  if (schedule.warmup_steps > 0 && step < schedule.warmup_steps) {
    return schedule.base_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  }
  if (!schedule.cosine) return schedule.base_lr;
  if (schedule.total_steps <= schedule.warmup_steps) {
    throw std::invalid_argument("lr_at: cosine decay needs total_steps beyond the warmup");
  }
  const double span = static_cast<double>(schedule.total_steps - schedule.warmup_steps);
  double progress = static_cast<double>(step - schedule.warmup_steps) / span;
  progress = std::min(1.0, std::max(0.0, progress));
  return schedule.floor_lr +
         0.5 * (schedule.base_lr - schedule.floor_lr) * (1.0 + std::cos(3.141592653589793 * progress));
}

bool weight_decay_applies(const std::string& name) { return name.ends_with(".weight"); }

template <typename T>
AdamT<T>::AdamT(std::vector<ParameterT<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.beta1 >= 0 && config_.beta1 < 1) || !(config_.beta2 >= 0 && config_.beta2 < 1)) {
    throw std::invalid_argument("adam: betas must lie in [0,1)");
  }
  if (config_.eps <= 0) throw std::invalid_argument("adam: eps must be positive");
  slots_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const size_t n = static_cast<size_t>(params_[i].tensor.numel());
    slots_[i].m.assign(n, T(0));
    slots_[i].v.assign(n, T(0));
  }
}

template <typename T>
void AdamT<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void AdamT<T>::set_step_count(int64_t t) {
  if (t < 0) throw std::invalid_argument("adam: negative step count");
  t_ = t;
}

template <typename T>
void AdamT<T>::step(double lr) {
  double clip_scale = 1.0;
  if (config_.clip_norm > 0) {
    double sq = 0;
    for (auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip_scale = config_.clip_norm / (norm + 1e-12);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    ParameterT<T>& p = params_[i];
    if (!p.tensor.has_grad()) continue;
    const bool decay = config_.weight_decay > 0 && weight_decay_applies(p.name);
    T* w = p.tensor.data();
    const std::vector<T>& grad = p.tensor.grad();
    Slot& slot = slots_[i];
    for (size_t j = 0; j < grad.size(); ++j) {
      const double g = static_cast<double>(grad[j]) * clip_scale;
      const double m = config_.beta1 * static_cast<double>(slot.m[j]) + (1.0 - config_.beta1) * g;
      const double v = config_.beta2 * static_cast<double>(slot.v[j]) + (1.0 - config_.beta2) * g * g;
      slot.m[j] = static_cast<T>(m);
      slot.v[j] = static_cast<T>(v);
      double update = lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
      if (decay) update += lr * config_.weight_decay * static_cast<double>(w[j]);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
    }
  }
  for (auto& p : params_) p.tensor.clear_grad();
}

template class AdamT<float>;
template class AdamT<double>;

}  // namespace sit
