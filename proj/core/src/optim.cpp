#include "fsce/optim.hpp"

#include <cmath>
#include <numbers>

namespace fsce {

template <typename T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.weight_decay < 0) throw ConfigError("adamw: weight decay must be >= 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->numel(), T(0));
    v_.emplace_back(p->numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  if (!(lr >= 0)) throw ConfigError("adamw: learning rate must be >= 0, got " + std::to_string(lr));
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.eps);
  const T decay = static_cast<T>(1.0 - lr * cfg_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter<T>& p = *params_[k];
    T* w = p.value().data();
    const T* g = p.var->grad_ref().data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= decay;
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double scheduler_lr(Schedule kind, std::int64_t t, std::int64_t total, const ScheduleConfig& cfg) {
  if (!(cfg.lr_max >= 0) || !(cfg.lr_min >= 0)) throw ConfigError("scheduler: learning rates must be >= 0");
  if (total < 0 || t < 0 || t > total) {
    throw ConfigError("scheduler: step " + std::to_string(t) + " outside [0, " + std::to_string(total) + "]");
  }
  const double pi = std::numbers::pi;
  if (kind == Schedule::cosine) {
    if (total == 0) return cfg.lr_max;
    return cfg.lr_min +
           0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(pi * static_cast<double>(t) / static_cast<double>(total)));
  }
  if (total == 0) throw ConfigError("scheduler: onecycle needs total > 0");
  if (cfg.div_factor <= 0 || cfg.final_div <= 0) throw ConfigError("scheduler: onecycle divisors must be > 0");
  const double start = cfg.lr_max / cfg.div_factor;
  const double end = start / cfg.final_div;
  const double warm = cfg.warmup_frac * static_cast<double>(total);
  const double td = static_cast<double>(t);
  if (td <= warm && warm > 0) return start + (cfg.lr_max - start) * td / warm;
  const double progress = (td - warm) / (static_cast<double>(total) - warm);
  return end + 0.5 * (cfg.lr_max - end) * (1.0 + std::cos(pi * progress));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace fsce
