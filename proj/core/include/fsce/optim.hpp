#pragma once

#include <cstdint>
#include <vector>

#include "fsce/autograd.hpp"

namespace fsce {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: p <- p - lr*wd*p, then the bias-corrected
// Adam update.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWConfig cfg = {});

  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
};

enum class Schedule { cosine, onecycle };

struct ScheduleConfig {
  double lr_max = 1e-3;
  double lr_min = 0.0;        // cosine floor
  double warmup_frac = 0.3;   // onecycle
  double div_factor = 25.0;   // onecycle start = lr_max / div_factor
  double final_div = 1e4;     // onecycle end = start / final_div
};

// Cosine: lr_min + (lr_max - lr_min) * (1 + cos(pi t / total)) / 2.
// OneCycle: linear warmup from lr_max/div to lr_max over warmup_frac*total
// steps, then cosine decay to lr_max/(div*final_div).
double scheduler_lr(Schedule kind, std::int64_t t, std::int64_t total, const ScheduleConfig& cfg);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace fsce
