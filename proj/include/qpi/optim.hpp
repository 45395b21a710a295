#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "qpi/autodiff.hpp"

namespace qpi {

enum class LrSchedule { Constant, InvSqrt };

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Add weight_decay * theta to the gradient (L2) instead of decaying the weights directly.
  bool coupled_weight_decay = true;
  LrSchedule schedule = LrSchedule::Constant;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// First/second moments per parameter plus the step counter.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamStore& params, AdamConfig cfg);

  bool initialized() const noexcept { return initialized_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  std::int64_t step() const noexcept { return t_; }
  const AdamMoments& moments(const std::string& name) const { return moments_.at(name); }

  /// Learning rate used for the next step (after the schedule).
  double current_lr() const noexcept;

 private:
  friend void adam_step(ParamStore& params, AdamState& state);

  AdamConfig cfg_;
  std::map<std::string, AdamMoments> moments_;
  std::int64_t t_ = 0;
  bool initialized_ = false;
};

/// One bias-corrected Adam update from the gradients in `params`; zeroes
/// the gradients afterwards. Throws ContractError on an uninitialized state
/// or a parameter set that does not match it.
void adam_step(ParamStore& params, AdamState& state);

/// Global L2 norm over every gradient slot.
double grad_norm(const ParamStore& params);

}  // namespace qpi
