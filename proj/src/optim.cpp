#include "qpi/optim.hpp"

#include <cmath>

#include "qpi/errors.hpp"

namespace qpi {

AdamState::AdamState(const ParamStore& params, AdamConfig cfg) : cfg_(cfg), initialized_(true) {
  for (const auto& [name, slot] : params) {
    moments_.emplace(name, AdamMoments{Tensor::Zero(slot.value.rows(), slot.value.cols()),
                                       Tensor::Zero(slot.value.rows(), slot.value.cols())});
  }
}

double AdamState::current_lr() const noexcept {
  if (cfg_.schedule == LrSchedule::InvSqrt) return cfg_.lr / std::sqrt(static_cast<double>(t_ + 1));
  return cfg_.lr;
}

void adam_step(ParamStore& params, AdamState& state) {
  if (!state.initialized_) throw ContractError("adam_step: optimizer state is not initialized");
  if (params.size() != state.moments_.size()) throw ContractError("adam_step: parameter set changed");
  const AdamConfig& c = state.cfg_;
  const double lr = state.current_lr();
  ++state.t_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t_));

  for (auto& [name, slot] : params) {
    auto it = state.moments_.find(name);
    if (it == state.moments_.end() || it->second.m.rows() != slot.value.rows() ||
        it->second.m.cols() != slot.value.cols()) {
      throw ContractError("adam_step: no matching optimizer state for '" + name + "'");
    }
    AdamMoments& mo = it->second;
    Tensor g = slot.grad;
    if (c.coupled_weight_decay && c.weight_decay != 0.0) g += c.weight_decay * slot.value;
    mo.m = c.beta1 * mo.m + (1.0 - c.beta1) * g;
    mo.v = c.beta2 * mo.v + (1.0 - c.beta2) * g.cwiseProduct(g);
    if (!c.coupled_weight_decay && c.weight_decay != 0.0) slot.value *= 1.0 - lr * c.weight_decay;
    slot.value.array() -= lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + c.eps);
    slot.grad.setZero();
  }
}

double grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, slot] : params) sq += slot.grad.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace qpi
