#pragma once

#include <cstdint>

#include "qpi/autodiff.hpp"
#include "qpi/metrics.hpp"
#include "qpi/model.hpp"

namespace qpi {

enum class WidthNorm { L1, L2 };

/// With a hard coverage indicator the width and violation gradients balance at
/// train miscoverage ~= 2 * lambda_width, so the default sits well below alpha / 2.
inline constexpr double kDefaultLambdaWidth = 0.02;
/// Weight used by the structural-shift experiment.
inline constexpr double kShiftLambdaWidth = 0.5;

struct LossConfig {
  double alpha = 0.1;
  double lambda_width = kDefaultLambdaWidth;
  double gamma_order = 1.0;  ///< RQR-adj ordering penalty
  double rqr_lambda = 1.0;   ///< RQR-W width weight
  WidthNorm width_norm = WidthNorm::L1;
  /// Replace the hard coverage indicator in (c - (1 - alpha))^2 by a logistic
  /// surrogate (temperature kSmoothCoverageTemperature) so that term gets a gradient.
  bool smooth_coverage = false;
  /// false drops the coverage and violation terms (width-only ablation).
  bool coverage_terms = true;

  void validate() const;
};

inline constexpr double kSmoothCoverageTemperature = 0.1;

struct LossBreakdown {
  double total = 0.0;
  double coverage_term = 0.0;
  double violation_term = 0.0;
  double width_term = 0.0;  ///< before multiplication by lambda_width
  double empirical_coverage = 0.0;
};

struct QpiLoss {
  Var objective;
  LossBreakdown terms;
};

/// Same definition as PICP.
template <typename Scalar>
Scalar empirical_coverage(const IntervalSetT<Scalar>& iv, const VectorT<Scalar>& y, const Mask& mask) {
  return picp(iv, y, mask);
}

/// Mean over the mask of |y - low| [y < low] + |y - up| [y > up]. The
/// indicators carry no gradient; the distances do.
Var violation_loss(const BoundVars& b, const Vector& y, const Mask& mask);
double violation_loss(const IntervalSet& iv, const Vector& y, const Mask& mask);

/// (c - (1 - alpha))^2 + violation + lambda_width * mean(up - low)
/// (or mean((up - low)^2) under WidthNorm::L2).
QpiLoss qpi_total_loss(const BoundVars& b, const Vector& y, const Mask& mask, const LossConfig& cfg);
LossBreakdown qpi_total_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, const LossConfig& cfg);

/// mean((tau - [y < q]) * (y - q)).
double pinball_loss(const Vector& y, const Vector& q, double tau);
/// Per-node quantile levels, restricted to `mask`.
Var pinball_loss(const Var& q, const Vector& y, const Vector& tau, const Mask& mask);

/// Monte-Carlo estimate of E_tau[pinball] with tau ~ U(0,1) drawn per node
/// from `seed`. Returns the loss node; the drawn levels land in *tau_out when given.
Var sqr_loss(Tape& tape, const Dataset& ds, const Mask& mask, ParamStore& params, std::uint64_t seed,
             const EncodeOptions& opts = {}, Vector* tau_out = nullptr);

/// mean((alpha + 2 lambda - [low <= y <= up]) (y - low)(y - up) + lambda/2 (up - low)^2).
Var rqr_w_loss(const BoundVars& b, const Vector& y, const Mask& mask, double alpha, double lambda);
double rqr_w_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha, double lambda);

/// rqr_w_loss + gamma_order * mean(relu(low - up)).
Var rqr_adj_loss(const BoundVars& b, const Vector& y, const Mask& mask, double alpha, double lambda,
                 double gamma_order);
double rqr_adj_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha, double lambda,
                    double gamma_order);

Var mse_loss(const Var& pred, const Vector& y, const Mask& mask);
double mse_loss(const Vector& pred, const Vector& y, const Mask& mask);

}  // namespace qpi
