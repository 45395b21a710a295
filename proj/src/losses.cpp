#include "qpi/losses.hpp"

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace {

struct MaskedBounds {
  Var low;
  Var up;
  Var y;
  Vector y_values;
  Vector low_values;
  Vector up_values;
};

MaskedBounds select(const BoundVars& b, const Vector& y, const Mask& mask) {
  if (b.low.rows() != y.size() || b.up.rows() != y.size()) {
    throw ShapeError("loss: bounds and targets differ in length");
  }
  if (static_cast<Eigen::Index>(mask.size()) != y.size()) throw ShapeError("loss: mask length mismatch");
  const auto idx = mask_indices(mask);
  if (idx.empty()) throw ContractError("loss: empty mask");
  Tape& tape = b.low.tape();
  MaskedBounds m;
  m.low = ad::gather_rows(b.low, idx);
  m.up = ad::gather_rows(b.up, idx);
  m.y_values = y(idx);
  m.y = tape.constant(m.y_values);
  m.low_values = m.low.value().col(0);
  m.up_values = m.up.value().col(0);
  return m;
}

Tensor indicator(const Eigen::Array<bool, Eigen::Dynamic, 1>& cond) { return cond.cast<double>().matrix(); }

Var violation_from(const MaskedBounds& m) {
  Tape& tape = m.low.tape();
  const Var below = tape.constant(indicator(m.y_values.array() < m.low_values.array()));
  const Var above = tape.constant(indicator(m.y_values.array() > m.up_values.array()));
  // Sign of each difference is fixed by its indicator, so this is the |.| form.
  const Var under = ad::mul(ad::sub(m.low, m.y), below);
  const Var over = ad::mul(ad::sub(m.y, m.up), above);
  return ad::reduce_mean(ad::add(under, over));
}

BoundVars as_constants(Tape& tape, const IntervalSet& iv) {
  return {tape.constant(iv.low), tape.constant(iv.up)};
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("loss: alpha must lie in (0, 1)");
  if (!(lambda_width >= 0.0) || !(gamma_order >= 0.0) || !(rqr_lambda >= 0.0)) {
    throw ParameterError("loss: penalties must be non-negative");
  }
}

Var violation_loss(const BoundVars& b, const Vector& y, const Mask& mask) {
  return violation_from(select(b, y, mask));
}

double violation_loss(const IntervalSet& iv, const Vector& y, const Mask& mask) {
  Tape tape;
  return violation_loss(as_constants(tape, iv), y, mask).item();
}

QpiLoss qpi_total_loss(const BoundVars& b, const Vector& y, const Mask& mask, const LossConfig& cfg) {
  cfg.validate();
  Tape& tape = b.low.tape();
  const MaskedBounds m = select(b, y, mask);
  const double target = 1.0 - cfg.alpha;

  QpiLoss out;
  out.terms.empirical_coverage =
      ((m.low_values.array() <= m.y_values.array()) && (m.y_values.array() <= m.up_values.array()))
          .cast<double>()
          .mean();

  Var width = ad::sub(m.up, m.low);
  if (cfg.width_norm == WidthNorm::L2) width = ad::square(width);
  const Var width_term = ad::reduce_mean(width);
  Var total = ad::scale(width_term, cfg.lambda_width);
  out.terms.width_term = width_term.item();

  if (cfg.coverage_terms) {
    Var coverage_term;
    if (cfg.smooth_coverage) {
      const double inv_t = 1.0 / kSmoothCoverageTemperature;
      const Var inside_low = ad::sigmoid(ad::scale(ad::sub(m.y, m.low), inv_t));
      const Var inside_up = ad::sigmoid(ad::scale(ad::sub(m.up, m.y), inv_t));
      const Var soft_c = ad::reduce_mean(ad::mul(inside_low, inside_up));
      coverage_term = ad::square(ad::add_scalar(soft_c, -target));
    } else {
      const double gap = out.terms.empirical_coverage - target;
      coverage_term = tape.constant(Tensor::Constant(1, 1, gap * gap));
    }
    const Var violation = violation_from(m);
    out.terms.coverage_term = coverage_term.item();
    out.terms.violation_term = violation.item();
    total = ad::add(ad::add(coverage_term, violation), total);
  }
  out.terms.total = total.item();
  out.objective = total;
  return out;
}

LossBreakdown qpi_total_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, const LossConfig& cfg) {
  Tape tape;
  return qpi_total_loss(as_constants(tape, iv), y, mask, cfg).terms;
}

double pinball_loss(const Vector& y, const Vector& q, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("pinball_loss: tau must lie in (0, 1)");
  if (y.size() != q.size()) throw ShapeError("pinball_loss: length mismatch");
  if (y.size() == 0) throw ContractError("pinball_loss: empty input");
  const auto r = (y - q).array();
  return ((tau - (y.array() < q.array()).cast<double>()) * r).mean();
}

Var pinball_loss(const Var& q, const Vector& y, const Vector& tau, const Mask& mask) {
  if (q.rows() != y.size() || tau.size() != y.size() || static_cast<Eigen::Index>(mask.size()) != y.size()) {
    throw ShapeError("pinball_loss: length mismatch");
  }
  const auto idx = mask_indices(mask);
  if (idx.empty()) throw ContractError("pinball_loss: empty mask");
  Tape& tape = q.tape();
  const Var q_m = ad::gather_rows(q, idx);
  const Vector y_m = y(idx);
  const Vector weight = tau(idx).array() - (y_m.array() < q_m.value().col(0).array()).cast<double>();
  const Var resid = ad::sub(tape.constant(y_m), q_m);
  return ad::reduce_mean(ad::mul(resid, tape.constant(weight)));
}

Var sqr_loss(Tape& tape, const Dataset& ds, const Mask& mask, ParamStore& params, std::uint64_t seed,
             const EncodeOptions& opts, Vector* tau_out) {
  const Eigen::Index n = ds.num_nodes();
  Vector tau(n);
  const std::uint64_t tag = hash_tag("sqr.tau");
  for (Eigen::Index v = 0; v < n; ++v) {
    // Open interval (0, 1): shift by half a ulp-grid step away from zero.
    tau[v] = counter_uniform(seed, tag, static_cast<std::uint64_t>(v)) + 0x1.0p-54;
  }
  const Var q = sqr_forward(tape, ds.graph, ds.features, tau, params, opts);
  if (tau_out != nullptr) *tau_out = tau;
  return pinball_loss(q, ds.targets, tau, mask);
}

Var rqr_w_loss(const BoundVars& b, const Vector& y, const Mask& mask, double alpha, double lambda) {
  const MaskedBounds m = select(b, y, mask);
  Tape& tape = b.low.tape();
  const Tensor covered =
      indicator((m.low_values.array() <= m.y_values.array()) && (m.y_values.array() <= m.up_values.array()));
  const Var weight = tape.constant((alpha + 2.0 * lambda - covered.array()).matrix());
  const Var product = ad::mul(ad::sub(m.y, m.low), ad::sub(m.y, m.up));
  const Var width = ad::scale(ad::square(ad::sub(m.up, m.low)), 0.5 * lambda);
  return ad::reduce_mean(ad::add(ad::mul(weight, product), width));
}

double rqr_w_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha, double lambda) {
  Tape tape;
  return rqr_w_loss(as_constants(tape, iv), y, mask, alpha, lambda).item();
}

Var rqr_adj_loss(const BoundVars& b, const Vector& y, const Mask& mask, double alpha, double lambda,
                 double gamma_order) {
  if (!(gamma_order >= 0.0)) throw ParameterError("rqr_adj_loss: gamma_order must be >= 0");
  const Var base = rqr_w_loss(b, y, mask, alpha, lambda);
  const auto idx = mask_indices(mask);
  const Var crossing = ad::relu(ad::sub(ad::gather_rows(b.low, idx), ad::gather_rows(b.up, idx)));
  return ad::add(base, ad::scale(ad::reduce_mean(crossing), gamma_order));
}

double rqr_adj_loss(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha, double lambda,
                    double gamma_order) {
  Tape tape;
  return rqr_adj_loss(as_constants(tape, iv), y, mask, alpha, lambda, gamma_order).item();
}

Var mse_loss(const Var& pred, const Vector& y, const Mask& mask) {
  if (pred.rows() != y.size() || static_cast<Eigen::Index>(mask.size()) != y.size()) {
    throw ShapeError("mse_loss: length mismatch");
  }
  const auto idx = mask_indices(mask);
  if (idx.empty()) throw ContractError("mse_loss: empty mask");
  Tape& tape = pred.tape();
  const Vector y_m = y(idx);
  return ad::reduce_mean(ad::square(ad::sub(ad::gather_rows(pred, idx), tape.constant(y_m))));
}

double mse_loss(const Vector& pred, const Vector& y, const Mask& mask) {
  Tape tape;
  return mse_loss(tape.constant(pred), y, mask).item();
}

}  // namespace qpi
