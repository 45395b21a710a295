#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qpi/dataset.hpp"
#include "qpi/errors.hpp"
#include "qpi/intervals.hpp"

namespace qpi {

// Interval-quality metrics. All are computed over the nodes selected by
// `mask`; every function throws ContractError on an empty mask and
// ShapeError on mismatched lengths.

namespace detail {

template <typename Scalar>
std::vector<Eigen::Index> checked_indices(const IntervalSetT<Scalar>& iv,
                                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* y,
                                          const Mask& mask) {
  if (iv.low.size() != iv.up.size() || static_cast<Eigen::Index>(mask.size()) != iv.size() ||
      (y != nullptr && y->size() != iv.size())) {
    throw ShapeError("metrics: interval, target and mask lengths differ");
  }
  auto idx = mask_indices(mask);
  if (idx.empty()) throw ContractError("metrics: empty evaluation mask");
  return idx;
}

}  // namespace detail

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fraction of masked nodes with low <= y <= up (closed interval).
template <typename Scalar>
Scalar picp(const IntervalSetT<Scalar>& iv, const VectorT<Scalar>& y, const Mask& mask) {
  const auto idx = detail::checked_indices(iv, &y, mask);
  const auto lo = iv.low(idx).array();
  const auto hi = iv.up(idx).array();
  const auto t = y(idx).array();
  const auto covered = ((lo <= t) && (t <= hi)).count();
  return static_cast<Scalar>(covered) / static_cast<Scalar>(idx.size());
}

template <typename Scalar>
Scalar mpiw(const IntervalSetT<Scalar>& iv, const Mask& mask) {
  const auto idx = detail::checked_indices<Scalar>(iv, nullptr, mask);
  return (iv.up(idx) - iv.low(idx)).mean();
}

/// MPIW divided by the target range over the same mask. Throws DomainError
/// when the masked targets are constant.
template <typename Scalar>
Scalar nmpiw(const IntervalSetT<Scalar>& iv, const VectorT<Scalar>& y, const Mask& mask) {
  const auto idx = detail::checked_indices(iv, &y, mask);
  const VectorT<Scalar> t = y(idx);
  const Scalar range = t.maxCoeff() - t.minCoeff();
  if (!(range > Scalar(0))) throw DomainError("nmpiw: targets are constant on the evaluation mask");
  return (iv.up(idx) - iv.low(idx)).mean() / range;
}

template <typename Scalar>
Scalar mpe(const IntervalSetT<Scalar>& iv, const VectorT<Scalar>& y, const Mask& mask) {
  const auto idx = detail::checked_indices(iv, &y, mask);
  return (Scalar(0.5) * (iv.low(idx) + iv.up(idx)) - y(idx)).cwiseAbs().mean();
}

template <typename Scalar>
Scalar sharpness(const IntervalSetT<Scalar>& iv, const Mask& mask) {
  const auto idx = detail::checked_indices<Scalar>(iv, nullptr, mask);
  return (iv.up(idx) - iv.low(idx)).array().square().mean();
}

/// Width plus (2/alpha) times the distance of an uncovered target to its interval.
template <typename Scalar>
Scalar winkler(const IntervalSetT<Scalar>& iv, const VectorT<Scalar>& y, const Mask& mask, Scalar alpha) {
  if (!(alpha > Scalar(0) && alpha < Scalar(1))) throw ParameterError("winkler: alpha must lie in (0, 1)");
  const auto idx = detail::checked_indices(iv, &y, mask);
  const auto lo = iv.low(idx).array();
  const auto hi = iv.up(idx).array();
  const auto t = y(idx).array();
  const auto miss = (lo - t).max(t - hi).max(Scalar(0));
  return ((hi - lo) + (Scalar(2) / alpha) * miss).mean();
}

inline constexpr double kCwcGamma = 1.0;
inline constexpr double kCwcEta = 10.0;

/// NMPIW * (1 + gamma * exp(-eta * (PICP - (1 - alpha)))), gamma = 1, eta = 10.
template <typename Scalar>
Scalar cwc(Scalar nmpiw_val, Scalar picp_val, Scalar alpha) {
  using std::exp;
  const Scalar mu = Scalar(1) - alpha;
  return nmpiw_val * (Scalar(1) + Scalar(kCwcGamma) * exp(-Scalar(kCwcEta) * (picp_val - mu)));
}

struct MetricsReport {
  double picp = 0.0;
  double mpiw = 0.0;
  double nmpiw = 0.0;
  double mpe = 0.0;
  double sharpness = 0.0;
  double winkler = 0.0;
  double cwc = 0.0;
  std::size_t n_eval = 0;
  double alpha = 0.1;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// All seven metrics on one mask; CWC reuses the report's own NMPIW and PICP.
MetricsReport report(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha);

/// Identifies one run in result tables.
struct RunLabel {
  std::string run_id;
  std::string dataset;
  std::string model;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

/// `run_id,dataset,model,lambda,seed,picp,mpiw,nmpiw,mpe,sharpness,winkler,cwc`
std::string metrics_csv_header();
std::string metrics_csv_row(const RunLabel& label, const MetricsReport& r);

/// Shortest round-trip-stable decimal for CSV/JSON output.
std::string format_double(double v);

}  // namespace qpi
