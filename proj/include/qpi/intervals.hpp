#pragma once

#include <Eigen/Dense>

namespace qpi {

/// Per-node closed intervals [low, up]. Ordering low <= up is not part of
/// the type: quantile and two-output baselines can emit crossed bounds.
template <typename Scalar>
struct IntervalSetT {
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  VectorS low;
  VectorS up;

  Eigen::Index size() const noexcept { return low.size(); }
  auto widths() const { return up - low; }
  auto centers() const { return Scalar(0.5) * (low + up); }

  /// Number of entries with low > up.
  Eigen::Index crossings() const { return (low.array() > up.array()).count(); }
};

using IntervalSet = IntervalSetT<double>;

}  // namespace qpi
