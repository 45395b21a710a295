#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "qpi/train.hpp"

namespace qpi {

/// Radius eps with P(|c_hat - E c_hat| > eps) <= delta for N iid coverage
/// indicators: sqrt(ln(2/delta) / (2N)).
double hoeffding_epsilon(std::int64_t n, double delta);

/// Bounded-differences tail bound 2 exp(-2 N eps^2).
double mcdiarmid_prob(std::int64_t n, double eps);

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, accurate to ~1e-15 (rational approximation
/// followed by one Halley step against erfc).
double inverse_normal_cdf(double p);

/// Smallest symmetric half-width covering 1 - alpha of N(mu, sigma^2): sigma * Phi^-1(1 - alpha/2).
double gaussian_optimal_halfwidth(double sigma, double alpha);

struct GaussianDist {
  double mean = 0.0;
  double sd = 1.0;
};

struct UniformDist {
  double lo = 0.0;
  double hi = 1.0;
};

using TargetDistribution = std::variant<GaussianDist, UniformDist>;

/// A fixed interval applied to every node.
struct FixedIntervalRule {
  double low = 0.0;
  double up = 0.0;
};

/// Exact P(low <= Y <= up).
double rule_coverage(const FixedIntervalRule& rule, const TargetDistribution& dist);

struct ConcentrationReport {
  double expected_coverage = 0.0;
  double epsilon = 0.0;
  double exceedance_fraction = 0.0;  ///< trials with |c_hat - E| > epsilon
  double exceedance_limit = 0.0;     ///< 1.5 * delta
  bool hoeffding_ok = false;
  std::vector<std::int64_t> scaling_sizes;   ///< {N/4, N, 4N}
  std::vector<double> scaling_std;           ///< std of c_hat at each size
  std::vector<double> scaling_ratios;        ///< std(4M) / std(M) for consecutive sizes
  bool scaling_ok = false;                   ///< every ratio within 0.5 +/- 20%, or zero variance throughout
  bool passed() const noexcept { return hoeffding_ok && scaling_ok; }
};

/// Monte-Carlo check of the coverage estimator's concentration for a fixed
/// rule: `trials` datasets of size n, exceedance of the Hoeffding radius, and
/// std(c_hat) scaling across n/4, n, 4n.
ConcentrationReport concentration_check(const FixedIntervalRule& rule, const TargetDistribution& dist,
                                        std::int64_t n, int trials, double delta, std::uint64_t seed);

struct ConvergenceReport {
  double first_grad = 0.0;  ///< mean gradient norm over the first 10% of epochs
  double last_grad = 0.0;   ///< ... over the last 10%
  double grad_ratio = 0.0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  bool grad_ok = false;  ///< last_grad <= 0.25 * first_grad
  bool loss_ok = false;  ///< last_loss <= first_loss
  std::string message;
  bool passed() const noexcept { return grad_ok && loss_ok; }
};

inline constexpr double kConvergenceGradRatio = 0.25;

ConvergenceReport convergence_check(const RunRecord& rec);

}  // namespace qpi
