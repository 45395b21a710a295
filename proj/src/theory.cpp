#include "qpi/theory.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

double hoeffding_epsilon(std::int64_t n, double delta) {
  if (n < 1) throw ParameterError("hoeffding_epsilon: N must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("hoeffding_epsilon: delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

double mcdiarmid_prob(std::int64_t n, double eps) {
  if (n < 1) throw ParameterError("mcdiarmid_prob: N must be >= 1");
  if (!(eps > 0.0)) throw ParameterError("mcdiarmid_prob: eps must be > 0");
  return 2.0 * std::exp(-2.0 * static_cast<double>(n) * eps * eps);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("inverse_normal_cdf: p must lie in (0, 1)");
  // Acklam's rational approximation (relative error ~1.2e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double gaussian_optimal_halfwidth(double sigma, double alpha) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_optimal_halfwidth: sigma must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("gaussian_optimal_halfwidth: alpha must lie in (0, 1)");
  return sigma * inverse_normal_cdf(1.0 - alpha / 2.0);
}

double rule_coverage(const FixedIntervalRule& rule, const TargetDistribution& dist) {
  if (rule.up < rule.low) return 0.0;
  if (const auto* g = std::get_if<GaussianDist>(&dist)) {
    return normal_cdf((rule.up - g->mean) / g->sd) - normal_cdf((rule.low - g->mean) / g->sd);
  }
  const auto& u = std::get<UniformDist>(dist);
  const double lo = std::max(rule.low, u.lo);
  const double hi = std::min(rule.up, u.hi);
  return hi > lo ? (hi - lo) / (u.hi - u.lo) : 0.0;
}

namespace {

double draw(RngStream& rng, const TargetDistribution& dist) {
  if (const auto* g = std::get_if<GaussianDist>(&dist)) return g->mean + g->sd * rng.normal();
  const auto& u = std::get<UniformDist>(dist);
  return rng.uniform(u.lo, u.hi);
}

std::vector<double> coverage_trials(const FixedIntervalRule& rule, const TargetDistribution& dist,
                                    std::int64_t n, int trials, std::uint64_t seed) {
  std::vector<double> out(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    RngStream rng(derive_seed(seed, "concentration.trial", static_cast<std::uint64_t>(n) << 20 | t), "draws");
    std::int64_t covered = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double y = draw(rng, dist);
      covered += (rule.low <= y && y <= rule.up) ? 1 : 0;
    }
    out[t] = static_cast<double>(covered) / static_cast<double>(n);
  }
  return out;
}

double sample_std(const std::vector<double>& xs) {
  // Copy into aligned storage: a Map over std::vector memory makes the vectorized
  // reduction order depend on the buffer address.
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(xs.size() - 1));
}

}  // namespace

ConcentrationReport concentration_check(const FixedIntervalRule& rule, const TargetDistribution& dist,
                                        std::int64_t n, int trials, double delta, std::uint64_t seed) {
  if (n < 4) throw ParameterError("concentration_check: N must be >= 4");
  if (trials < 2) throw ParameterError("concentration_check: need at least 2 trials");
  ConcentrationReport r;
  r.expected_coverage = rule_coverage(rule, dist);
  r.epsilon = hoeffding_epsilon(n, delta);
  r.exceedance_limit = 1.5 * delta;

  const auto at_n = coverage_trials(rule, dist, n, trials, seed);
  int exceed = 0;
  for (double c : at_n) exceed += std::abs(c - r.expected_coverage) > r.epsilon ? 1 : 0;
  r.exceedance_fraction = static_cast<double>(exceed) / static_cast<double>(trials);
  r.hoeffding_ok = r.exceedance_fraction <= r.exceedance_limit;

  r.scaling_sizes = {n / 4, n, 4 * n};
  for (auto size : r.scaling_sizes) {
    r.scaling_std.push_back(size == n ? sample_std(at_n) : sample_std(coverage_trials(rule, dist, size, trials, seed)));
  }
  bool all_zero = true;
  bool ratios_ok = true;
  for (std::size_t i = 1; i < r.scaling_std.size(); ++i) {
    all_zero = all_zero && r.scaling_std[i - 1] == 0.0 && r.scaling_std[i] == 0.0;
    const double ratio = r.scaling_std[i - 1] > 0.0 ? r.scaling_std[i] / r.scaling_std[i - 1] : 0.0;
    r.scaling_ratios.push_back(ratio);
    ratios_ok = ratios_ok && ratio >= 0.4 && ratio <= 0.6;
  }
  r.scaling_ok = all_zero || ratios_ok;
  return r;
}

ConvergenceReport convergence_check(const RunRecord& rec) {
  const std::size_t epochs = rec.epochs();
  if (epochs == 0) throw ContractError("convergence_check: empty run record");
  const std::size_t k = std::max<std::size_t>(1, epochs / 10);
  ConvergenceReport r;
  for (std::size_t i = 0; i < k; ++i) {
    r.first_grad += rec.grad_norm[i];
    r.last_grad += rec.grad_norm[epochs - 1 - i];
  }
  r.first_grad /= static_cast<double>(k);
  r.last_grad /= static_cast<double>(k);
  r.grad_ratio = r.first_grad > 0.0 ? r.last_grad / r.first_grad : 0.0;
  r.first_loss = rec.loss.front();
  r.last_loss = rec.loss.back();
  r.grad_ok = r.last_grad <= kConvergenceGradRatio * r.first_grad;
  r.loss_ok = r.last_loss <= r.first_loss;

  std::ostringstream os;
  if (r.last_loss == r.first_loss && r.last_grad == r.first_grad) {
    os << "no descent: loss and gradient norm are unchanged over " << epochs << " epochs";
  } else {
    os << "gradient norm " << format_double(r.first_grad) << " -> " << format_double(r.last_grad) << " (ratio "
       << format_double(r.grad_ratio) << ", limit " << kConvergenceGradRatio << "); loss "
       << format_double(r.first_loss) << " -> " << format_double(r.last_loss);
    if (!r.grad_ok) os << "; gradient norm did not shrink enough";
    if (!r.loss_ok) os << "; loss increased";
  }
  r.message = os.str();
  return r;
}

}  // namespace qpi
