#include <doctest.h>

#include <cmath>

#include "qpi/dataset.hpp"
#include "qpi/errors.hpp"
#include "qpi/theory.hpp"

using namespace qpi;

TEST_CASE("closed-form bounds") {
  CHECK(hoeffding_epsilon(2000, 0.05) == doctest::Approx(0.030368).epsilon(1e-5));
  CHECK(hoeffding_epsilon(2000, 0.05) == doctest::Approx(std::sqrt(std::log(2.0 / 0.05) / 4000.0)));
  CHECK(mcdiarmid_prob(1000, 0.05) == doctest::Approx(2.0 * std::exp(-5.0)));
  CHECK(mcdiarmid_prob(1000, 0.05) == doctest::Approx(0.013476).epsilon(1e-4));
  CHECK(hoeffding_epsilon(8000, 0.05) == doctest::Approx(hoeffding_epsilon(2000, 0.05) / 2));
  CHECK_THROWS_AS(hoeffding_epsilon(0, 0.05), ParameterError);
  CHECK_THROWS_AS(hoeffding_epsilon(10, 0.0), ParameterError);
  CHECK_THROWS_AS(hoeffding_epsilon(10, 1.0), ParameterError);
  CHECK_THROWS_AS(mcdiarmid_prob(10, -0.1), ParameterError);
}

TEST_CASE("inverse normal cdf") {
  CHECK(gaussian_optimal_halfwidth(1.0, 0.1) == doctest::Approx(1.64485).epsilon(1e-5));
  CHECK(gaussian_optimal_halfwidth(2.0, 0.1) == doctest::Approx(3.28971).epsilon(1e-5));
  CHECK(gaussian_optimal_halfwidth(1.0, 1.0 - 1e-12) < 1e-9);
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-8));
  // Round trip through the forward cdf across both tails and the centre.
  for (double p : {1e-10, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.97575, 0.999, 1 - 1e-6}) {
    CAPTURE(p);
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(p)) - p) < 1e-8 * std::max(1.0, p / 1e-3));
  }
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), ParameterError);
  CHECK_THROWS_AS(gaussian_optimal_halfwidth(-1.0, 0.1), ParameterError);
}

TEST_CASE("rule coverage") {
  CHECK(rule_coverage({-1.644853626951, 1.644853626951}, GaussianDist{}) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(rule_coverage({0.0, 0.9}, UniformDist{0.0, 1.0}) == doctest::Approx(0.9));
  CHECK(rule_coverage({-5.0, 5.0}, UniformDist{0.0, 1.0}) == 1.0);
  CHECK(rule_coverage({2.0, 3.0}, UniformDist{0.0, 1.0}) == 0.0);
}

TEST_CASE("empirical coverage concentrates") {
  const ConcentrationReport r = concentration_check({0.0, 0.9}, UniformDist{0.0, 1.0}, 1000, 500, 0.05, 7);
  CHECK(r.expected_coverage == doctest::Approx(0.9));
  CHECK(r.epsilon == doctest::Approx(hoeffding_epsilon(1000, 0.05)));
  CHECK(r.exceedance_limit == doctest::Approx(0.075));
  CHECK(r.exceedance_fraction <= 0.075);
  CHECK(r.hoeffding_ok);
  REQUIRE(r.scaling_sizes == std::vector<std::int64_t>{250, 1000, 4000});
  // Binomial standard deviation sqrt(p(1-p)/N) as the oracle, within Monte-Carlo slack.
  for (std::size_t i = 0; i < 3; ++i) {
    const double want = std::sqrt(0.09 / static_cast<double>(r.scaling_sizes[i]));
    CHECK(r.scaling_std[i] == doctest::Approx(want).epsilon(0.15));
  }
  CHECK(r.scaling_ok);
  CHECK(r.passed());

  const ConcentrationReport again = concentration_check({0.0, 0.9}, UniformDist{0.0, 1.0}, 1000, 500, 0.05, 7);
  CHECK(again.scaling_std == r.scaling_std);
}

TEST_CASE("always-cover rule has zero variance") {
  const ConcentrationReport r = concentration_check({-1e9, 1e9}, GaussianDist{}, 400, 50, 0.05, 1);
  CHECK(r.expected_coverage == 1.0);
  CHECK(r.exceedance_fraction == 0.0);
  for (double s : r.scaling_std) CHECK(s == 0.0);
  CHECK(r.passed());
}

TEST_CASE("convergence check") {
  SUBCASE("hand-made decaying record") {
    RunRecord rec;
    for (int e = 0; e < 100; ++e) {
      rec.loss.push_back(10.0 / (e + 1));
      rec.grad_norm.push_back(e < 10 ? 4.0 : 0.5);
      rec.coverage.push_back(0.9);
      rec.width.push_back(1.0);
      rec.violation.push_back(0.0);
    }
    const ConvergenceReport r = convergence_check(rec);
    CHECK(r.first_grad == 4.0);
    CHECK(r.last_grad == 0.5);
    CHECK(r.grad_ratio == doctest::Approx(0.125));
    CHECK(r.passed());
  }
  SUBCASE("loss increase fails") {
    RunRecord rec;
    for (int e = 0; e < 20; ++e) {
      rec.loss.push_back(1.0 + e);
      rec.grad_norm.push_back(1.0 / (e + 1));
    }
    const ConvergenceReport r = convergence_check(rec);
    CHECK(r.grad_ok);
    CHECK_FALSE(r.loss_ok);
    CHECK_FALSE(r.passed());
  }
  SUBCASE("lr zero reports no descent") {
    const Dataset ds = synth_dataset(gen_er(120, 0.05, 3), FeatureFamily::Gaussian, 4, 1.0, 3);
    TrainConfig c;
    c.epochs = 30;
    c.lr = 0.0;
    c.hidden = 8;
    const RunRecord rec = train(ds, c).record;
    for (std::size_t e = 1; e < rec.epochs(); ++e) {
      CHECK(rec.loss[e] == rec.loss[0]);
      CHECK(rec.coverage[e] == rec.coverage[0]);
    }
    const ConvergenceReport r = convergence_check(rec);
    CHECK_FALSE(r.passed());
    CHECK(r.message.find("no descent") != std::string::npos);
  }
}
