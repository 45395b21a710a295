#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qpi/errors.hpp"
#include "qpi/metrics.hpp"
#include "qpi/rng.hpp"

using namespace qpi;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

IntervalSet iv_of(std::initializer_list<double> lo, std::initializer_list<double> hi) { return {vec(lo), vec(hi)}; }

Mask all(Eigen::Index n) { return Mask(static_cast<std::size_t>(n), true); }

/// Every metric as a plain loop over the masked nodes.
MetricsReport loop_report(const IntervalSet& iv, const Vector& y, const Mask& m, double alpha) {
  double n = 0, hit = 0, w = 0, w2 = 0, pe = 0, wink = 0;
  double ymin = INFINITY, ymax = -INFINITY;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!m[static_cast<std::size_t>(i)]) continue;
    const double lo = iv.low[i], hi = iv.up[i], t = y[i];
    n += 1;
    if (lo <= t && t <= hi) hit += 1;
    w += hi - lo;
    w2 += (hi - lo) * (hi - lo);
    pe += std::abs((lo + hi) / 2 - t);
    double miss = 0;
    if (t < lo) miss = lo - t;
    if (t > hi) miss = t - hi;
    wink += (hi - lo) + 2.0 / alpha * miss;
    ymin = std::min(ymin, t);
    ymax = std::max(ymax, t);
  }
  MetricsReport r;
  r.picp = hit / n;
  r.mpiw = w / n;
  r.nmpiw = r.mpiw / (ymax - ymin);
  r.mpe = pe / n;
  r.sharpness = w2 / n;
  r.winkler = wink / n;
  r.cwc = r.nmpiw * (1 + std::exp(-10 * (r.picp - (1 - alpha))));
  r.n_eval = static_cast<std::size_t>(n);
  r.alpha = alpha;
  return r;
}

}  // namespace

TEST_CASE("picp") {
  CHECK(picp(iv_of({0, 0}, {5, 5}), vec({1, 2}), all(2)) == 1.0);
  CHECK(picp(iv_of({0, 0, 0}, {2, 2, 2}), vec({1, 3, 1}), all(3)) == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK_THROWS_AS(picp(iv_of({0}, {1}), vec({0.5}), Mask{false}), ContractError);
  CHECK_THROWS_AS(picp(iv_of({0, 0}, {1, 1}), vec({0.5}), all(2)), ShapeError);
}

TEST_CASE("mpiw and nmpiw") {
  CHECK(mpiw(iv_of({0, 1}, {2, 4}), all(2)) == 2.5);
  CHECK(mpiw(iv_of({1, 3}, {1, 3}), all(2)) == 0.0);
  CHECK(nmpiw(iv_of({0, 0}, {2, 2}), vec({0, 4}), all(2)) == 0.5);
  CHECK_THROWS_AS(nmpiw(iv_of({0, 0}, {2, 2}), vec({1, 1}), all(2)), DomainError);
  // Masked-out nodes take no part in the target range.
  CHECK(nmpiw(iv_of({0, 0, 0}, {2, 2, 2}), vec({0, 4, 100}), Mask{true, true, false}) == 0.5);
}

TEST_CASE("mpe, sharpness, winkler") {
  CHECK(mpe(iv_of({-1, 2}, {1, 4}), vec({0, 3}), all(2)) == 0.0);
  CHECK(mpe(iv_of({0}, {2}), vec({0.5}), all(1)) == 0.5);
  CHECK(sharpness(iv_of({0, 1}, {2, 4}), all(2)) == 6.5);
  CHECK(sharpness(iv_of({1}, {1}), all(1)) == 0.0);
  CHECK(winkler(iv_of({0}, {2}), vec({1}), all(1), 0.1) == 2.0);
  CHECK(winkler(iv_of({0}, {2}), vec({3}), all(1), 0.1) == doctest::Approx(22.0));
  CHECK(winkler(iv_of({0}, {2}), vec({-1}), all(1), 0.1) == doctest::Approx(22.0));
  CHECK_THROWS_AS(winkler(iv_of({0}, {2}), vec({3}), all(1), 0.0), ParameterError);
}

TEST_CASE("cwc") {
  CHECK(cwc(0.5, 0.9, 0.1) == doctest::Approx(1.0));
  CHECK(cwc(0.5, 0.8, 0.1) == doctest::Approx(1.8591).epsilon(1e-4));
  CHECK(cwc(0.5, 1.0, 0.1) == doctest::Approx(0.6839).epsilon(1e-4));
}

TEST_CASE("report on a perfect degenerate predictor") {
  const Vector y = vec({1, -2, 5});
  const MetricsReport r = report(IntervalSet{y, y}, y, all(3), 0.1);
  CHECK(r.picp == 1.0);
  CHECK(r.mpiw == 0.0);
  CHECK(r.winkler == 0.0);
  CHECK(r.mpe == 0.0);
  CHECK(r.n_eval == 3);
}

TEST_CASE("report agrees with a scalar loop on random instances") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    CAPTURE(seed);
    RngStream rng(seed, "test.metrics");
    const Eigen::Index n = 50;
    IntervalSet iv{Vector(n), Vector(n)};
    Vector y(n);
    Mask m(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = rng.uniform(-1, 1), d = rng.uniform(0, 2);
      iv.low[i] = c - d;
      iv.up[i] = c + d;
      y[i] = rng.uniform(-3, 3);
      m[static_cast<std::size_t>(i)] = rng.uniform() < 0.6;
    }
    m[0] = m[1] = true;
    const double alpha = rng.uniform(0.05, 0.3);
    const MetricsReport got = report(iv, y, m, alpha);
    const MetricsReport want = loop_report(iv, y, m, alpha);
    CHECK(got.picp == doctest::Approx(want.picp).epsilon(1e-12));
    CHECK(got.mpiw == doctest::Approx(want.mpiw).epsilon(1e-12));
    CHECK(got.nmpiw == doctest::Approx(want.nmpiw).epsilon(1e-12));
    CHECK(got.mpe == doctest::Approx(want.mpe).epsilon(1e-12));
    CHECK(got.sharpness == doctest::Approx(want.sharpness).epsilon(1e-12));
    CHECK(got.winkler == doctest::Approx(want.winkler).epsilon(1e-12));
    CHECK(got.cwc == doctest::Approx(want.cwc).epsilon(1e-12));
    CHECK(got.n_eval == want.n_eval);
    // Properties: picp in [0,1], nonnegative widths, winkler >= mpiw.
    CHECK(got.picp >= 0.0);
    CHECK(got.picp <= 1.0);
    CHECK(got.winkler >= got.mpiw);
    CHECK(got.sharpness >= got.mpiw * got.mpiw - 1e-12);
  }
}

TEST_CASE("single precision instantiation") {
  using IvF = IntervalSetT<float>;
  IvF iv{VectorT<float>::Constant(3, 0.f), VectorT<float>::Constant(3, 2.f)};
  VectorT<float> y(3);
  y << 1.f, 3.f, 1.f;
  CHECK(picp(iv, y, all(3)) == doctest::Approx(2.0 / 3.0));
  CHECK(mpiw(iv, all(3)) == 2.f);
}

TEST_CASE("csv rows") {
  CHECK(metrics_csv_header() == "run_id,dataset,model,lambda,seed,picp,mpiw,nmpiw,mpe,sharpness,winkler,cwc");
  MetricsReport r;
  r.picp = 0.9;
  r.mpiw = 1.5;
  const std::string row = metrics_csv_row(RunLabel{"r1", "er", "qpignn", 0.5, 3}, r);
  CHECK(row.rfind("r1,er,qpignn,0.5,3,0.9,1.5,", 0) == 0);
  std::stringstream ss(row);
  std::string cell;
  int cells = 0;
  while (std::getline(ss, cell, ',')) ++cells;
  CHECK(cells == 12);
  CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
}
