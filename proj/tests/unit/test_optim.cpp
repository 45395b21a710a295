#include <doctest.h>

#include <cmath>

#include "qpi/errors.hpp"
#include "qpi/optim.hpp"

using namespace qpi;

namespace {

Tensor scalar(double v) { return Tensor::Constant(1, 1, v); }

Tensor& g(ParamStore& p, const std::string& name) { return p.slot(name).grad; }

/// Textbook Adam on one scalar, written without Eigen.
struct ScalarAdam {
  double m = 0, v = 0, lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;
  double step(double theta, double g) {
    g += wd * theta;
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("zero gradient without decay leaves parameters alone") {
  ParamStore p;
  p.add("w", Tensor::Constant(2, 3, 0.7));
  AdamState s(p, AdamConfig{.weight_decay = 0.0});
  adam_step(p, s);
  CHECK(p.value("w") == Tensor::Constant(2, 3, 0.7));
  CHECK(s.step() == 1);
}

TEST_CASE("first step moves by about lr") {
  ParamStore p;
  p.add("theta", scalar(1.0));
  AdamState s(p, AdamConfig{});
  g(p, "theta")(0, 0) = 1.0;
  adam_step(p, s);
  CHECK(p.value("theta")(0, 0) == doctest::Approx(0.999).epsilon(1e-6));
  CHECK(p.grad("theta")(0, 0) == 0.0);
}

TEST_CASE("matches a scalar reference over many steps") {
  for (bool decay : {false, true}) {
    CAPTURE(decay);
    const double wd = decay ? 0.05 : 0.0;
    ParamStore p;
    p.add("theta", scalar(1.3));
    AdamState s(p, AdamConfig{.lr = 0.01, .weight_decay = wd});
    ScalarAdam ref{.lr = 0.01, .wd = wd};
    double theta = 1.3;
    for (int k = 0; k < 200; ++k) {
      const double gk = std::sin(0.1 * k) + 2.0 * theta;
      g(p, "theta")(0, 0) = gk;
      adam_step(p, s);
      theta = ref.step(theta, gk);
      REQUIRE(p.value("theta")(0, 0) == doctest::Approx(theta).epsilon(1e-12));
    }
  }
}

TEST_CASE("identical tensors under different names update identically") {
  ParamStore p;
  p.add("alpha", Tensor::Constant(2, 2, 0.4));
  p.add("zeta", Tensor::Constant(2, 2, 0.4));
  AdamState s(p, AdamConfig{.lr = 0.05});
  for (int k = 0; k < 10; ++k) {
    g(p, "alpha").setConstant(0.3 * k - 1);
    g(p, "zeta").setConstant(0.3 * k - 1);
    adam_step(p, s);
  }
  CHECK(p.value("alpha") == p.value("zeta"));
}

TEST_CASE("lr zero is a fixed point") {
  ParamStore p;
  p.add("w", Tensor::Constant(3, 1, -2.0));
  AdamState s(p, AdamConfig{.lr = 0.0});
  g(p, "w").setConstant(5.0);
  adam_step(p, s);
  CHECK(p.value("w") == Tensor::Constant(3, 1, -2.0));
}

TEST_CASE("decoupled decay shrinks weights directly") {
  ParamStore p;
  p.add("w", scalar(2.0));
  AdamState s(p, AdamConfig{.lr = 0.1, .weight_decay = 0.5, .coupled_weight_decay = false});
  adam_step(p, s);
  // Zero gradient: the Adam part is 0 and the weight shrinks by lr * wd * w.
  CHECK(p.value("w")(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("inverse square root schedule") {
  ParamStore p;
  p.add("w", scalar(0.0));
  AdamState s(p, AdamConfig{.lr = 0.1, .schedule = LrSchedule::InvSqrt});
  CHECK(s.current_lr() == doctest::Approx(0.1));
  for (int k = 0; k < 3; ++k) adam_step(p, s);
  CHECK(s.current_lr() == doctest::Approx(0.1 / std::sqrt(4.0)));
}

TEST_CASE("convex toy converges") {
  ParamStore p;
  p.add("theta", scalar(1.0));
  AdamState s(p, AdamConfig{});
  int steps = 0;
  while (steps < 5000 && std::abs(p.value("theta")(0, 0)) >= 1e-3) {
    g(p, "theta")(0, 0) = 2.0 * p.value("theta")(0, 0);
    adam_step(p, s);
    ++steps;
  }
  CHECK(std::abs(p.value("theta")(0, 0)) < 1e-3);
  CHECK(steps < 5000);
}

TEST_CASE("contract errors") {
  ParamStore p;
  p.add("w", scalar(1.0));
  AdamState empty;
  CHECK_FALSE(empty.initialized());
  CHECK_THROWS_AS(adam_step(p, empty), ContractError);

  AdamState s(p, AdamConfig{});
  ParamStore other;
  other.add("v", scalar(1.0));
  CHECK_THROWS_AS(adam_step(other, s), ContractError);
}

TEST_CASE("gradient norm") {
  ParamStore p;
  p.add("a", Tensor::Zero(1, 2));
  p.add("b", Tensor::Zero(2, 2));
  CHECK(grad_norm(p) == 0.0);
  g(p, "a") << 3, 4;
  CHECK(grad_norm(p) == doctest::Approx(5.0));
  g(p, "b")(1, 1) = 12;
  CHECK(grad_norm(p) == doctest::Approx(13.0));

  ParamStore q;
  q.add("b", Tensor::Zero(2, 2));
  q.add("a", Tensor::Zero(1, 2));
  g(q, "a") << 3, 4;
  g(q, "b")(1, 1) = 12;
  CHECK(grad_norm(q) == grad_norm(p));
}
