#include <doctest.h>

#include <cmath>
#include <numeric>

#include "qpi/errors.hpp"
#include "qpi/model.hpp"
#include "qpi/rng.hpp"
#include "support.hpp"

using namespace qpi;

namespace {

Tensor random_features(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  RngStream rng(seed, "test.features");
  Tensor x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

Graph small_graph() {
  return Graph::from_edges(6, std::vector<std::pair<NodeId, NodeId>>{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {3, 4}});
}

}  // namespace

TEST_CASE("parameter initialization") {
  const auto p = init_params({4, 8, HeadKind::DualHead}, 3);
  CHECK(p.value("enc.l1.w_self").rows() == 4);
  CHECK(p.value("enc.l1.w_self").cols() == 8);
  CHECK(p.value("enc.l2.w_neigh").rows() == 8);
  CHECK(p.value("head.pred.w").rows() == 8);
  CHECK(p.value("head.width.w").cols() == 1);
  CHECK(p.value("enc.l1.bias").isZero());
  const double limit = std::sqrt(6.0 / (4 + 8));
  CHECK(p.value("enc.l1.w_self").cwiseAbs().maxCoeff() <= limit);
  CHECK(init_params({4, 8, HeadKind::DualHead}, 3).value("enc.l1.w_self") == p.value("enc.l1.w_self"));
  CHECK(init_params({4, 8, HeadKind::DualHead}, 4).value("enc.l1.w_self") != p.value("enc.l1.w_self"));

  CHECK(init_params({4, 8, HeadKind::Sqr}, 1).value("enc.l1.w_self").rows() == 5);
  CHECK(init_params({4, 8, HeadKind::FixedMargin}, 1).value("head.margin").isZero());
  CHECK(init_params({4, 8, HeadKind::SingleHead}, 1).value("head.bounds.w").cols() == 2);
}

TEST_CASE("encode") {
  const Graph g = small_graph();
  const Tensor x = random_features(6, 3, 1);

  SUBCASE("zero weights give zero embeddings") {
    auto p = init_params({3, 8, HeadKind::DualHead}, 1);
    for (auto& [name, slot] : p) slot.value.setZero();
    Tape t;
    CHECK(encode(t, g, x, p).value().isZero());
  }
  SUBCASE("an isolated node ignores the neighbor weights") {
    const Graph single = Graph::from_edges(1, std::vector<std::pair<NodeId, NodeId>>{});
    auto p = init_params({3, 8, HeadKind::DualHead}, 2);
    Tape t1;
    const Tensor h1 = encode(t1, single, x.topRows(1), p).value();
    p.value("enc.l1.w_neigh").setRandom();
    p.value("enc.l2.w_neigh").setRandom();
    Tape t2;
    CHECK(encode(t2, single, x.topRows(1), p).value() == h1);
  }
  SUBCASE("feature dimension mismatch") {
    auto p = init_params({4, 8, HeadKind::DualHead}, 1);
    Tape t;
    CHECK_THROWS_AS(encode(t, g, x, p), ShapeError);
  }
  SUBCASE("gradients of mean(H) match central differences") {
    auto p = init_params({3, 4, HeadKind::DualHead}, 5);
    for (auto& [name, slot] : p) slot.value.array() += 0.05;  // nonzero biases
    const auto report = finite_diff_check(
        [&](Tape& t, ParamStore& s) { return ad::reduce_mean(encode(t, g, x, s)); }, p, 1e-5);
    CHECK(report.max_rel_error < 1e-4);
  }
  SUBCASE("permutation equivariance") {
    auto p = init_params({3, 8, HeadKind::DualHead}, 7);
    const std::vector<NodeId> perm{3, 5, 0, 1, 4, 2};  // new id of old node v
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (auto [u, v] : g.edge_list()) edges.emplace_back(perm[u], perm[v]);
    const Graph pg = Graph::from_edges(6, edges);
    Tensor px(6, 3);
    for (NodeId v = 0; v < 6; ++v) px.row(perm[v]) = x.row(v);
    Tape t1, t2;
    const Tensor h = encode(t1, g, x, p).value();
    const Tensor ph = encode(t2, pg, px, p).value();
    for (NodeId v = 0; v < 6; ++v) CHECK(ph.row(perm[v]).isApprox(h.row(v), 1e-14));
  }
  SUBCASE("dropout is reproducible and off in eval mode") {
    auto p = init_params({3, 8, HeadKind::DualHead}, 7);
    Tape t;
    const Tensor plain = encode(t, g, x, p).value();
    CHECK(encode(t, g, x, p, {0.5, false, 1}).value() == plain);
    const Tensor d1 = encode(t, g, x, p, {0.5, true, 1}).value();
    CHECK(encode(t, g, x, p, {0.5, true, 1}).value() == d1);
    CHECK(d1 != plain);
  }
}

TEST_CASE("dual head") {
  const Graph g = small_graph();
  const Tensor x = random_features(6, 3, 2);

  SUBCASE("zero width head gives ln 2") {
    auto p = init_params({3, 8, HeadKind::DualHead}, 1);
    p.value("head.width.w").setZero();
    p.value("head.width.b").setZero();
    Tape t;
    const auto out = qpi_forward(t, encode(t, g, x, p), p);
    for (Eigen::Index v = 0; v < 6; ++v) CHECK(out.half_width.value()(v, 0) == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("half-width strictly positive for random parameters") {
    bool all_positive = true;
    for (std::uint64_t trial = 0; trial < 10000; ++trial) {
      auto p = init_params({3, 4, HeadKind::DualHead}, trial);
      RngStream rng(trial, "test.width");
      p.value("head.width.b")(0, 0) = rng.uniform(-20.0, 20.0);
      Tape t;
      const auto out = qpi_forward(t, encode(t, g, x, p), p);
      all_positive = all_positive && out.half_width.value().minCoeff() > 0.0;
    }
    CHECK(all_positive);
  }
  SUBCASE("head separation") {
    auto p = init_params({3, 8, HeadKind::DualHead}, 4);
    Tape t1;
    const auto a = qpi_forward(t1, encode(t1, g, x, p), p);
    const Tensor center = a.center.value();
    const Tensor width = a.half_width.value();
    const Tensor saved = p.value("head.width.w");
    p.value("head.width.w").array() += 0.3;
    Tape t2;
    const auto b = qpi_forward(t2, encode(t2, g, x, p), p);
    CHECK(b.center.value() == center);
    CHECK(b.half_width.value() != width);
    p.value("head.pred.w").array() += 0.3;
    p.value("head.width.w") = saved;
    Tape t3;
    const auto c = qpi_forward(t3, encode(t3, g, x, p), p);
    CHECK(c.half_width.value() == width);
  }
}

TEST_CASE("intervals") {
  Vector c(2), d(2);
  c << 1.0, -2.0;
  d << 0.5, 0.0;
  const auto iv = intervals(c, d);
  CHECK(iv.low[0] == 0.5);
  CHECK(iv.up[0] == 1.5);
  CHECK(iv.low[1] == iv.up[1]);
  CHECK(iv.widths().isApprox(2.0 * d));
  CHECK_THROWS_AS(intervals(c, Vector::Constant(2, -0.1)), ContractError);
  CHECK_THROWS_AS(intervals(c, Vector::Constant(3, 0.1)), ShapeError);
}

TEST_CASE("variant heads") {
  const Graph g = small_graph();
  const Tensor x = random_features(6, 3, 3);

  SUBCASE("fixed margin at zero has half-width ln 2 everywhere") {
    auto p = init_params({3, 8, HeadKind::FixedMargin}, 1);
    Tape t;
    const auto b = variant_forward(t, encode(t, g, x, p), p, HeadKind::FixedMargin);
    const Tensor w = b.up.value() - b.low.value();
    for (Eigen::Index v = 0; v < 6; ++v) CHECK(w(v, 0) == doctest::Approx(2.0 * std::log(2.0)));
    p.value("head.margin")(0, 0) = 1.3;
    Tape t2;
    const auto b2 = variant_forward(t2, encode(t2, g, x, p), p, HeadKind::FixedMargin);
    const Tensor w2 = b2.up.value() - b2.low.value();
    CHECK(w2.maxCoeff() - w2.minCoeff() < 1e-12);
  }
  SUBCASE("single head may cross") {
    auto p = init_params({3, 8, HeadKind::SingleHead}, 1);
    p.value("head.bounds.b")(0, 0) = 1.0;  // low
    p.value("head.bounds.b")(0, 1) = -1.0;  // up
    p.value("head.bounds.w").setZero();
    Tape t;
    const auto b = variant_forward(t, encode(t, g, x, p), p, HeadKind::SingleHead);
    CHECK((b.low.value().array() > b.up.value().array()).all());
  }
}

TEST_CASE("quantile head") {
  const Graph g = small_graph();
  const Tensor x = random_features(6, 3, 4);
  auto p = init_params({3, 8, HeadKind::Sqr}, 2);
  const Vector q05 = sqr_forward(g, x, 0.05, p);
  CHECK(q05.size() == 6);
  CHECK(sqr_forward(g, x, 0.05, p) == q05);
  CHECK(sqr_forward(g, x, 0.95, p) != q05);
  CHECK_THROWS_AS(sqr_forward(g, x, 0.0, p), ParameterError);
  CHECK_THROWS_AS(sqr_forward(g, x, 1.0, p), ParameterError);
  // The scalar-level path equals the tape path with a constant tau column.
  Tape t;
  const Tensor tape_out = sqr_forward(t, g, x, Vector::Constant(6, 0.05), p).value();
  CHECK(tape_out.col(0).isApprox(q05, 1e-15));
}

TEST_CASE("MC dropout intervals") {
  SUBCASE("sample statistics") {
    Matrix samples(4, 2);
    samples << -1, 0, 1, 0, -1, 0, 1, 0;
    // Column 0 has mean 0 and sample std sqrt(4/3).
    const auto iv = interval_from_samples(samples, 1.645);
    CHECK(iv.low[0] == doctest::Approx(-1.645 * std::sqrt(4.0 / 3.0)));
    CHECK(iv.up[0] == doctest::Approx(1.645 * std::sqrt(4.0 / 3.0)));
    CHECK(iv.low[1] == 0.0);
    CHECK(iv.up[1] == 0.0);
  }
  SUBCASE("unit-variance samples give +-t") {
    Matrix s(2, 1);
    s << -std::sqrt(0.5), std::sqrt(0.5);
    const auto iv = interval_from_samples(s, 1.645);
    CHECK(iv.low[0] == doctest::Approx(-1.645));
    CHECK(iv.up[0] == doctest::Approx(1.645));
  }
  const Graph g = small_graph();
  const Tensor x = random_features(6, 3, 5);
  auto p = init_params({3, 8, HeadKind::MeanOnly}, 3);
  SUBCASE("p = 0 is degenerate at the deterministic prediction") {
    const auto iv = mc_dropout_interval(g, x, p, 10, 0.0, kMcDropoutTMult, 1);
    Tape t;
    const Tensor c = center_forward(t, encode(t, g, x, p), p).value();
    CHECK(iv.low.isApprox(c.col(0), 1e-14));
    CHECK((iv.up - iv.low).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("reproducible for a fixed seed") {
    const auto a = mc_dropout_interval(g, x, p, 20, 0.2, kMcDropoutTMult, 9);
    const auto b = mc_dropout_interval(g, x, p, 20, 0.2, kMcDropoutTMult, 9);
    CHECK(a.low == b.low);
    CHECK(a.up == b.up);
    CHECK((a.up - a.low).minCoeff() > 0.0);
  }
  CHECK_THROWS_AS(mc_dropout_interval(g, x, p, 1, 0.2, kMcDropoutTMult, 1), ParameterError);
}

TEST_CASE("checkpoints") {
  test::TempDir dir("checkpoint");
  const ModelConfig cfg{3, 8, HeadKind::DualHead};
  const auto p = init_params(cfg, 5);
  save_checkpoint(dir / "ck.json", p);
  const auto back = load_checkpoint(dir / "ck.json", cfg);
  for (const auto& [name, slot] : p) CHECK(back.value(name) == slot.value);
  CHECK_THROWS_AS(load_checkpoint(dir / "ck.json", {4, 8, HeadKind::DualHead}), ShapeError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json", cfg), IngestionError);
  test::write_file(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json", cfg), IngestionError);
}
