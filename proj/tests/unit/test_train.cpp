#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "qpi/dataset.hpp"
#include "qpi/errors.hpp"
#include "qpi/rng.hpp"
#include "qpi/train.hpp"

using namespace qpi;

namespace {

Dataset small_dataset(std::uint64_t seed, NodeId n = 300) {
  return synth_dataset(gen_er(n, 5.0 / static_cast<double>(n), seed), FeatureFamily::Gaussian, 8, 1.0, seed);
}

TrainConfig quick(int epochs = 150) {
  TrainConfig c;
  c.epochs = epochs;
  c.lr = 1e-2;
  c.hidden = 16;
  return c;
}

}  // namespace

TEST_CASE("identical seeds give identical records") {
  const Dataset ds = small_dataset(1);
  const TrainConfig c = quick(40);
  const TrainedModel a = train(ds, c);
  const TrainedModel b = train(ds, c);
  CHECK(a.record == b.record);
  CHECK(a.record.epochs() == 40);
  CHECK(a.record.coverage.size() == 40);
  CHECK(a.record.grad_norm.size() == 40);
  TrainConfig other = c;
  other.seed = 1;
  CHECK_FALSE(train(ds, other).record == a.record);
}

TEST_CASE("without a width penalty coverage goes to one on pure noise") {
  Dataset ds = small_dataset(2);
  RngStream rng(5, "test.train.noise");
  for (Eigen::Index i = 0; i < ds.targets.size(); ++i) ds.targets[i] = rng.normal();
  TrainConfig c = quick(300);
  c.lambda_width = 0.0;
  const TrainedModel m = train(ds, c);
  CHECK(m.record.coverage.back() > 0.98);
  CHECK(m.record.coverage.back() > m.record.coverage.front());
}

TEST_CASE("violation term shrinks whenever coverage rises") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    CAPTURE(seed);
    const Dataset ds = small_dataset(seed);
    TrainConfig c = quick(200);
    c.seed = seed;
    const RunRecord r = train(ds, c).record;
    if (r.coverage.back() >= r.coverage.front()) CHECK(r.violation.back() <= r.violation.front());
    CHECK(r.train_metrics.has_value());
    CHECK(r.val_metrics.has_value());
    CHECK(r.test_metrics.has_value());
  }
}

TEST_CASE("dual head intervals never cross") {
  const Dataset ds = small_dataset(6);
  TrainConfig c = quick(60);
  TrainedModel m = train(ds, c);
  CHECK(m.record.crossing_rate == 0.0);
  const IntervalSet iv = predict_intervals(ds, m.params, c);
  CHECK((iv.up.array() > iv.low.array()).all());
}

TEST_CASE("rqr-adj keeps ordering violations rare") {
  const Dataset ds = small_dataset(7);
  TrainConfig c = rqr_adj_config(quick(300));
  const TrainedModel m = train(ds, c);
  CHECK(m.record.crossing_rate < 0.05);
  CHECK(c.model_variant == HeadKind::Rqr);
}

TEST_CASE("sqr baseline produces ordered quantile intervals") {
  const Dataset ds = small_dataset(8);
  TrainConfig c = sqr_config(quick(200));
  TrainedModel m = train(ds, c);
  REQUIRE(m.record.test_metrics.has_value());
  CHECK(std::isfinite(m.record.test_metrics->mpiw));
  CHECK(m.record.loss.back() < m.record.loss.front());
  const IntervalSet iv = predict_intervals(ds, m.params, c);
  const double ordered = (iv.up.array() >= iv.low.array()).cast<double>().mean();
  CHECK(ordered > 0.9);
}

TEST_CASE("mc dropout pipeline") {
  const Dataset ds = small_dataset(9);
  TrainConfig c = mc_dropout_config(quick(100));
  c.mc_passes = 20;
  CHECK(c.dropout_p == 0.2);
  CHECK(c.model_variant == HeadKind::MeanOnly);
  TrainedModel m = train(ds, c);
  const IntervalSet iv = predict_intervals(ds, m.params, c);
  CHECK((iv.up.array() >= iv.low.array()).all());
  CHECK((iv.up - iv.low).mean() > 0.0);
  CHECK(std::isnan(m.record.coverage.front()));
  const IntervalSet again = predict_intervals(ds, m.params, c);
  CHECK(again.low == iv.low);
}

TEST_CASE("intervals transfer to another graph") {
  const Dataset src = small_dataset(10);
  const Dataset dst = synth_dataset(gen_grid(15, 15), FeatureFamily::Gaussian, 8, 1.0, 10);
  TrainConfig c = quick(30);
  TrainedModel m = train(src, c);
  const IntervalSet iv = predict_intervals(dst, m.params, c);
  CHECK(iv.size() == dst.num_nodes());
}

TEST_CASE("non-finite loss aborts") {
  Dataset ds = small_dataset(11);
  for (Eigen::Index i = 0; i < ds.targets.size(); ++i) {
    if (ds.masks.train[static_cast<std::size_t>(i)]) {
      ds.targets[i] = std::numeric_limits<double>::infinity();
      break;
    }
  }
  CHECK_THROWS_AS(train(ds, quick(5)), NonFiniteLossError);
}

TEST_CASE("config validation") {
  const Dataset ds = small_dataset(12, 50);
  auto rejects = [&](auto mutate) {
    TrainConfig c = quick(5);
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ParameterError);
  };
  rejects([](TrainConfig& c) { c.epochs = 0; });
  rejects([](TrainConfig& c) { c.alpha = 0.0; });
  rejects([](TrainConfig& c) { c.lambda_width = -1.0; });
  rejects([](TrainConfig& c) { c.lr = -1e-3; });
  rejects([](TrainConfig& c) { c.dropout_p = 1.0; });
  rejects([](TrainConfig& c) {
    c.loss_kind = LossKind::Sqr;
    c.model_variant = HeadKind::DualHead;
  });
  CHECK(parse_loss_kind(to_string(LossKind::RqrAdj)) == LossKind::RqrAdj);
  CHECK_THROWS_AS(parse_loss_kind("nope"), ParameterError);
}

TEST_CASE("defaults follow the training protocol") {
  const TrainConfig c;
  CHECK(c.epochs == 500);
  CHECK(c.lr == 1e-3);
  CHECK(c.weight_decay == 1e-3);
  CHECK(c.alpha == 0.1);
  CHECK(c.hidden == 64);
  CHECK(c.model_label() == "qpignn");
}

TEST_CASE("trajectory csv") {
  const Dataset ds = small_dataset(13);
  const RunRecord r = train(ds, quick(12)).record;
  const std::string csv = trajectory_csv(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,coverage,width,loss,grad_norm");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 12);
}
