#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qpi/losses.hpp"
#include "qpi/metrics.hpp"
#include "qpi/model.hpp"
#include "qpi/optim.hpp"

namespace qpi {

enum class LossKind {
  QpiFull,       // coverage + violation + width
  CoverageOnly,  // lambda_width forced to 0
  WidthOnly,     // coverage and violation terms off
  Mse,           // MSE on the center head only
  Sqr,           // expected pinball over tau ~ U(0,1)
  RqrAdj,        // RQR-W plus ordering penalty
  MseMcDropout,  // MSE with dropout; intervals from MC dropout
};

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  int epochs = 500;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double alpha = 0.1;
  double lambda_width = kDefaultLambdaWidth;
  std::uint64_t seed = 0;
  HeadKind model_variant = HeadKind::DualHead;
  LossKind loss_kind = LossKind::QpiFull;
  double dropout_p = 0.0;
  Eigen::Index hidden = 64;
  WidthNorm width_norm = WidthNorm::L1;
  bool smooth_coverage = false;
  double gamma_order = 1.0;
  double rqr_lambda = 1.0;
  int mc_passes = 100;
  double t_mult = kMcDropoutTMult;
  LrSchedule schedule = LrSchedule::InvSqrt;
  bool coupled_weight_decay = true;

  /// Throws ParameterError on out-of-range values or a loss/head mismatch.
  void validate() const;

  LossConfig loss_config() const;
  AdamConfig adam_config() const;
  ModelConfig model_config(Eigen::Index in_dim) const;
  /// Short model label for result tables, e.g. "qpignn", "sqr", "fixed_margin+full".
  std::string model_label() const;
};

/// Config of the MC-dropout baseline: MeanOnly head, MSE loss, p = 0.2.
TrainConfig mc_dropout_config(TrainConfig base);
TrainConfig sqr_config(TrainConfig base);
TrainConfig rqr_adj_config(TrainConfig base);

/// Per-epoch trajectory and final per-mask metrics.
struct RunRecord {
  std::vector<double> coverage;   ///< train-mask coverage (NaN for heads without bounds during training)
  std::vector<double> width;      ///< train-mask mean width (NaN likewise)
  std::vector<double> loss;
  std::vector<double> grad_norm;  ///< norm of the loss gradient, before weight decay
  std::vector<double> violation;  ///< violation term (NaN unless a QpiGNN loss)
  std::optional<MetricsReport> train_metrics;
  std::optional<MetricsReport> val_metrics;
  std::optional<MetricsReport> test_metrics;
  double crossing_rate = 0.0;     ///< fraction of all nodes with low > up after training

  std::size_t epochs() const noexcept { return loss.size(); }
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct TrainedModel {
  ModelConfig model;
  ParamStore params;
  RunRecord record;
};

/// Full-batch training: encode, heads, bounds, loss on the train mask, one Adam step per epoch.
/// Dispatches on cfg.loss_kind. Throws NonFiniteLossError on a NaN/Inf loss.
TrainedModel train(const Dataset& ds, const TrainConfig& cfg);

/// QpiGNN losses only (QpiFull, CoverageOnly, WidthOnly, Mse ablation).
TrainedModel train_qpignn(const Dataset& ds, const TrainConfig& cfg);

/// Sqr, RqrAdj, MseMcDropout.
TrainedModel train_baseline(const Dataset& ds, const TrainConfig& cfg);

/// Intervals for every node of `ds` (which may be a different graph than the training one).
IntervalSet predict_intervals(const Dataset& ds, ParamStore& params, const TrainConfig& cfg);

/// Metrics on a mask, or nullopt when the mask is empty or the targets are constant on it.
std::optional<MetricsReport> try_report(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha);

/// Writes `epoch,coverage,width,loss,grad_norm`, one row per epoch.
void write_trajectory_csv(const std::string& path, const RunRecord& rec);
std::string trajectory_csv(const RunRecord& rec);

}  // namespace qpi
