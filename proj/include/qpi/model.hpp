#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qpi/autodiff.hpp"
#include "qpi/intervals.hpp"

namespace qpi {

/// Output head on top of the shared two-layer GraphSAGE encoder.
enum class HeadKind {
  DualHead,     // center + softplus half-width
  FixedMargin,  // center +/- softplus(one shared scalar)
  SingleHead,   // hidden -> 2 raw outputs read as (low, up)
  Rqr,          // same shape as SingleHead, trained with the RQR objective
  Sqr,          // tau appended as an input column, one quantile output
  MeanOnly,     // center only; intervals come from MC dropout
};

std::string to_string(HeadKind k);
HeadKind parse_head_kind(const std::string& name);

struct ModelConfig {
  Eigen::Index in_dim = 1;  ///< raw feature dimension; the Sqr head adds one input column itself
  Eigen::Index hidden = 64;
  HeadKind head = HeadKind::DualHead;
};

/// Glorot-uniform weights seeded per parameter name; zero biases; zero margin.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct EncodeOptions {
  double dropout_p = 0.0;
  bool train_mode = false;
  std::uint64_t seed = 0;
};

/// H = relu(L2(relu(L1(X)))), L(Z) = Z W_self + mean_agg(Z) W_neigh + b.
/// Dropout, when enabled, follows each relu.
Var encode(Tape& tape, const Graph& graph, const Tensor& x, ParamStore& params,
           const EncodeOptions& opts = {});

struct QpiOutputs {
  Var center;      ///< N x 1
  Var half_width;  ///< N x 1, strictly positive
};

QpiOutputs qpi_forward(Tape& tape, const Var& h, ParamStore& params);

struct BoundVars {
  Var low;
  Var up;
};

BoundVars interval_vars(const Var& center, const Var& half_width);

/// [center - d, center + d]; throws ContractError on negative or mismatched d.
IntervalSet intervals(const Vector& center, const Vector& half_width);

/// Bounds for the DualHead, FixedMargin, SingleHead and Rqr heads.
BoundVars variant_forward(Tape& tape, const Var& h, ParamStore& params, HeadKind kind);

/// Center head (`head.pred`) output, N x 1.
Var center_forward(Tape& tape, const Var& h, ParamStore& params);

/// Quantile output with a per-node quantile level appended to the features.
Var sqr_forward(Tape& tape, const Graph& graph, const Tensor& x, const Vector& tau, ParamStore& params,
                const EncodeOptions& opts = {});

/// Quantile output at one level for every node; throws ParameterError unless tau in (0,1).
Vector sqr_forward(const Graph& graph, const Tensor& x, double tau, ParamStore& params);

/// mean +/- t_mult * sample std (divisor T-1) over the rows of `samples` (T x N).
IntervalSet interval_from_samples(const Matrix& samples, double t_mult);

/// T stochastic passes of encoder + center head with dropout active.
IntervalSet mc_dropout_interval(const Graph& graph, const Tensor& x, ParamStore& params, int passes,
                                double p, double t_mult, std::uint64_t seed);

/// Default t multiplier for a 90% two-sided interval.
inline constexpr double kMcDropoutTMult = 1.6449;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
/// Reads a checkpoint and checks every tensor against the shapes implied by cfg.
ParamStore load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);

}  // namespace qpi
