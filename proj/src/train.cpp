#include "qpi/train.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_qpi_loss(LossKind k) {
  return k == LossKind::QpiFull || k == LossKind::CoverageOnly || k == LossKind::WidthOnly || k == LossKind::Mse;
}

struct EpochResult {
  Var objective;
  double coverage = kNaN;
  double width = kNaN;
  double violation = kNaN;
  LossBreakdown terms;
};

EpochResult epoch_loss(Tape& tape, const Dataset& ds, ParamStore& params, const TrainConfig& cfg, int epoch) {
  const auto epoch_seed = derive_seed(cfg.seed, "train.epoch", static_cast<std::uint64_t>(epoch));
  const EncodeOptions enc{cfg.dropout_p, true, epoch_seed};
  const Mask& train = ds.masks.train;
  EpochResult r;

  switch (cfg.loss_kind) {
    case LossKind::QpiFull:
    case LossKind::CoverageOnly:
    case LossKind::WidthOnly: {
      const Var h = encode(tape, ds.graph, ds.features, params, enc);
      const BoundVars b = variant_forward(tape, h, params, cfg.model_variant);
      const QpiLoss loss = qpi_total_loss(b, ds.targets, train, cfg.loss_config());
      r.objective = loss.objective;
      r.terms = loss.terms;
      r.coverage = loss.terms.empirical_coverage;
      r.violation = loss.terms.violation_term;
      const auto idx = mask_indices(train);
      r.width = (b.up.value().col(0)(idx) - b.low.value().col(0)(idx)).mean();
      return r;
    }
    case LossKind::Mse: {
      const Var h = encode(tape, ds.graph, ds.features, params, enc);
      const BoundVars b = variant_forward(tape, h, params, cfg.model_variant);
      r.objective = mse_loss(center_forward(tape, h, params), ds.targets, train);
      const IntervalSet iv{b.low.value().col(0), b.up.value().col(0)};
      r.coverage = picp(iv, ds.targets, train);
      r.width = mpiw(iv, train);
      return r;
    }
    case LossKind::Sqr:
      r.objective = sqr_loss(tape, ds, train, params, derive_seed(cfg.seed, "train.sqr_tau", epoch), enc);
      return r;
    case LossKind::RqrAdj: {
      const Var h = encode(tape, ds.graph, ds.features, params, enc);
      const BoundVars b = variant_forward(tape, h, params, HeadKind::Rqr);
      // The RQR level slot is the coverage level: its stationary coverage equals that argument.
      r.objective = rqr_adj_loss(b, ds.targets, train, 1.0 - cfg.alpha, cfg.rqr_lambda, cfg.gamma_order);
      const IntervalSet iv{b.low.value().col(0), b.up.value().col(0)};
      r.coverage = picp(iv, ds.targets, train);
      r.width = mpiw(iv, train);
      return r;
    }
    case LossKind::MseMcDropout: {
      const Var h = encode(tape, ds.graph, ds.features, params, enc);
      r.objective = mse_loss(center_forward(tape, h, params), ds.targets, train);
      return r;
    }
  }
  throw ContractError("train: unknown loss kind");
}

// Every epoch allocates and frees a few N x hidden tensors. glibc serves
// those with mmap by default, which turns each epoch into page faults.
void keep_tensor_memory_resident() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)done;
#endif
}

TrainedModel run_training(const Dataset& ds, const TrainConfig& cfg) {
  keep_tensor_memory_resident();
  cfg.validate();
  ds.validate();
  if (mask_count(ds.masks.train) == 0) throw ContractError("train: empty train mask");

  TrainedModel out;
  out.model = cfg.model_config(ds.feature_dim());
  out.params = init_params(out.model, cfg.seed);
  AdamState opt(out.params, cfg.adam_config());
  RunRecord& rec = out.record;
  for (auto* v : {&rec.coverage, &rec.width, &rec.loss, &rec.grad_norm, &rec.violation}) {
    v->reserve(static_cast<std::size_t>(cfg.epochs));
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const EpochResult r = epoch_loss(tape, ds, out.params, cfg, epoch);
    const double loss = r.objective.item();
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << epoch + 1 << ": total=" << loss
         << " coverage_term=" << r.terms.coverage_term << " violation_term=" << r.terms.violation_term
         << " width_term=" << r.terms.width_term;
      throw NonFiniteLossError(os.str());
    }
    tape.backward(r.objective);
    rec.coverage.push_back(r.coverage);
    rec.width.push_back(r.width);
    rec.loss.push_back(loss);
    rec.grad_norm.push_back(grad_norm(out.params));
    rec.violation.push_back(r.violation);
    adam_step(out.params, opt);
  }

  const IntervalSet iv = predict_intervals(ds, out.params, cfg);
  rec.crossing_rate = static_cast<double>(iv.crossings()) / static_cast<double>(iv.size());
  rec.train_metrics = try_report(iv, ds.targets, ds.masks.train, cfg.alpha);
  rec.val_metrics = try_report(iv, ds.targets, ds.masks.val, cfg.alpha);
  rec.test_metrics = try_report(iv, ds.targets, ds.masks.test, cfg.alpha);
  return out;
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::QpiFull: return "full";
    case LossKind::CoverageOnly: return "coverage_only";
    case LossKind::WidthOnly: return "width_only";
    case LossKind::Mse: return "mse";
    case LossKind::Sqr: return "sqr";
    case LossKind::RqrAdj: return "rqr_adj";
    case LossKind::MseMcDropout: return "mse_mc_dropout";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (auto k : {LossKind::QpiFull, LossKind::CoverageOnly, LossKind::WidthOnly, LossKind::Mse, LossKind::Sqr,
                 LossKind::RqrAdj, LossKind::MseMcDropout}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown loss kind '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ParameterError("train: lr and weight decay must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ParameterError("train: dropout_p must lie in [0, 1)");
  if (hidden < 1) throw ParameterError("train: hidden size must be >= 1");
  loss_config().validate();
  const HeadKind h = model_variant;
  bool ok = false;
  switch (loss_kind) {
    case LossKind::QpiFull:
    case LossKind::CoverageOnly:
    case LossKind::WidthOnly:
      ok = h == HeadKind::DualHead || h == HeadKind::FixedMargin || h == HeadKind::SingleHead;
      break;
    case LossKind::Mse: ok = h == HeadKind::DualHead || h == HeadKind::FixedMargin; break;
    case LossKind::Sqr: ok = h == HeadKind::Sqr; break;
    case LossKind::RqrAdj: ok = h == HeadKind::Rqr; break;
    case LossKind::MseMcDropout: ok = h == HeadKind::MeanOnly; break;
  }
  if (!ok) {
    throw ParameterError("train: loss '" + to_string(loss_kind) + "' does not match head '" + to_string(h) + "'");
  }
  if (loss_kind == LossKind::MseMcDropout && mc_passes < 2) throw ParameterError("train: mc_passes must be >= 2");
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.alpha = alpha;
  c.lambda_width = loss_kind == LossKind::CoverageOnly ? 0.0 : lambda_width;
  c.gamma_order = gamma_order;
  c.rqr_lambda = rqr_lambda;
  c.width_norm = width_norm;
  c.smooth_coverage = smooth_coverage;
  c.coverage_terms = loss_kind != LossKind::WidthOnly;
  return c;
}

AdamConfig TrainConfig::adam_config() const {
  AdamConfig c;
  c.lr = lr;
  c.weight_decay = weight_decay;
  c.schedule = schedule;
  c.coupled_weight_decay = coupled_weight_decay;
  return c;
}

ModelConfig TrainConfig::model_config(Eigen::Index in_dim) const { return ModelConfig{in_dim, hidden, model_variant}; }

std::string TrainConfig::model_label() const {
  switch (loss_kind) {
    case LossKind::Sqr: return "sqr";
    case LossKind::RqrAdj: return "rqr_adj";
    case LossKind::MseMcDropout: return "mc_dropout";
    default: break;
  }
  if (model_variant == HeadKind::DualHead && loss_kind == LossKind::QpiFull) return "qpignn";
  return to_string(model_variant) + "+" + to_string(loss_kind);
}

TrainConfig mc_dropout_config(TrainConfig base) {
  base.model_variant = HeadKind::MeanOnly;
  base.loss_kind = LossKind::MseMcDropout;
  base.dropout_p = 0.2;
  return base;
}

TrainConfig sqr_config(TrainConfig base) {
  base.model_variant = HeadKind::Sqr;
  base.loss_kind = LossKind::Sqr;
  return base;
}

TrainConfig rqr_adj_config(TrainConfig base) {
  base.model_variant = HeadKind::Rqr;
  base.loss_kind = LossKind::RqrAdj;
  return base;
}

TrainedModel train(const Dataset& ds, const TrainConfig& cfg) {
  return is_qpi_loss(cfg.loss_kind) ? train_qpignn(ds, cfg) : train_baseline(ds, cfg);
}

TrainedModel train_qpignn(const Dataset& ds, const TrainConfig& cfg) {
  if (!is_qpi_loss(cfg.loss_kind)) throw ParameterError("train_qpignn: baseline loss kind");
  return run_training(ds, cfg);
}

TrainedModel train_baseline(const Dataset& ds, const TrainConfig& cfg) {
  if (is_qpi_loss(cfg.loss_kind)) throw ParameterError("train_baseline: QpiGNN loss kind");
  return run_training(ds, cfg);
}

IntervalSet predict_intervals(const Dataset& ds, ParamStore& params, const TrainConfig& cfg) {
  switch (cfg.model_variant) {
    case HeadKind::Sqr: {
      const double lo = cfg.alpha / 2.0;
      return IntervalSet{sqr_forward(ds.graph, ds.features, lo, params),
                         sqr_forward(ds.graph, ds.features, 1.0 - lo, params)};
    }
    case HeadKind::MeanOnly:
      return mc_dropout_interval(ds.graph, ds.features, params, cfg.mc_passes, cfg.dropout_p, cfg.t_mult,
                                 derive_seed(cfg.seed, "predict.mc_dropout", 0));
    default: {
      Tape tape;
      const Var h = encode(tape, ds.graph, ds.features, params);
      const BoundVars b = variant_forward(tape, h, params, cfg.model_variant);
      return IntervalSet{b.low.value().col(0), b.up.value().col(0)};
    }
  }
}

std::optional<MetricsReport> try_report(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha) {
  if (mask_count(mask) == 0) return std::nullopt;
  try {
    return report(iv, y, mask, alpha);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

std::string trajectory_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << "epoch,coverage,width,loss,grad_norm\n";
  for (std::size_t e = 0; e < rec.epochs(); ++e) {
    os << e + 1 << ',' << format_double(rec.coverage[e]) << ',' << format_double(rec.width[e]) << ','
       << format_double(rec.loss[e]) << ',' << format_double(rec.grad_norm[e]) << '\n';
  }
  return os.str();
}

void write_trajectory_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << trajectory_csv(rec);
}

}  // namespace qpi
