#include "qpi/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace {

Tensor glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::uint64_t seed, const std::string& name) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  RngStream rng(seed, "init." + name);
  Tensor w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return w;
}

void add_linear(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                std::uint64_t seed) {
  store.add(prefix + ".w", glorot(in, out, seed, prefix + ".w"));
  store.add(prefix + ".b", Tensor::Zero(1, out));
}

void add_sage(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index out,
              std::uint64_t seed) {
  store.add(prefix + ".w_self", glorot(in, out, seed, prefix + ".w_self"));
  store.add(prefix + ".w_neigh", glorot(in, out, seed, prefix + ".w_neigh"));
  store.add(prefix + ".bias", Tensor::Zero(1, out));
}

Var linear(Tape& tape, const Var& h, ParamStore& params, const std::string& prefix) {
  return ad::add_row_bias(ad::matmul(h, tape.param(params, prefix + ".w")), tape.param(params, prefix + ".b"));
}

Var sage_layer(Tape& tape, const Graph& graph, const Var& z, ParamStore& params, const std::string& prefix) {
  const Var self = ad::matmul(z, tape.param(params, prefix + ".w_self"));
  const Var neigh = ad::matmul(ad::csr_mean_aggregate(graph, z), tape.param(params, prefix + ".w_neigh"));
  return ad::add_row_bias(ad::add(self, neigh), tape.param(params, prefix + ".bias"));
}

Var broadcast_rows(Tape& tape, const Var& scalar, Eigen::Index rows) {
  return ad::matmul(tape.constant(Tensor::Ones(rows, 1)), scalar);
}

}  // namespace

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::DualHead: return "dual_head";
    case HeadKind::FixedMargin: return "fixed_margin";
    case HeadKind::SingleHead: return "single_head";
    case HeadKind::Rqr: return "rqr";
    case HeadKind::Sqr: return "sqr";
    case HeadKind::MeanOnly: return "mean_only";
  }
  return "?";
}

HeadKind parse_head_kind(const std::string& name) {
  if (name == "dual_head") return HeadKind::DualHead;
  if (name == "fixed_margin") return HeadKind::FixedMargin;
  if (name == "single_head") return HeadKind::SingleHead;
  if (name == "rqr") return HeadKind::Rqr;
  if (name == "sqr") return HeadKind::Sqr;
  if (name == "mean_only") return HeadKind::MeanOnly;
  throw ParameterError("unknown head kind '" + name + "'");
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.in_dim < 1 || cfg.hidden < 1) throw ParameterError("model: dimensions must be positive");
  ParamStore store;
  const Eigen::Index in = cfg.head == HeadKind::Sqr ? cfg.in_dim + 1 : cfg.in_dim;
  add_sage(store, "enc.l1", in, cfg.hidden, seed);
  add_sage(store, "enc.l2", cfg.hidden, cfg.hidden, seed);
  switch (cfg.head) {
    case HeadKind::DualHead:
      add_linear(store, "head.pred", cfg.hidden, 1, seed);
      add_linear(store, "head.width", cfg.hidden, 1, seed);
      break;
    case HeadKind::FixedMargin:
      add_linear(store, "head.pred", cfg.hidden, 1, seed);
      store.add("head.margin", Tensor::Zero(1, 1));
      break;
    case HeadKind::SingleHead:
    case HeadKind::Rqr:
      add_linear(store, "head.bounds", cfg.hidden, 2, seed);
      break;
    case HeadKind::Sqr:
      add_linear(store, "head.quantile", cfg.hidden, 1, seed);
      break;
    case HeadKind::MeanOnly:
      add_linear(store, "head.pred", cfg.hidden, 1, seed);
      break;
  }
  return store;
}

Var encode(Tape& tape, const Graph& graph, const Tensor& x, ParamStore& params, const EncodeOptions& opts) {
  if (x.rows() != graph.num_nodes()) {
    throw ShapeError("encode: " + std::to_string(x.rows()) + " feature rows for " +
                     std::to_string(graph.num_nodes()) + " nodes");
  }
  const auto expected_in = params.value("enc.l1.w_self").rows();
  if (x.cols() != expected_in) {
    throw ShapeError("encode: feature dim " + std::to_string(x.cols()) + ", model expects " +
                     std::to_string(expected_in));
  }
  Var h = tape.constant(x);
  h = ad::relu(sage_layer(tape, graph, h, params, "enc.l1"));
  h = ad::dropout(h, opts.dropout_p, derive_seed(opts.seed, "dropout.l1", 0), opts.train_mode);
  h = ad::relu(sage_layer(tape, graph, h, params, "enc.l2"));
  h = ad::dropout(h, opts.dropout_p, derive_seed(opts.seed, "dropout.l2", 0), opts.train_mode);
  return h;
}

QpiOutputs qpi_forward(Tape& tape, const Var& h, ParamStore& params) {
  return {linear(tape, h, params, "head.pred"), ad::softplus(linear(tape, h, params, "head.width"))};
}

Var center_forward(Tape& tape, const Var& h, ParamStore& params) { return linear(tape, h, params, "head.pred"); }

BoundVars interval_vars(const Var& center, const Var& half_width) {
  return {ad::sub(center, half_width), ad::add(center, half_width)};
}

IntervalSet intervals(const Vector& center, const Vector& half_width) {
  if (center.size() != half_width.size()) throw ShapeError("intervals: length mismatch");
  if ((half_width.array() < 0.0).any()) throw ContractError("intervals: negative half-width");
  return IntervalSet{center - half_width, center + half_width};
}

BoundVars variant_forward(Tape& tape, const Var& h, ParamStore& params, HeadKind kind) {
  switch (kind) {
    case HeadKind::DualHead: {
      const auto out = qpi_forward(tape, h, params);
      return interval_vars(out.center, out.half_width);
    }
    case HeadKind::FixedMargin: {
      const Var center = linear(tape, h, params, "head.pred");
      const Var margin = ad::softplus(tape.param(params, "head.margin"));
      return interval_vars(center, broadcast_rows(tape, margin, h.rows()));
    }
    case HeadKind::SingleHead:
    case HeadKind::Rqr: {
      const Var both = linear(tape, h, params, "head.bounds");
      return {ad::column(both, 0), ad::column(both, 1)};
    }
    case HeadKind::Sqr:
    case HeadKind::MeanOnly:
      break;
  }
  throw ContractError("variant_forward: head " + to_string(kind) + " has no direct interval output");
}

Var sqr_forward(Tape& tape, const Graph& graph, const Tensor& x, const Vector& tau, ParamStore& params,
                const EncodeOptions& opts) {
  if (tau.size() != x.rows()) throw ShapeError("sqr_forward: tau length differs from node count");
  Tensor augmented(x.rows(), x.cols() + 1);
  augmented.leftCols(x.cols()) = x;
  augmented.col(x.cols()) = tau;
  const Var h = encode(tape, graph, augmented, params, opts);
  return linear(tape, h, params, "head.quantile");
}

Vector sqr_forward(const Graph& graph, const Tensor& x, double tau, ParamStore& params) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("sqr_forward: tau must lie in (0, 1)");
  Tape tape;
  return sqr_forward(tape, graph, x, Vector::Constant(x.rows(), tau), params).value().col(0);
}

IntervalSet interval_from_samples(const Matrix& samples, double t_mult) {
  const auto passes = samples.rows();
  if (passes < 2) throw ParameterError("mc dropout: need at least 2 passes");
  const Vector mean = samples.colwise().mean().transpose();
  const Vector var =
      (samples.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() /
      static_cast<double>(passes - 1);
  const Vector sd = var.cwiseSqrt();
  return IntervalSet{mean - t_mult * sd, mean + t_mult * sd};
}

IntervalSet mc_dropout_interval(const Graph& graph, const Tensor& x, ParamStore& params, int passes,
                                double p, double t_mult, std::uint64_t seed) {
  if (passes < 2) throw ParameterError("mc dropout: need at least 2 passes");
  Matrix samples(passes, x.rows());
  for (int t = 0; t < passes; ++t) {
    Tape tape;
    const EncodeOptions opts{p, true, derive_seed(seed, "mc_dropout.pass", static_cast<std::uint64_t>(t))};
    const Var h = encode(tape, graph, x, params, opts);
    samples.row(t) = center_forward(tape, h, params).value().col(0).transpose();
  }
  return interval_from_samples(samples, t_mult);
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [name, slot] : params) {
    const auto& v = slot.value;
    doc[name] = {{"shape", {v.rows(), v.cols()}},
                 {"values", std::vector<double>(v.data(), v.data() + v.size())}};
  }
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write checkpoint " + path.string());
  out << doc.dump(1) << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("checkpoint " + path.string() + ": " + e.what());
  }
  ParamStore expected = init_params(cfg, 0);
  if (doc.size() != expected.size()) {
    throw ShapeError("checkpoint has " + std::to_string(doc.size()) + " tensors, model expects " +
                     std::to_string(expected.size()));
  }
  ParamStore out;
  for (const auto& [name, slot] : expected) {
    if (!doc.contains(name)) throw ShapeError("checkpoint is missing parameter '" + name + "'");
    const auto& entry = doc.at(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = entry.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != slot.value.rows() || shape[1] != slot.value.cols() ||
        static_cast<Eigen::Index>(values.size()) != slot.value.size()) {
      throw ShapeError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    out.add(name, Eigen::Map<const Tensor>(values.data(), shape[0], shape[1]));
  }
  return out;
}

}  // namespace qpi
