#include "qpi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Tensor init) {
  Tensor grad = Tensor::Zero(init.rows(), init.cols());
  slots_.insert_or_assign(name, ParamSlot{std::move(init), std::move(grad)});
}

ParamSlot& ParamStore::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const ParamSlot& ParamStore::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, s] : slots_) s.grad.setZero();
}

Eigen::Index ParamStore::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& [name, s] : slots_) n += s.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item: expected 1x1, got " + shape_str(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  ParamSlot& s = store.slot(name);
  nodes_.push_back(Node{s.value, {}, {}, &s, true});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(adjoint) : Adjoint{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Var& loss, double seed) {
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_str(loss.value()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor::Constant(1, 1, seed);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.adjoint) {
      node.adjoint(*this, node.grad);
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

namespace ad {

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " times " + shape_str(b.value()));
  }
  Tensor out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add_row_bias(const Var& a, const Var& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_str(b.value()) + " for input " + shape_str(a.value()));
  }
  Tensor out = a.value().rowwise() + b.value().row(0);
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, g.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a.value() * c;
  return a.tape().record(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) { t.accumulate(a, g * c); });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value().array() + c;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var relu(const Var& a) {
  Tensor out = a.value().cwiseMax(0.0);
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var softplus(const Var& a) {
  Tensor out = a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor logistic = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    t.accumulate(a, g.cwiseProduct(logistic));
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Tensor slope = out.array() * (1.0 - out.array());
  return a.tape().record(std::move(out), {a}, [a, slope = std::move(slope)](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseProduct(slope));
  });
}

Var abs(const Var& a) {
  Tensor out = a.value().cwiseAbs();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const auto x = a.value().array();
    t.accumulate(a, (g.array() * ((x > 0.0).cast<double>() - (x < 0.0).cast<double>())).matrix());
  });
}

Var square(const Var& a) {
  Tensor out = a.value().array().square();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
  });
}

Var csr_mean_aggregate(const Graph& graph, const Var& h) {
  if (h.rows() != graph.num_nodes()) {
    throw ShapeError("csr_mean_aggregate: " + std::to_string(h.rows()) + " rows for " +
                     std::to_string(graph.num_nodes()) + " nodes");
  }
  Tensor out = neighbor_mean(graph, h.value());
  const Graph* g_ptr = &graph;
  return h.tape().record(std::move(out), {h}, [h, g_ptr](Tape& t, const Tensor& g) {
    Tensor back = Tensor::Zero(g.rows(), g.cols());
    for (NodeId v = 0; v < g_ptr->num_nodes(); ++v) {
      auto nbrs = g_ptr->neighbors(v);
      if (nbrs.empty()) continue;
      const double w = 1.0 / static_cast<double>(nbrs.size());
      for (NodeId u : nbrs) back.row(u) += w * g.row(v);
    }
    t.accumulate(h, back);
  });
}

Var dropout(const Var& a, double p, std::uint64_t seed, bool train_mode) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1)");
  if (!train_mode || p == 0.0) return a;
  const std::uint64_t tag = hash_tag("dropout");
  Tensor keep(a.rows(), a.cols());
  const double inv = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    keep.data()[i] = counter_uniform(seed, tag, static_cast<std::uint64_t>(i)) >= p ? inv : 0.0;
  }
  Tensor out = a.value().cwiseProduct(keep);
  return a.tape().record(std::move(out), {a}, [a, keep = std::move(keep)](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseProduct(keep));
  });
}

Var reduce_sum(const Var& a) {
  Tensor out = Tensor::Constant(1, 1, a.value().sum());
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var reduce_mean(const Var& a) {
  if (a.value().size() == 0) throw ContractError("reduce_mean: empty tensor");
  const double n = static_cast<double>(a.value().size());
  Tensor out = Tensor::Constant(1, 1, a.value().sum() / n);
  return a.tape().record(std::move(out), {a}, [a, n](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> rows) {
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Tensor out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw ShapeError("gather_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor back = Tensor::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) back.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, back);
  });
}

Var masked_select(const Var& a, const Mask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != a.rows()) {
    throw ShapeError("masked_select: mask length " + std::to_string(mask.size()) + " for " +
                     std::to_string(a.rows()) + " rows");
  }
  const auto idx = mask_indices(mask);
  return gather_rows(a, idx);
}

Var column(const Var& a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) throw ShapeError("column: index out of range");
  Tensor out = a.value().col(j);
  return a.tape().record(std::move(out), {a}, [a, j](Tape& t, const Tensor& g) {
    Tensor back = Tensor::Zero(a.rows(), a.cols());
    back.col(j) = g.col(0);
    t.accumulate(a, back);
  });
}

Var stop_gradient(const Var& a) { return a.tape().constant(a.value()); }

}  // namespace ad

// ---------------------------------------------------------------------------
// Finite-difference check

GradCheckReport finite_diff_check(const LossBuilder& f, ParamStore& params, double h) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, params);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape;
    return f(tape, params).item();
  };

  GradCheckReport report;
  for (auto& [name, slot] : params) {
    for (Eigen::Index i = 0; i < slot.value.size(); ++i) {
      double& theta = slot.value.data()[i];
      const double saved = theta;
      theta = saved + h;
      const double plus = eval();
      theta = saved - h;
      const double minus = eval();
      theta = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = slot.grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report = GradCheckReport{std::max(rel, report.max_rel_error), name, i, analytic, numeric};
      }
    }
  }
  return report;
}

}  // namespace qpi
