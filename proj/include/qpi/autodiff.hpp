#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qpi/dataset.hpp"
#include "qpi/graph.hpp"

namespace qpi {

/// Dense row-major tensor of doubles. Scalars are 1x1.
using Tensor = Matrix;

struct ParamSlot {
  Tensor value;
  Tensor grad;
};

/// Named learnable tensors, each with a gradient slot of the same shape.
/// Iteration order is by name, which keeps every reduction over parameters
/// deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return slots_.contains(name); }

  ParamSlot& slot(const std::string& name);
  const ParamSlot& slot(const std::string& name) const;
  Tensor& value(const std::string& name) { return slot(name).value; }
  const Tensor& value(const std::string& name) const { return slot(name).value; }
  const Tensor& grad(const std::string& name) const { return slot(name).grad; }

  void zero_grad();
  std::size_t size() const noexcept { return slots_.size(); }
  Eigen::Index num_scalars() const;

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

 private:
  std::map<std::string, ParamSlot> slots_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while its
/// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of primitive applications. Nodes are appended in
/// evaluation order, so the node vector is already topologically sorted and
/// backward() walks it in reverse.
class Tape {
 public:
  /// Receives the adjoint of the node's output and routes it to the inputs.
  using Adjoint = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a ParamStore slot; backward() adds into slot.grad.
  Var param(ParamStore& store, const std::string& name);
  /// Record an op output. `adjoint` is dropped when no input needs gradients.
  Var record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint);

  /// Adjoint accumulation used by op backward rules.
  void accumulate(const Var& v, const Tensor& g);

  /// Seeds d(loss)/d(loss) = seed and propagates to every parameter leaf.
  /// Throws ContractError unless loss is 1x1.
  void backward(const Var& loss, double seed = 1.0);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Adjoint adjoint;
    ParamSlot* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(const Var& a, const Var& b);
/// a (n x c) + b (1 x c) broadcast over rows.
Var add_row_bias(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
/// Adjoint uses subgradient 0 at exactly 0.
Var relu(const Var& a);
/// max(x,0) + log1p(exp(-|x|)); adjoint is the logistic function.
Var softplus(const Var& a);
Var sigmoid(const Var& a);
/// Adjoint sign(x), 0 at 0.
Var abs(const Var& a);
Var square(const Var& a);
/// Row v becomes the mean of the rows of v's neighbors (zero when isolated).
/// The graph must outlive the tape.
Var csr_mean_aggregate(const Graph& graph, const Var& h);
/// Inverted dropout; identity when !train_mode or p == 0. Throws ParameterError unless 0 <= p < 1.
Var dropout(const Var& a, double p, std::uint64_t seed, bool train_mode);
Var reduce_mean(const Var& a);
Var reduce_sum(const Var& a);
/// Rows of `a` at `rows`, in order.
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
Var masked_select(const Var& a, const Mask& mask);
Var column(const Var& a, Eigen::Index j);
/// Same value, zero adjoint.
Var stop_gradient(const Var& a);

}  // namespace ad

/// Builds a scalar loss from the current parameter values.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients with central differences of step h on every
/// scalar parameter. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport finite_diff_check(const LossBuilder& f, ParamStore& params, double h = 1e-5);

}  // namespace qpi
