#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace qpi {

using NodeId = std::int64_t;

/// Undirected simple graph in compressed-sparse-row form. Every edge is
/// stored in both directions and each neighbor list is sorted ascending.
class Graph {
 public:
  Graph() : row_offsets_{0} {}

  /// Build from an arbitrary edge list. Edges are symmetrized; self-loops
  /// and duplicates are dropped.
  static Graph from_edges(NodeId num_nodes, std::span<const std::pair<NodeId, NodeId>> edges);

  /// Adopt raw CSR arrays; throws ContractError if they violate the invariants.
  static Graph from_csr(std::vector<NodeId> row_offsets, std::vector<NodeId> col_indices);

  NodeId num_nodes() const noexcept { return static_cast<NodeId>(row_offsets_.size()) - 1; }
  std::size_t num_directed_edges() const noexcept { return col_indices_.size(); }
  std::size_t num_edges() const noexcept { return col_indices_.size() / 2; }

  NodeId degree(NodeId v) const noexcept { return row_offsets_[v + 1] - row_offsets_[v]; }
  std::span<const NodeId> neighbors(NodeId v) const noexcept {
    return {col_indices_.data() + row_offsets_[v], static_cast<std::size_t>(degree(v))};
  }

  const std::vector<NodeId>& row_offsets() const noexcept { return row_offsets_; }
  const std::vector<NodeId>& col_indices() const noexcept { return col_indices_; }

  /// Undirected edges as (u, v) with u < v, in CSR order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const;

  NodeId max_degree() const noexcept;

  /// Checks symmetry, sortedness, no self-loops, no duplicates.
  bool is_valid() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<NodeId> row_offsets_;
  std::vector<NodeId> col_indices_;
};

Graph gen_er(NodeId n, double p, std::uint64_t seed);
Graph gen_ba(NodeId n, NodeId m, std::uint64_t seed);
Graph gen_grid(NodeId rows, NodeId cols);
Graph gen_chain(NodeId n);
Graph gen_tree(NodeId branching, NodeId depth);

}  // namespace qpi
