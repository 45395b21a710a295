#include "qpi/graph.hpp"

#include <algorithm>
#include <string>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

Graph Graph::from_edges(NodeId num_nodes, std::span<const std::pair<NodeId, NodeId>> edges) {
  if (num_nodes < 0) throw ParameterError("graph: negative node count");
  std::vector<std::vector<NodeId>> adjacency(static_cast<std::size_t>(num_nodes));
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw ContractError("graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                          ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    }
    if (u == v) continue;
    adjacency[u].push_back(v);
    adjacency[v].push_back(u);
  }
  Graph g;
  g.row_offsets_.assign(1, 0);
  g.row_offsets_.reserve(static_cast<std::size_t>(num_nodes) + 1);
  for (auto& nbrs : adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    g.col_indices_.insert(g.col_indices_.end(), nbrs.begin(), nbrs.end());
    g.row_offsets_.push_back(static_cast<NodeId>(g.col_indices_.size()));
  }
  return g;
}

Graph Graph::from_csr(std::vector<NodeId> row_offsets, std::vector<NodeId> col_indices) {
  Graph g;
  g.row_offsets_ = std::move(row_offsets);
  g.col_indices_ = std::move(col_indices);
  if (!g.is_valid()) throw ContractError("graph: CSR arrays violate graph invariants");
  return g;
}

std::vector<std::pair<NodeId, NodeId>> Graph::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

NodeId Graph::max_degree() const noexcept {
  NodeId best = 0;
  for (NodeId v = 0; v < num_nodes(); ++v) best = std::max(best, degree(v));
  return best;
}

bool Graph::is_valid() const {
  if (row_offsets_.empty() || row_offsets_.front() != 0) return false;
  if (row_offsets_.back() != static_cast<NodeId>(col_indices_.size())) return false;
  const NodeId n = num_nodes();
  for (NodeId v = 0; v < n; ++v) {
    if (row_offsets_[v + 1] < row_offsets_[v]) return false;
    auto nbrs = neighbors(v);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const NodeId u = nbrs[i];
      if (u < 0 || u >= n || u == v) return false;
      if (i > 0 && nbrs[i - 1] >= u) return false;
      auto back = neighbors(u);
      if (!std::binary_search(back.begin(), back.end(), v)) return false;
    }
  }
  return true;
}

Graph gen_er(NodeId n, double p, std::uint64_t seed) {
  if (n < 1) throw ParameterError("gen_er: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("gen_er: p must lie in [0, 1]");
  const std::uint64_t tag = hash_tag("graph.er");
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::uint64_t pair_index = 0;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j, ++pair_index) {
      if (counter_uniform(seed, tag, pair_index) < p) edges.emplace_back(i, j);
    }
  }
  return Graph::from_edges(n, edges);
}

Graph gen_ba(NodeId n, NodeId m, std::uint64_t seed) {
  if (m < 1) throw ParameterError("gen_ba: m must be >= 1");
  if (m >= n) throw ParameterError("gen_ba: m must be < n");
  std::vector<std::pair<NodeId, NodeId>> edges;
  // Every edge endpoint appears once here, so a uniform pick is degree-proportional.
  std::vector<NodeId> endpoints;
  for (NodeId i = 0; i <= m; ++i) {
    for (NodeId j = i + 1; j <= m; ++j) {
      edges.emplace_back(i, j);
      endpoints.push_back(i);
      endpoints.push_back(j);
    }
  }
  RngStream rng(seed, "graph.ba");
  std::vector<NodeId> targets;
  for (NodeId v = m + 1; v < n; ++v) {
    targets.clear();
    while (static_cast<NodeId>(targets.size()) < m) {
      const NodeId pick = endpoints[rng.below(endpoints.size())];
      if (std::find(targets.begin(), targets.end(), pick) == targets.end()) {
        targets.push_back(pick);
      }
    }
    for (NodeId t : targets) {
      edges.emplace_back(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return Graph::from_edges(n, edges);
}

Graph gen_grid(NodeId rows, NodeId cols) {
  if (rows < 1 || cols < 1) throw ParameterError("gen_grid: dimensions must be positive");
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId r = 0; r < rows; ++r) {
    for (NodeId c = 0; c < cols; ++c) {
      const NodeId v = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(v, v + 1);
      if (r + 1 < rows) edges.emplace_back(v, v + cols);
    }
  }
  return Graph::from_edges(rows * cols, edges);
}

Graph gen_chain(NodeId n) {
  if (n < 1) throw ParameterError("gen_chain: n must be positive");
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return Graph::from_edges(n, edges);
}

Graph gen_tree(NodeId branching, NodeId depth) {
  if (branching < 1 || depth < 1) throw ParameterError("gen_tree: dimensions must be positive");
  NodeId n = 0;
  NodeId level = 1;
  for (NodeId d = 0; d <= depth; ++d) {
    n += level;
    level *= branching;
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  // Heap layout: children of v are branching*v + 1 ... branching*v + branching.
  for (NodeId child = 1; child < n; ++child) edges.emplace_back((child - 1) / branching, child);
  return Graph::from_edges(n, edges);
}

}  // namespace qpi
