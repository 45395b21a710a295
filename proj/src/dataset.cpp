#include "qpi/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string_view>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace {

std::size_t node_count(const Mask& m) { return m.size(); }

Masks default_masks(const Graph& graph, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(graph.num_nodes());
  // Too small for a three-way split: everything trains.
  if (n < 10) return Masks{Mask(n, true), Mask(n, false), Mask(n, false)};
  return split(graph, SplitSpec{SplitKind::Random, {0.6, 0.2, 0.2}, seed});
}

struct SplitCounts {
  std::size_t train, val, test;
};

SplitCounts split_counts(std::size_t n, const std::array<double, 3>& ratios) {
  const auto train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const auto val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  if (train == 0 || val == 0 || train + val >= n) {
    throw ParameterError("split: ratios leave an empty mask for " + std::to_string(n) + " nodes");
  }
  return {train, val, n - train - val};
}

Masks masks_from_order(const std::vector<NodeId>& order, SplitCounts counts) {
  const std::size_t n = order.size();
  Masks m{Mask(n, false), Mask(n, false), Mask(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::size_t>(order[i]);
    if (i < counts.train) {
      m.train[v] = true;
    } else if (i < counts.train + counts.val) {
      m.val[v] = true;
    } else {
      m.test[v] = true;
    }
  }
  return m;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view field, const std::filesystem::path& path, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                         std::string(field) + "'");
  }
  return value;
}

/// Non-empty lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_lines(const std::filesystem::path& path,
                                                            bool header) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    lines.emplace_back(line_no, line);
  }
  return lines;
}

}  // namespace

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(num_nodes());
  if (static_cast<std::size_t>(features.rows()) != n || static_cast<std::size_t>(targets.size()) != n) {
    throw ContractError("dataset: feature rows, target length and node count differ");
  }
  if (node_count(masks.train) != n || node_count(masks.val) != n || node_count(masks.test) != n) {
    throw ContractError("dataset: mask length differs from node count");
  }
  for (std::size_t v = 0; v < n; ++v) {
    const int hits = int(masks.train[v]) + int(masks.val[v]) + int(masks.test[v]);
    if (hits != 1) throw ContractError("dataset: masks must be disjoint and cover every node");
  }
}

void SplitSpec::validate() const {
  for (double r : ratios) {
    if (!(r > 0.0 && r < 1.0)) throw ParameterError("split: each ratio must lie in (0, 1)");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ParameterError("split: ratios must sum to 1");
  }
}

void PerturbSpec::validate() const {
  if (!(level >= 0.0) || !std::isfinite(level)) throw ParameterError("perturb: level must be >= 0");
  if (kind == PerturbKind::EdgeDropout && level > 1.0) {
    throw ParameterError("perturb: edge dropout level must lie in [0, 1]");
  }
}

Vector synth_weights(Eigen::Index feat_dim, std::uint64_t seed) {
  RngStream rng(seed, "synth.weights");
  Vector w(feat_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feat_dim));
  for (Eigen::Index j = 0; j < feat_dim; ++j) w[j] = rng.normal() * scale;
  return w;
}

Matrix neighbor_mean(const Graph& graph, const Matrix& features) {
  Matrix out = Matrix::Zero(features.rows(), features.cols());
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    auto nbrs = graph.neighbors(v);
    if (nbrs.empty()) continue;
    for (NodeId u : nbrs) out.row(v) += features.row(u);
    out.row(v) /= static_cast<double>(nbrs.size());
  }
  return out;
}

Dataset synth_dataset(const Graph& graph, FeatureFamily family, Eigen::Index feat_dim,
                      double noise_sigma, std::uint64_t seed) {
  if (feat_dim < 1) throw ParameterError("synth_dataset: feat_dim must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ParameterError("synth_dataset: noise_sigma must be >= 0");
  const Eigen::Index n = graph.num_nodes();

  Dataset ds;
  ds.graph = graph;
  ds.features.resize(n, feat_dim);
  RngStream feat_rng(seed, "synth.features");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < feat_dim; ++j) {
      ds.features(i, j) = family == FeatureFamily::Uniform ? feat_rng.uniform(-1.0, 1.0) : feat_rng.normal();
    }
  }
  if (family == FeatureFamily::Basic && n > 1) {
    for (Eigen::Index j = 0; j < feat_dim; ++j) {
      auto col = ds.features.col(j);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      col.array() -= mean;
      if (sd > 0.0) col /= sd;
    }
  }

  const Vector w = synth_weights(feat_dim, seed);
  const Vector self_term = ds.features * w;
  Vector neigh_term = neighbor_mean(graph, ds.features) * w;
  if (family == FeatureFamily::EdgeWeighted) {
    const double max_deg = static_cast<double>(std::max<NodeId>(graph.max_degree(), 1));
    for (Eigen::Index v = 0; v < n; ++v) neigh_term[v] *= static_cast<double>(graph.degree(v)) / max_deg;
  }
  ds.targets = self_term + 0.5 * neigh_term;
  if (noise_sigma > 0.0) {
    RngStream noise_rng(seed, "synth.noise");
    for (Eigen::Index v = 0; v < n; ++v) ds.targets[v] += noise_sigma * noise_rng.normal();
  }
  ds.masks = default_masks(graph, seed);
  return ds;
}

Dataset perturb(const Dataset& ds, const PerturbSpec& spec) {
  spec.validate();
  Dataset out = ds;
  if (spec.level == 0.0) return out;
  switch (spec.kind) {
    case PerturbKind::FeatureNoise: {
      RngStream rng(spec.seed, "perturb.features");
      for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.features.cols(); ++j) out.features(i, j) += spec.level * rng.normal();
      }
      break;
    }
    case PerturbKind::TargetNoise: {
      RngStream rng(spec.seed, "perturb.targets");
      for (Eigen::Index v = 0; v < out.targets.size(); ++v) out.targets[v] += spec.level * rng.normal();
      break;
    }
    case PerturbKind::EdgeDropout: {
      const std::uint64_t tag = hash_tag("perturb.edges");
      const auto edges = ds.graph.edge_list();
      std::vector<std::pair<NodeId, NodeId>> kept;
      for (std::size_t k = 0; k < edges.size(); ++k) {
        if (counter_uniform(spec.seed, tag, k) >= spec.level) kept.push_back(edges[k]);
      }
      out.graph = Graph::from_edges(ds.graph.num_nodes(), kept);
      break;
    }
  }
  return out;
}

std::vector<NodeId> label_propagation(const Graph& graph, int rounds) {
  const NodeId n = graph.num_nodes();
  std::vector<NodeId> labels(static_cast<std::size_t>(n));
  std::iota(labels.begin(), labels.end(), NodeId{0});
  std::vector<NodeId> next(labels.size());
  std::vector<NodeId> seen;
  for (int r = 0; r < rounds; ++r) {
    for (NodeId v = 0; v < n; ++v) {
      seen.assign(1, labels[v]);
      for (NodeId u : graph.neighbors(v)) seen.push_back(labels[u]);
      std::sort(seen.begin(), seen.end());
      NodeId best = seen.front();
      std::size_t best_count = 0;
      for (std::size_t i = 0; i < seen.size();) {
        std::size_t j = i;
        while (j < seen.size() && seen[j] == seen[i]) ++j;
        if (j - i > best_count) {  // strict: ties keep the lower label
          best_count = j - i;
          best = seen[i];
        }
        i = j;
      }
      next[v] = best;
    }
    if (next == labels) break;
    labels.swap(next);
  }
  return labels;
}

Masks split(const Graph& graph, const SplitSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(graph.num_nodes());
  switch (spec.kind) {
    case SplitKind::Random: {
      const auto counts = split_counts(n, spec.ratios);
      std::vector<NodeId> order(n);
      std::iota(order.begin(), order.end(), NodeId{0});
      RngStream rng(spec.seed, "split.random");
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      return masks_from_order(order, counts);
    }
    case SplitKind::Degree: {
      const auto counts = split_counts(n, spec.ratios);
      std::vector<NodeId> order(n);
      std::iota(order.begin(), order.end(), NodeId{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](NodeId a, NodeId b) { return graph.degree(a) < graph.degree(b); });
      return masks_from_order(order, counts);
    }
    case SplitKind::Community: {
      const auto target_train = split_counts(n, spec.ratios).train;
      const auto labels = label_propagation(graph);
      std::map<NodeId, std::vector<NodeId>> by_label;
      for (std::size_t v = 0; v < n; ++v) by_label[labels[v]].push_back(static_cast<NodeId>(v));
      std::vector<std::pair<NodeId, std::vector<NodeId>>> communities(by_label.begin(), by_label.end());
      std::stable_sort(communities.begin(), communities.end(),
                       [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });

      Masks m{Mask(n, false), Mask(n, false), Mask(n, false)};
      std::size_t train = 0;
      std::vector<NodeId> rest;
      for (const auto& [label, members] : communities) {
        if (train < target_train) {
          for (NodeId v : members) m.train[v] = true;
          train += members.size();
        } else {
          rest.insert(rest.end(), members.begin(), members.end());
        }
      }
      const double val_share = spec.ratios[1] / (spec.ratios[1] + spec.ratios[2]);
      const auto n_val = static_cast<std::size_t>(std::llround(val_share * static_cast<double>(rest.size())));
      if (n_val == 0 || n_val >= rest.size()) {
        throw ParameterError("split: community split leaves an empty validation or test mask");
      }
      for (std::size_t i = 0; i < rest.size(); ++i) (i < n_val ? m.val : m.test)[rest[i]] = true;
      return m;
    }
  }
  throw ParameterError("split: unknown kind");
}

Dataset load_csv(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                 const std::filesystem::path& targets_path, const CsvOptions& opts) {
  const auto target_lines = read_lines(targets_path, opts.header);
  const auto n = static_cast<Eigen::Index>(target_lines.size());
  if (n == 0) throw IngestionError(targets_path.string() + ": no target rows");

  Vector targets(n);
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto& [line_no, line] = target_lines[v];
    const auto fields = split_fields(line);
    if (fields.size() != 1) {
      throw IngestionError(targets_path.string() + ":" + std::to_string(line_no) + ": expected one value");
    }
    targets[v] = parse_field<double>(fields[0], targets_path, line_no);
  }

  const auto feature_lines = read_lines(features_path, opts.header);
  if (static_cast<Eigen::Index>(feature_lines.size()) != n) {
    throw IngestionError(features_path.string() + ": " + std::to_string(feature_lines.size()) +
                         " feature rows for " + std::to_string(n) + " targets");
  }
  Matrix features;
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto& [line_no, line] = feature_lines[v];
    const auto fields = split_fields(line);
    if (v == 0) features.resize(n, static_cast<Eigen::Index>(fields.size()));
    if (static_cast<Eigen::Index>(fields.size()) != features.cols()) {
      throw IngestionError(features_path.string() + ":" + std::to_string(line_no) + ": ragged row with " +
                           std::to_string(fields.size()) + " columns, expected " +
                           std::to_string(features.cols()));
    }
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      features(v, j) = parse_field<double>(fields[j], features_path, line_no);
    }
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (const auto& [line_no, line] : read_lines(edges_path, opts.header)) {
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw IngestionError(edges_path.string() + ":" + std::to_string(line_no) + ": expected two columns");
    }
    const auto u = parse_field<NodeId>(fields[0], edges_path, line_no);
    const auto v = parse_field<NodeId>(fields[1], edges_path, line_no);
    for (NodeId idx : {u, v}) {
      if (idx < 0 || idx >= n) {
        throw IngestionError(edges_path.string() + ":" + std::to_string(line_no) + ": node index " +
                             std::to_string(idx) + " out of range [0, " + std::to_string(n) + ")");
      }
    }
    edges.emplace_back(u, v);
  }

  Dataset ds;
  ds.graph = Graph::from_edges(n, edges);
  ds.features = std::move(features);
  ds.targets = std::move(targets);
  ds.masks = default_masks(ds.graph, 0);
  return ds;
}

void export_csv(const Dataset& ds, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path, const std::filesystem::path& targets_path,
                const CsvOptions& opts) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw IngestionError("cannot write " + p.string());
    out << std::setprecision(17);
    return out;
  };
  auto edges = open(edges_path);
  if (opts.header) edges << "src,dst\n";
  for (const auto& [u, v] : ds.graph.edge_list()) edges << u << ',' << v << '\n';

  auto feats = open(features_path);
  if (opts.header) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) feats << (j ? "," : "") << "x" << j;
    feats << '\n';
  }
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) feats << (j ? "," : "") << ds.features(i, j);
    feats << '\n';
  }

  auto targets = open(targets_path);
  if (opts.header) targets << "y\n";
  for (Eigen::Index v = 0; v < ds.targets.size(); ++v) targets << ds.targets[v] << '\n';
}

std::vector<Eigen::Index> mask_indices(const Mask& mask) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) idx.push_back(static_cast<Eigen::Index>(i));
  }
  return idx;
}

std::size_t mask_count(const Mask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

FeatureFamily parse_feature_family(const std::string& name) {
  if (name == "basic") return FeatureFamily::Basic;
  if (name == "gaussian") return FeatureFamily::Gaussian;
  if (name == "uniform") return FeatureFamily::Uniform;
  if (name == "edge" || name == "edge_weighted") return FeatureFamily::EdgeWeighted;
  throw ParameterError("unknown feature family '" + name + "'");
}

SplitKind parse_split_kind(const std::string& name) {
  if (name == "random") return SplitKind::Random;
  if (name == "degree") return SplitKind::Degree;
  if (name == "community") return SplitKind::Community;
  throw ParameterError("unknown split kind '" + name + "'");
}

PerturbKind parse_perturb_kind(const std::string& name) {
  if (name == "feature_noise") return PerturbKind::FeatureNoise;
  if (name == "target_noise") return PerturbKind::TargetNoise;
  if (name == "edge_dropout") return PerturbKind::EdgeDropout;
  throw ParameterError("unknown perturbation kind '" + name + "'");
}

std::string to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::Basic: return "basic";
    case FeatureFamily::Gaussian: return "gaussian";
    case FeatureFamily::Uniform: return "uniform";
    case FeatureFamily::EdgeWeighted: return "edge";
  }
  return "?";
}

std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::Random: return "random";
    case SplitKind::Degree: return "degree";
    case SplitKind::Community: return "community";
  }
  return "?";
}

std::string to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::FeatureNoise: return "feature_noise";
    case PerturbKind::TargetNoise: return "target_noise";
    case PerturbKind::EdgeDropout: return "edge_dropout";
  }
  return "?";
}

}  // namespace qpi
