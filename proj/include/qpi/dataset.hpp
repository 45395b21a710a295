#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qpi/graph.hpp"

namespace qpi {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Mask = std::vector<bool>;

struct Masks {
  Mask train;
  Mask val;
  Mask test;

  friend bool operator==(const Masks&, const Masks&) = default;
};

/// Graph plus node features, scalar targets and train/val/test masks.
struct Dataset {
  Graph graph;
  Matrix features;
  Vector targets;
  Masks masks;

  NodeId num_nodes() const noexcept { return graph.num_nodes(); }
  Eigen::Index feature_dim() const noexcept { return features.cols(); }

  /// Throws ContractError on inconsistent sizes or overlapping masks.
  void validate() const;
};

enum class FeatureFamily { Basic, Gaussian, Uniform, EdgeWeighted };
enum class SplitKind { Random, Degree, Community };
enum class PerturbKind { FeatureNoise, TargetNoise, EdgeDropout };

struct SplitSpec {
  SplitKind kind = SplitKind::Random;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;

  void validate() const;
};

struct PerturbSpec {
  PerturbKind kind = PerturbKind::TargetNoise;
  double level = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Node features drawn per family; targets
/// y_v = w.x_v + 0.5 * s_v * w.mean_{u in N(v)} x_u + eps_v with eps_v ~ N(0, noise_sigma^2),
/// where s_v = 1 except for EdgeWeighted (degree(v) / max degree). The weight
/// vector w depends only on (seed, feat_dim), so datasets built on different
/// graphs with the same seed share one target function. Masks default to a
/// random (0.6, 0.2, 0.2) split.
Dataset synth_dataset(const Graph& graph, FeatureFamily family, Eigen::Index feat_dim,
                      double noise_sigma, std::uint64_t seed);

/// The target weight vector used by synth_dataset.
Vector synth_weights(Eigen::Index feat_dim, std::uint64_t seed);

/// Mean of neighbor feature rows; zero row for isolated nodes.
Matrix neighbor_mean(const Graph& graph, const Matrix& features);

Dataset perturb(const Dataset& ds, const PerturbSpec& spec);

Masks split(const Graph& graph, const SplitSpec& spec);

/// Synchronous label propagation (self included, lowest-label tie-break).
std::vector<NodeId> label_propagation(const Graph& graph, int rounds = 20);

struct CsvOptions {
  bool header = false;
};

Dataset load_csv(const std::filesystem::path& edges, const std::filesystem::path& features,
                 const std::filesystem::path& targets, const CsvOptions& opts = {});

/// Writes edges (u < v, one per line), features and targets in the layout load_csv reads.
void export_csv(const Dataset& ds, const std::filesystem::path& edges,
                const std::filesystem::path& features, const std::filesystem::path& targets,
                const CsvOptions& opts = {});

std::vector<Eigen::Index> mask_indices(const Mask& mask);
std::size_t mask_count(const Mask& mask);

FeatureFamily parse_feature_family(const std::string& name);
SplitKind parse_split_kind(const std::string& name);
PerturbKind parse_perturb_kind(const std::string& name);
std::string to_string(FeatureFamily f);
std::string to_string(SplitKind k);
std::string to_string(PerturbKind k);

}  // namespace qpi
