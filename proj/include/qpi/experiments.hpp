#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qpi/dataset.hpp"
#include "qpi/train.hpp"

namespace qpi {

/// Evaluates fn(i) for i in [0, n) on up to `jobs` worker threads. Results are
/// stored by index, so the output never depends on scheduling. The first
/// exception thrown by any task is rethrown after all workers finish.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, int jobs, F&& fn) {
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Seeds base, base + 1, ..., base + count - 1.
std::vector<std::uint64_t> seed_list(std::uint64_t base, int count);

// ---------------------------------------------------------------------------
// Result rows shared by every experiment table.

struct ResultRow {
  RunLabel label;
  MetricsReport metrics;
  std::string experiment;
  std::string kind;
  std::optional<double> level;
  std::string source_family;
  std::string target_family;
};

/// Metrics header followed by `experiment,kind,level,source_family,target_family`.
std::string results_csv_header();
/// Rows sorted by (experiment, kind, level, source, target, model, lambda, seed, run_id).
std::string results_csv(std::vector<ResultRow> rows);
nlohmann::ordered_json results_json(std::vector<ResultRow> rows);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for a single run
};

struct MetricsSummary {
  MetricSummary picp, mpiw, nmpiw, mpe, sharpness, winkler, cwc;
  std::size_t runs = 0;

  static MetricsSummary of(const std::vector<MetricsReport>& reports);
};

/// `group,runs,picp_mean,picp_std,...,cwc_mean,cwc_std`
std::string summary_csv_header();
std::string summary_csv_row(const std::string& group, const MetricsSummary& s);

// ---------------------------------------------------------------------------
// Width-penalty selection.

struct SweepEntry {
  double lambda = 0.0;
  MetricsReport val;
  MetricsReport test;
  double objective = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> entries;  ///< ascending lambda
  std::size_t chosen_index = 0;
  double chosen_lambda = 0.0;
  double chosen_objective = 0.0;
  /// Notes on empirical trends that did not hold, e.g. MPIW(0.1) < MPIW(0.5).
  std::vector<std::string> flags;

  const SweepEntry* find(double lambda) const;
  /// `lambda,objective,chosen,val_picp,val_mpiw,test_picp,...,test_cwc`
  std::string to_csv() const;
  std::vector<ResultRow> rows(const std::string& dataset, const TrainConfig& cfg) const;
};

inline constexpr double kSelectionPenalty = 10.0;

/// J = val_MPIW + 10 * max(0, (1 - alpha) - val_PICP).
double selection_objective(const MetricsReport& val, double alpha);

/// Sorts entries by lambda, picks the smallest objective (first on ties) and
/// records trend flags. Throws ParameterError on an empty list.
SweepResult select_lambda(std::vector<SweepEntry> entries);

/// {0.05, 0.1, 0.3, 0.5, 0.8, 1.2}
std::vector<double> default_lambda_grid();

/// One model per lambda (seed cfg.seed). Requires non-empty val and test masks.
SweepResult lambda_sweep(const Dataset& ds, const TrainConfig& cfg, const std::vector<double>& grid, int jobs = 1);

struct TuneBounds {
  double lo = 1e-3;
  double hi = 1.0;
};

/// Log-scale search: a coarse grid of min(5, budget) points spanning the
/// bounds, then trisection rounds around the incumbent while budget remains
/// (two evaluations per round; the default budget 9 gives two rounds). The
/// anchors 0.1 and 0.5 are also evaluated when inside the bounds, so the
/// selection never loses to either of them.
SweepResult lambda_tune(const Dataset& ds, const TrainConfig& cfg, TuneBounds bounds = {}, int budget = 9,
                        int jobs = 1);

// ---------------------------------------------------------------------------
// Ablation.

struct VariantResult {
  std::string label;
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> runs;  ///< test-mask metrics, one per seed
  MetricsSummary summary;
  /// Largest per-run spread (max - min) of test widths; 0 for a constant-width head.
  double width_spread = 0.0;
};

struct AblationTable {
  std::vector<VariantResult> rows;

  const VariantResult& row(const std::string& label) const;
  std::vector<ResultRow> result_rows(const std::string& dataset) const;
  std::string summary_csv() const;
};

/// Variants (label: head + loss): full, coverage_only, width_only, mse_only
/// (dual head), fixed_margin and single_head (full loss). All use base's lambda.
std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base);

AblationTable ablation_suite(const Dataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                             int jobs = 1);

// ---------------------------------------------------------------------------
// Robustness to perturbations.

using PerturbLevels = std::map<PerturbKind, std::vector<double>>;

/// {0.1, 0.2, 0.3} for each perturbation kind.
PerturbLevels default_perturb_levels();

struct RobustnessRow {
  PerturbKind kind = PerturbKind::FeatureNoise;
  double level = 0.0;
  std::vector<MetricsReport> runs;
  MetricsSummary summary;
  double coverage_retention = 0.0;  ///< mean PICP / clean mean PICP
  double width_growth = 0.0;        ///< mean MPIW / clean mean MPIW
};

struct RobustnessTable {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> clean_runs;
  MetricsSummary clean;
  std::vector<RobustnessRow> rows;  ///< grouped by kind, ascending level

  const RobustnessRow& row(PerturbKind kind, double level) const;
  std::vector<ResultRow> result_rows(const std::string& dataset, const TrainConfig& cfg) const;
  std::string summary_csv() const;
};

/// For each (kind, level): perturb with the run seed, retrain, report on the
/// test mask. A level of 0 reproduces the clean run exactly.
RobustnessTable robustness_suite(const Dataset& ds, const TrainConfig& cfg, const PerturbLevels& levels,
                                 const std::vector<std::uint64_t>& seeds, int jobs = 1);

// ---------------------------------------------------------------------------
// Structural shift and split protocols.

struct ShiftFamily {
  std::string name;
  Dataset data;
};

/// Datasets over {er, ba, grid, tree} with the same feature family, feature
/// seed and target weights, so only the graph differs.
std::vector<ShiftFamily> default_shift_families(Eigen::Index nodes, FeatureFamily features, Eigen::Index feat_dim,
                                                double noise_sd, std::uint64_t seed);

struct ShiftCell {
  MetricSummary picp;
  MetricSummary mpiw;
  std::vector<MetricsReport> runs;
};

struct ShiftMatrix {
  std::vector<std::string> families;
  std::vector<std::vector<ShiftCell>> cells;  ///< cells[train][eval]

  const ShiftCell& at(std::size_t train, std::size_t eval) const { return cells.at(train).at(eval); }
  /// Mean PICP over the off-diagonal cells of a row.
  double off_diagonal_picp(std::size_t train) const;
  std::vector<ResultRow> result_rows(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) const;
  /// `source_family,target_family,picp_mean,picp_std,mpiw_mean,mpiw_std`
  std::string to_csv() const;
};

/// Trains on every family once per seed and evaluates on every family: the
/// diagonal on the source's test mask, off-diagonal cells on all target nodes.
ShiftMatrix shift_matrix(const std::vector<ShiftFamily>& families, const TrainConfig& cfg,
                         const std::vector<std::uint64_t>& seeds, int jobs = 1);

struct SplitRow {
  SplitKind kind = SplitKind::Random;
  std::vector<MetricsReport> runs;
  MetricsSummary summary;
};

/// Replaces the dataset masks by split(kind, ratios, seed) for each run.
std::vector<SplitRow> split_experiment(const Dataset& ds, const TrainConfig& cfg, const std::vector<SplitKind>& kinds,
                                       const std::vector<std::uint64_t>& seeds, int jobs = 1);

std::vector<ResultRow> split_result_rows(const std::vector<SplitRow>& rows, const std::string& dataset,
                                         const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace qpi
