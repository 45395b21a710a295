#include "qpi/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

std::vector<std::uint64_t> seed_list(std::uint64_t base, int count) {
  if (count < 1) throw ParameterError("seed_list: count must be >= 1");
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(base + static_cast<std::uint64_t>(i));
  return out;
}

// ---------------------------------------------------------------------------

std::string results_csv_header() {
  return metrics_csv_header() + ",experiment,kind,level,source_family,target_family";
}

namespace {

void sort_rows(std::vector<ResultRow>& rows) {
  auto key = [](const ResultRow& r) {
    return std::make_tuple(std::cref(r.experiment), std::cref(r.kind), r.level.value_or(-1.0),
                           std::cref(r.source_family), std::cref(r.target_family), std::cref(r.label.model),
                           r.label.lambda, r.label.seed, std::cref(r.label.run_id));
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const ResultRow& a, const ResultRow& b) { return key(a) < key(b); });
}

nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["picp"] = m.picp;
  j["mpiw"] = m.mpiw;
  j["nmpiw"] = m.nmpiw;
  j["mpe"] = m.mpe;
  j["sharpness"] = m.sharpness;
  j["winkler"] = m.winkler;
  j["cwc"] = m.cwc;
  return j;
}

MetricsReport require_metrics(const std::optional<MetricsReport>& m, const char* what) {
  if (!m) throw ContractError(std::string("experiment needs a non-empty, non-constant ") + what + " mask");
  return *m;
}

std::vector<double> collect(const std::vector<MetricsReport>& rs, double MetricsReport::*field) {
  std::vector<double> out;
  for (const auto& r : rs) out.push_back(r.*field);
  return out;
}

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string run_id(const std::string& experiment, const std::string& detail, std::uint64_t seed) {
  return experiment + "/" + detail + "/seed=" + std::to_string(seed);
}

}  // namespace

std::string results_csv(std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::ostringstream os;
  os << results_csv_header() << '\n';
  for (const auto& r : rows) {
    os << metrics_csv_row(r.label, r.metrics) << ',' << r.experiment << ',' << r.kind << ','
       << (r.level ? format_double(*r.level) : "") << ',' << r.source_family << ',' << r.target_family << '\n';
  }
  return os.str();
}

nlohmann::ordered_json results_json(std::vector<ResultRow> rows) {
  sort_rows(rows);
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["run_id"] = r.label.run_id;
    j["dataset"] = r.label.dataset;
    j["model"] = r.label.model;
    j["lambda"] = r.label.lambda;
    j["seed"] = r.label.seed;
    const auto metrics = metrics_json(r.metrics);
    for (const auto& [k, v] : metrics.items()) j[k] = v;
    j["experiment"] = r.experiment;
    j["kind"] = r.kind;
    j["level"] = r.level ? nlohmann::ordered_json(*r.level) : nlohmann::ordered_json(nullptr);
    j["source_family"] = r.source_family;
    j["target_family"] = r.target_family;
    out.push_back(std::move(j));
  }
  return out;
}

MetricsSummary MetricsSummary::of(const std::vector<MetricsReport>& reports) {
  MetricsSummary s;
  s.runs = reports.size();
  s.picp = summarize(collect(reports, &MetricsReport::picp));
  s.mpiw = summarize(collect(reports, &MetricsReport::mpiw));
  s.nmpiw = summarize(collect(reports, &MetricsReport::nmpiw));
  s.mpe = summarize(collect(reports, &MetricsReport::mpe));
  s.sharpness = summarize(collect(reports, &MetricsReport::sharpness));
  s.winkler = summarize(collect(reports, &MetricsReport::winkler));
  s.cwc = summarize(collect(reports, &MetricsReport::cwc));
  return s;
}

std::string summary_csv_header() {
  std::string h = "group,runs";
  for (const char* m : {"picp", "mpiw", "nmpiw", "mpe", "sharpness", "winkler", "cwc"}) {
    h += std::string(",") + m + "_mean," + m + "_std";
  }
  return h;
}

std::string summary_csv_row(const std::string& group, const MetricsSummary& s) {
  std::ostringstream os;
  os << group << ',' << s.runs;
  for (const auto* m : {&s.picp, &s.mpiw, &s.nmpiw, &s.mpe, &s.sharpness, &s.winkler, &s.cwc}) {
    os << ',' << format_double(m->mean) << ',' << format_double(m->std);
  }
  return os.str();
}

// ---------------------------------------------------------------------------

double selection_objective(const MetricsReport& val, double alpha) {
  return val.mpiw + kSelectionPenalty * std::max(0.0, (1.0 - alpha) - val.picp);
}

const SweepEntry* SweepResult::find(double lambda) const {
  for (const auto& e : entries) {
    if (e.lambda == lambda) return &e;
  }
  return nullptr;
}

SweepResult select_lambda(std::vector<SweepEntry> entries) {
  if (entries.empty()) throw ParameterError("lambda selection: empty grid");
  std::stable_sort(entries.begin(), entries.end(),
                   [](const SweepEntry& a, const SweepEntry& b) { return a.lambda < b.lambda; });
  SweepResult r;
  r.entries = std::move(entries);
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    if (r.entries[i].objective < r.entries[r.chosen_index].objective) r.chosen_index = i;
  }
  r.chosen_lambda = r.entries[r.chosen_index].lambda;
  r.chosen_objective = r.entries[r.chosen_index].objective;
  const auto* conservative = r.find(0.1);
  const auto* standard = r.find(0.5);
  if (conservative && standard && conservative->test.mpiw < standard->test.mpiw) {
    r.flags.push_back("test MPIW at lambda 0.1 (" + format_double(conservative->test.mpiw) +
                      ") is below MPIW at lambda 0.5 (" + format_double(standard->test.mpiw) + ")");
  }
  return r;
}

std::vector<double> default_lambda_grid() { return {0.05, 0.1, 0.3, 0.5, 0.8, 1.2}; }

namespace {

std::vector<SweepEntry> evaluate_lambdas(const Dataset& ds, const TrainConfig& cfg, const std::vector<double>& lambdas,
                                         int jobs) {
  return parallel_map<SweepEntry>(lambdas.size(), jobs, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.lambda_width = lambdas[i];
    const auto rec = train(ds, c).record;
    SweepEntry e;
    e.lambda = lambdas[i];
    e.val = require_metrics(rec.val_metrics, "validation");
    e.test = require_metrics(rec.test_metrics, "test");
    e.objective = selection_objective(e.val, cfg.alpha);
    return e;
  });
}

}  // namespace

SweepResult lambda_sweep(const Dataset& ds, const TrainConfig& cfg, const std::vector<double>& grid, int jobs) {
  if (grid.empty()) throw ParameterError("lambda_sweep: empty grid");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ParameterError("lambda_sweep: lambda values must be finite and >= 0");
  }
  return select_lambda(evaluate_lambdas(ds, cfg, grid, jobs));
}

SweepResult lambda_tune(const Dataset& ds, const TrainConfig& cfg, TuneBounds bounds, int budget, int jobs) {
  if (!(bounds.lo > 0.0 && bounds.lo < bounds.hi) || !std::isfinite(bounds.hi)) {
    throw ParameterError("lambda_tune: bounds must satisfy 0 < lo < hi");
  }
  if (budget < 3) throw ParameterError("lambda_tune: budget must be >= 3");

  const double log_lo = std::log(bounds.lo);
  const double log_hi = std::log(bounds.hi);
  std::vector<SweepEntry> all;
  std::vector<double> seen;
  // Points from different rounds can coincide up to rounding (e.g. a trisection point and an anchor).
  auto is_new = [&](double l) {
    return std::none_of(seen.begin(), seen.end(), [l](double s) { return std::abs(s - l) <= 1e-9 * s; });
  };
  auto run = [&](std::vector<double> lambdas) {
    std::vector<double> fresh;
    for (double l : lambdas) {
      if (is_new(l)) {
        seen.push_back(l);
        fresh.push_back(l);
      }
    }
    auto done = evaluate_lambdas(ds, cfg, fresh, jobs);
    all.insert(all.end(), done.begin(), done.end());
  };

  const int coarse = std::min(5, budget);
  std::vector<double> first;
  for (int i = 0; i < coarse; ++i) {
    first.push_back(std::exp(log_lo + (log_hi - log_lo) * i / (coarse - 1)));
  }
  for (double anchor : {0.1, 0.5}) {
    if (anchor >= bounds.lo && anchor <= bounds.hi) first.push_back(anchor);
  }
  run(first);

  for (int spent = coarse; spent + 2 <= budget; spent += 2) {
    const auto current = select_lambda(all);
    const auto& e = current.entries;
    const std::size_t b = current.chosen_index;
    const double left = b > 0 ? std::log(e[b - 1].lambda) : log_lo;
    const double right = b + 1 < e.size() ? std::log(e[b + 1].lambda) : log_hi;
    run({std::exp(left + (right - left) / 3.0), std::exp(left + 2.0 * (right - left) / 3.0)});
  }
  return select_lambda(std::move(all));
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os << "lambda,objective,chosen,val_picp,val_mpiw,test_picp,test_mpiw,test_nmpiw,test_mpe,test_sharpness,"
        "test_winkler,test_cwc\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    os << format_double(e.lambda) << ',' << format_double(e.objective) << ',' << (i == chosen_index ? 1 : 0) << ','
       << format_double(e.val.picp) << ',' << format_double(e.val.mpiw) << ',' << format_double(e.test.picp) << ','
       << format_double(e.test.mpiw) << ',' << format_double(e.test.nmpiw) << ',' << format_double(e.test.mpe)
       << ',' << format_double(e.test.sharpness) << ',' << format_double(e.test.winkler) << ','
       << format_double(e.test.cwc) << '\n';
  }
  return os.str();
}

std::vector<ResultRow> SweepResult::rows(const std::string& dataset, const TrainConfig& cfg) const {
  std::vector<ResultRow> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    ResultRow r;
    r.label = {run_id("sweep", "lambda=" + format_double(e.lambda), cfg.seed), dataset, cfg.model_label(), e.lambda,
               cfg.seed};
    r.metrics = e.test;
    r.experiment = "sweep";
    r.kind = i == chosen_index ? "chosen" : "candidate";
    r.level = e.lambda;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base) {
  auto with = [&](HeadKind head, LossKind loss) {
    TrainConfig c = base;
    c.model_variant = head;
    c.loss_kind = loss;
    return c;
  };
  return {
      {"full", with(HeadKind::DualHead, LossKind::QpiFull)},
      {"coverage_only", with(HeadKind::DualHead, LossKind::CoverageOnly)},
      {"width_only", with(HeadKind::DualHead, LossKind::WidthOnly)},
      {"mse_only", with(HeadKind::DualHead, LossKind::Mse)},
      {"fixed_margin", with(HeadKind::FixedMargin, LossKind::QpiFull)},
      {"single_head", with(HeadKind::SingleHead, LossKind::QpiFull)},
  };
}

const VariantResult& AblationTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ContractError("ablation table has no variant '" + label + "'");
}

AblationTable ablation_suite(const Dataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                             int jobs) {
  if (seeds.empty()) throw ParameterError("ablation_suite: empty seed list");
  const auto variants = ablation_variants(base);
  struct Outcome {
    MetricsReport test;
    double spread;
  };
  const auto outcomes = parallel_map<Outcome>(variants.size() * seeds.size(), jobs, [&](std::size_t k) {
    TrainConfig c = variants[k / seeds.size()].second;
    c.seed = seeds[k % seeds.size()];
    auto model = train(ds, c);
    const auto iv = predict_intervals(ds, model.params, c);
    const auto test = mask_indices(ds.masks.test);
    const Vector widths = iv.widths()(test);
    return Outcome{require_metrics(model.record.test_metrics, "test"), widths.maxCoeff() - widths.minCoeff()};
  });

  AblationTable table;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    VariantResult r;
    r.label = variants[v].first;
    r.config = variants[v].second;
    r.seeds = seeds;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& o = outcomes[v * seeds.size() + s];
      r.runs.push_back(o.test);
      r.width_spread = std::max(r.width_spread, o.spread);
    }
    r.summary = MetricsSummary::of(r.runs);
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::vector<ResultRow> AblationTable::result_rows(const std::string& dataset) const {
  std::vector<ResultRow> out;
  for (const auto& v : rows) {
    for (std::size_t s = 0; s < v.runs.size(); ++s) {
      ResultRow r;
      r.label = {run_id("ablation", v.label, v.seeds[s]), dataset, v.config.model_label(), v.config.lambda_width,
                 v.seeds[s]};
      r.metrics = v.runs[s];
      r.experiment = "ablation";
      r.kind = v.label;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string AblationTable::summary_csv() const {
  std::ostringstream os;
  os << summary_csv_header() << '\n';
  for (const auto& v : rows) os << summary_csv_row(v.label, v.summary) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

PerturbLevels default_perturb_levels() {
  return {{PerturbKind::FeatureNoise, {0.1, 0.2, 0.3}},
          {PerturbKind::TargetNoise, {0.1, 0.2, 0.3}},
          {PerturbKind::EdgeDropout, {0.1, 0.2, 0.3}}};
}

const RobustnessRow& RobustnessTable::row(PerturbKind kind, double level) const {
  for (const auto& r : rows) {
    if (r.kind == kind && r.level == level) return r;
  }
  throw ContractError("robustness table has no row " + to_string(kind) + "@" + format_double(level));
}

RobustnessTable robustness_suite(const Dataset& ds, const TrainConfig& cfg, const PerturbLevels& levels,
                                 const std::vector<std::uint64_t>& seeds, int jobs) {
  if (seeds.empty()) throw ParameterError("robustness_suite: empty seed list");
  struct Job {
    PerturbKind kind;
    double level;
    std::uint64_t seed;
  };
  std::vector<Job> todo;
  for (auto s : seeds) todo.push_back({PerturbKind::TargetNoise, 0.0, s});  // clean runs
  for (const auto& [kind, ls] : levels) {
    for (double l : ls) {
      PerturbSpec{kind, l, 0}.validate();
      if (l == 0.0) continue;
      for (auto s : seeds) todo.push_back({kind, l, s});
    }
  }
  const auto results = parallel_map<MetricsReport>(todo.size(), jobs, [&](std::size_t i) {
    const auto& j = todo[i];
    TrainConfig c = cfg;
    c.seed = j.seed;
    const Dataset data = j.level == 0.0 ? ds : perturb(ds, PerturbSpec{j.kind, j.level, j.seed});
    return require_metrics(train(data, c).record.test_metrics, "test");
  });

  RobustnessTable table;
  table.seeds = seeds;
  table.clean_runs.assign(results.begin(), results.begin() + static_cast<std::ptrdiff_t>(seeds.size()));
  table.clean = MetricsSummary::of(table.clean_runs);
  std::size_t next = seeds.size();
  for (const auto& [kind, ls] : levels) {
    std::vector<double> sorted = ls;
    std::sort(sorted.begin(), sorted.end());
    for (double l : ls) {
      RobustnessRow r;
      r.kind = kind;
      r.level = l;
      if (l == 0.0) {
        r.runs = table.clean_runs;
      } else {
        r.runs.assign(results.begin() + static_cast<std::ptrdiff_t>(next),
                      results.begin() + static_cast<std::ptrdiff_t>(next + seeds.size()));
        next += seeds.size();
      }
      r.summary = MetricsSummary::of(r.runs);
      r.coverage_retention = table.clean.picp.mean > 0.0 ? r.summary.picp.mean / table.clean.picp.mean : 0.0;
      r.width_growth = table.clean.mpiw.mean > 0.0 ? r.summary.mpiw.mean / table.clean.mpiw.mean : 0.0;
      table.rows.push_back(std::move(r));
    }
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const RobustnessRow& a, const RobustnessRow& b) {
    return std::tie(a.kind, a.level) < std::tie(b.kind, b.level);
  });
  return table;
}

std::vector<ResultRow> RobustnessTable::result_rows(const std::string& dataset, const TrainConfig& cfg) const {
  std::vector<ResultRow> out;
  auto add = [&](const std::string& kind, double level, const std::vector<MetricsReport>& runs) {
    for (std::size_t s = 0; s < runs.size(); ++s) {
      ResultRow r;
      r.label = {run_id("robustness", kind + "@" + format_double(level), seeds[s]), dataset, cfg.model_label(),
                 cfg.lambda_width, seeds[s]};
      r.metrics = runs[s];
      r.experiment = "robustness";
      r.kind = kind;
      r.level = level;
      out.push_back(std::move(r));
    }
  };
  add("clean", 0.0, clean_runs);
  for (const auto& row : rows) add(to_string(row.kind), row.level, row.runs);
  return out;
}

std::string RobustnessTable::summary_csv() const {
  std::ostringstream os;
  os << summary_csv_header() << ",coverage_retention,width_growth\n";
  os << summary_csv_row("clean@0", clean) << ",1,1\n";
  for (const auto& r : rows) {
    os << summary_csv_row(to_string(r.kind) + "@" + format_double(r.level), r.summary) << ','
       << format_double(r.coverage_retention) << ',' << format_double(r.width_growth) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<ShiftFamily> default_shift_families(Eigen::Index nodes, FeatureFamily features, Eigen::Index feat_dim,
                                                double noise_sd, std::uint64_t seed) {
  if (nodes < 16) throw ParameterError("default_shift_families: need at least 16 nodes");
  const auto n = static_cast<NodeId>(nodes);
  const auto side = static_cast<NodeId>(std::llround(std::sqrt(static_cast<double>(nodes))));
  NodeId depth = 1;
  while ((std::pow(3.0, depth + 1) - 1.0) / 2.0 < static_cast<double>(nodes)) ++depth;
  const std::uint64_t graph_seed = derive_seed(seed, "shift.graph", 0);
  std::vector<ShiftFamily> out;
  out.push_back({"er", synth_dataset(gen_er(n, 5.0 / static_cast<double>(n), graph_seed), features, feat_dim,
                                     noise_sd, seed)});
  out.push_back({"ba", synth_dataset(gen_ba(n, 3, graph_seed), features, feat_dim, noise_sd, seed)});
  out.push_back({"grid", synth_dataset(gen_grid(side, side), features, feat_dim, noise_sd, seed)});
  out.push_back({"tree", synth_dataset(gen_tree(3, depth), features, feat_dim, noise_sd, seed)});
  return out;
}

double ShiftMatrix::off_diagonal_picp(std::size_t train) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < families.size(); ++j) {
    if (j == train) continue;
    sum += at(train, j).picp.mean;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

ShiftMatrix shift_matrix(const std::vector<ShiftFamily>& families, const TrainConfig& cfg,
                         const std::vector<std::uint64_t>& seeds, int jobs) {
  if (families.size() < 2) throw ParameterError("shift_matrix: need at least 2 graph families");
  if (seeds.empty()) throw ParameterError("shift_matrix: empty seed list");
  const auto dim = families.front().data.features.cols();
  for (const auto& f : families) {
    if (f.data.features.cols() != dim) throw ShapeError("shift_matrix: families must share the feature dimension");
  }
  const std::size_t k = families.size();
  // One task per (source family, seed); each evaluates on every target.
  const auto per_run = parallel_map<std::vector<MetricsReport>>(k * seeds.size(), jobs, [&](std::size_t t) {
    const std::size_t i = t / seeds.size();
    TrainConfig c = cfg;
    c.seed = seeds[t % seeds.size()];
    auto model = train(families[i].data, c);
    std::vector<MetricsReport> row;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& target = families[j].data;
      const auto iv = predict_intervals(target, model.params, c);
      const Mask mask = i == j ? target.masks.test : Mask(static_cast<std::size_t>(target.graph.num_nodes()), true);
      row.push_back(report(iv, target.targets, mask, c.alpha));
    }
    return row;
  });

  ShiftMatrix m;
  for (const auto& f : families) m.families.push_back(f.name);
  m.cells.assign(k, std::vector<ShiftCell>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      auto& cell = m.cells[i][j];
      for (std::size_t s = 0; s < seeds.size(); ++s) cell.runs.push_back(per_run[i * seeds.size() + s][j]);
      const auto summary = MetricsSummary::of(cell.runs);
      cell.picp = summary.picp;
      cell.mpiw = summary.mpiw;
    }
  }
  return m;
}

std::vector<ResultRow> ShiftMatrix::result_rows(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) const {
  std::vector<ResultRow> out;
  for (std::size_t i = 0; i < families.size(); ++i) {
    for (std::size_t j = 0; j < families.size(); ++j) {
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        ResultRow r;
        r.label = {run_id("shift", families[i] + "->" + families[j], seeds[s]), families[j], cfg.model_label(),
                   cfg.lambda_width, seeds[s]};
        r.metrics = at(i, j).runs.at(s);
        r.experiment = "shift";
        r.kind = i == j ? "in_family" : "cross_family";
        r.source_family = families[i];
        r.target_family = families[j];
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

std::string ShiftMatrix::to_csv() const {
  std::ostringstream os;
  os << "source_family,target_family,picp_mean,picp_std,mpiw_mean,mpiw_std\n";
  for (std::size_t i = 0; i < families.size(); ++i) {
    for (std::size_t j = 0; j < families.size(); ++j) {
      const auto& c = at(i, j);
      os << families[i] << ',' << families[j] << ',' << format_double(c.picp.mean) << ','
         << format_double(c.picp.std) << ',' << format_double(c.mpiw.mean) << ',' << format_double(c.mpiw.std)
         << '\n';
    }
  }
  return os.str();
}

std::vector<SplitRow> split_experiment(const Dataset& ds, const TrainConfig& cfg, const std::vector<SplitKind>& kinds,
                                       const std::vector<std::uint64_t>& seeds, int jobs) {
  if (kinds.size() < 2) throw ParameterError("split_experiment: need at least 2 split kinds");
  if (seeds.empty()) throw ParameterError("split_experiment: empty seed list");
  const auto results = parallel_map<MetricsReport>(kinds.size() * seeds.size(), jobs, [&](std::size_t t) {
    TrainConfig c = cfg;
    c.seed = seeds[t % seeds.size()];
    Dataset data = ds;
    data.masks = split(ds.graph, SplitSpec{kinds[t / seeds.size()], {0.6, 0.2, 0.2}, c.seed});
    return require_metrics(train(data, c).record.test_metrics, "test");
  });
  std::vector<SplitRow> out;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    SplitRow r;
    r.kind = kinds[k];
    r.runs.assign(results.begin() + static_cast<std::ptrdiff_t>(k * seeds.size()),
                  results.begin() + static_cast<std::ptrdiff_t>((k + 1) * seeds.size()));
    r.summary = MetricsSummary::of(r.runs);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ResultRow> split_result_rows(const std::vector<SplitRow>& rows, const std::string& dataset,
                                         const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  std::vector<ResultRow> out;
  for (const auto& row : rows) {
    for (std::size_t s = 0; s < row.runs.size(); ++s) {
      ResultRow r;
      r.label = {run_id("splits", to_string(row.kind), seeds.at(s)), dataset, cfg.model_label(), cfg.lambda_width,
                 seeds.at(s)};
      r.metrics = row.runs[s];
      r.experiment = "splits";
      r.kind = to_string(row.kind);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace qpi
