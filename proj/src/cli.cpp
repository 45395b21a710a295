#include "qpi/cli.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpi/errors.hpp"
#include "qpi/experiments.hpp"
#include "qpi/rng.hpp"
#include "qpi/theory.hpp"

namespace qpi::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Options {
  std::string command;

  // Dataset.
  std::string graph = "er";
  long nodes = 2000;
  double avg_degree = 5.0;
  long ba_m = 3;
  std::string family = "gaussian";
  long feat_dim = 8;
  double noise = 1.0;
  std::uint64_t data_seed = 1;
  std::string edges_csv, features_csv, targets_csv;
  bool csv_header = false;
  std::string split;

  // Training (mirrors TrainConfig).
  TrainConfig cfg;
  std::string model_variant = "dual_head";
  std::string loss_kind = "full";
  std::string width_norm = "l1";
  std::string schedule = "inv_sqrt";
  std::string baseline;
  bool decoupled_weight_decay = false;

  // Output and experiment plumbing.
  std::string out_dir = "qpignn_out";
  std::string format = "csv";
  bool no_timestamp = false;
  int jobs = 1;
  int seeds = 5;
  int runs = 10;

  std::vector<double> grid;
  bool tune = false;
  double lo = 1e-3;
  double hi = 1.0;
  int budget = 9;

  std::vector<double> feature_levels{0.1, 0.2, 0.3};
  std::vector<double> target_levels{0.1, 0.2, 0.3};
  std::vector<double> edge_levels{0.1, 0.2, 0.3};
  std::vector<std::string> split_kinds{"random", "degree", "community"};

  std::string check = "hoeffding";
  long n = 2000;
  double delta = 0.05;
  double eps = 0.05;
  double sigma = 1.0;
  int trials = 500;

  std::string checkpoint;
  std::vector<std::string> inputs;
};

/// Raised for invalid flag values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

ordered_json csv_cell(const std::string& cell) {
  if (cell.empty()) return nullptr;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec == std::errc() && ptr == cell.data() + cell.size()) return v;
  return cell;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

ordered_json csv_to_json(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  const auto header = split_line(line);
  auto rows = ordered_json::array();
  while (std::getline(is, line)) {
    const auto cells = split_line(line);
    ordered_json row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = csv_cell(i < cells.size() ? cells[i] : "");
    rows.push_back(std::move(row));
  }
  return rows;
}

class Writer {
 public:
  Writer(const Options& o, std::ostream& out) : opts_(o), out_(out) {
    fs::create_directories(o.out_dir);
    if (!o.no_timestamp) stamp_ = timestamp();
  }

  /// Writes `stem.csv` or `stem.json` depending on --format.
  void table(const std::string& stem, const std::string& csv) const {
    if (opts_.format == "json") {
      ordered_json j;
      if (!stamp_.empty()) j["generated"] = stamp_;
      j["rows"] = csv_to_json(csv);
      write(stem + ".json", j.dump(2) + "\n");
    } else {
      write(stem + ".csv", (stamp_.empty() ? "" : "# generated " + stamp_ + "\n") + csv);
    }
  }

  void write(const std::string& name, const std::string& text) const {
    const fs::path path = fs::path(opts_.out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    out_ << "wrote " << path.string() << "\n";
  }

  fs::path path(const std::string& name) const { return fs::path(opts_.out_dir) / name; }
  const std::string& stamp() const { return stamp_; }

 private:
  const Options& opts_;
  std::ostream& out_;
  std::string stamp_;
};

ordered_json config_json(const Options& o, const std::string& stamp) {
  const auto& c = o.cfg;
  ordered_json j;
  if (!stamp.empty()) j["generated"] = stamp;
  j["command"] = o.command;
  j["dataset"] = {{"graph", o.graph},         {"nodes", o.nodes},       {"avg_degree", o.avg_degree},
                  {"ba_m", o.ba_m},           {"family", o.family},     {"feat_dim", o.feat_dim},
                  {"noise", o.noise},         {"data_seed", o.data_seed}, {"edges", o.edges_csv},
                  {"features", o.features_csv}, {"targets", o.targets_csv}, {"split", o.split}};
  j["train"] = {{"epochs", c.epochs},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"alpha", c.alpha},
                {"lambda_width", c.lambda_width},
                {"seed", c.seed},
                {"model_variant", to_string(c.model_variant)},
                {"loss_kind", to_string(c.loss_kind)},
                {"dropout_p", c.dropout_p},
                {"hidden", c.hidden},
                {"width_norm", c.width_norm == WidthNorm::L1 ? "l1" : "l2"},
                {"smooth_coverage", c.smooth_coverage},
                {"gamma_order", c.gamma_order},
                {"rqr_lambda", c.rqr_lambda},
                {"mc_passes", c.mc_passes},
                {"t_mult", c.t_mult},
                {"schedule", c.schedule == LrSchedule::InvSqrt ? "inv_sqrt" : "constant"},
                {"coupled_weight_decay", c.coupled_weight_decay}};
  j["experiment"] = {{"jobs", o.jobs},           {"seeds", o.seeds},          {"runs", o.runs},
                     {"grid", o.grid},           {"tune", o.tune},            {"lo", o.lo},
                     {"hi", o.hi},               {"budget", o.budget},        {"feature_levels", o.feature_levels},
                     {"target_levels", o.target_levels}, {"edge_levels", o.edge_levels},
                     {"split_kinds", o.split_kinds}, {"check", o.check},      {"n", o.n},
                     {"delta", o.delta},         {"eps", o.eps},              {"sigma", o.sigma},
                     {"trials", o.trials},       {"checkpoint", o.checkpoint}, {"inputs", o.inputs}};
  j["output"] = {{"dir", o.out_dir}, {"format", o.format}};
  return j;
}

void add_dataset_flags(CLI::App* app, Options& o) {
  app->add_option("--graph", o.graph, "Graph generator: er, ba, grid, chain, tree")
      ->check(CLI::IsMember({"er", "ba", "grid", "chain", "tree"}));
  app->add_option("--nodes", o.nodes, "Number of nodes")->check(CLI::PositiveNumber);
  app->add_option("--avg-degree", o.avg_degree, "Expected degree of ER graphs (p = avg_degree / N)");
  app->add_option("--ba-m", o.ba_m, "Edges per new BA node");
  app->add_option("--family", o.family, "Feature family: basic, gaussian, uniform, edge");
  app->add_option("--feat-dim", o.feat_dim, "Feature dimension")->check(CLI::PositiveNumber);
  app->add_option("--noise", o.noise, "Target noise standard deviation");
  app->add_option("--data-seed", o.data_seed, "Seed for graph, features, targets and split");
  app->add_option("--edges", o.edges_csv, "Edge CSV (u,v); use with --features and --targets");
  app->add_option("--features", o.features_csv, "Feature CSV, one row per node");
  app->add_option("--targets", o.targets_csv, "Target CSV, one value per node");
  app->add_flag("--csv-header", o.csv_header, "Input CSV files start with a header line");
  app->add_option("--split", o.split, "Re-split nodes: random, degree, community");
}

void add_train_flags(CLI::App* app, Options& o) {
  auto& c = o.cfg;
  app->add_option("--epochs", c.epochs, "Training epochs");
  app->add_option("--lr", c.lr, "Adam learning rate");
  app->add_option("--weight-decay", c.weight_decay, "Weight decay");
  app->add_option("--alpha", c.alpha, "Miscoverage level; target coverage is 1 - alpha");
  app->add_option("--lambda,--lambda-width", c.lambda_width, "Width penalty weight");
  app->add_option("--seed", c.seed, "Training seed (first of the seed list for experiments)");
  app->add_option("--model-variant", o.model_variant,
                  "dual_head, fixed_margin, single_head, rqr, sqr, mean_only");
  app->add_option("--loss-kind", o.loss_kind,
                  "full, coverage_only, width_only, mse, sqr, rqr_adj, mse_mc_dropout");
  app->add_option("--baseline", o.baseline, "Shortcut for a baseline config: sqr, rqr_adj, mc_dropout")
      ->check(CLI::IsMember({"sqr", "rqr_adj", "mc_dropout"}));
  app->add_option("--dropout-p", c.dropout_p, "Dropout probability");
  app->add_option("--hidden", c.hidden, "Hidden width");
  app->add_option("--width-norm", o.width_norm, "l1 or l2")->check(CLI::IsMember({"l1", "l2"}));
  app->add_flag("--smooth-coverage", c.smooth_coverage, "Logistic surrogate for the coverage indicator");
  app->add_option("--gamma-order", c.gamma_order, "RQR-adj ordering penalty");
  app->add_option("--rqr-lambda", c.rqr_lambda, "RQR-W width weight");
  app->add_option("--mc-passes", c.mc_passes, "MC-dropout passes");
  app->add_option("--t-mult", c.t_mult, "MC-dropout interval multiplier");
  app->add_option("--schedule", o.schedule, "constant or inv_sqrt")
      ->check(CLI::IsMember({"constant", "inv_sqrt"}));
  app->add_flag("--decoupled-weight-decay", o.decoupled_weight_decay, "AdamW-style decay instead of L2 coupling");
}

void add_output_flags(CLI::App* app, Options& o) {
  app->add_option("--out", o.out_dir, "Output directory (created if absent)");
  app->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--no-timestamp", o.no_timestamp, "Omit the generation timestamp from outputs");
  app->add_option("--jobs", o.jobs, "Parallel independent runs")->check(CLI::PositiveNumber);
}

void finalize_config(Options& o) {
  auto& c = o.cfg;
  try {
    c.model_variant = parse_head_kind(o.model_variant);
    c.loss_kind = parse_loss_kind(o.loss_kind);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  c.width_norm = o.width_norm == "l2" ? WidthNorm::L2 : WidthNorm::L1;
  c.schedule = o.schedule == "constant" ? LrSchedule::Constant : LrSchedule::InvSqrt;
  c.coupled_weight_decay = !o.decoupled_weight_decay;
  if (o.baseline == "sqr") c = sqr_config(c);
  if (o.baseline == "rqr_adj") c = rqr_adj_config(c);
  if (o.baseline == "mc_dropout") c = mc_dropout_config(c);
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
}

Graph make_graph(const Options& o, std::uint64_t seed) {
  const auto n = static_cast<NodeId>(o.nodes);
  if (o.graph == "er") return gen_er(n, std::min(1.0, o.avg_degree / static_cast<double>(n)), seed);
  if (o.graph == "ba") return gen_ba(n, static_cast<NodeId>(o.ba_m), seed);
  if (o.graph == "grid") {
    const auto side = static_cast<NodeId>(std::llround(std::sqrt(static_cast<double>(n))));
    return gen_grid(side, side);
  }
  if (o.graph == "chain") return gen_chain(n);
  NodeId depth = 1;
  while ((std::pow(3.0, depth + 1) - 1.0) / 2.0 < static_cast<double>(n)) ++depth;
  return gen_tree(3, depth);
}

Dataset make_dataset(const Options& o) {
  Dataset ds;
  const bool from_csv = !o.edges_csv.empty() || !o.features_csv.empty() || !o.targets_csv.empty();
  if (from_csv) {
    if (o.edges_csv.empty() || o.features_csv.empty() || o.targets_csv.empty()) {
      throw UsageError("--edges, --features and --targets must be given together");
    }
    ds = load_csv(o.edges_csv, o.features_csv, o.targets_csv, CsvOptions{o.csv_header});
  } else {
    FeatureFamily family;
    try {
      family = parse_feature_family(o.family);
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    const auto graph = make_graph(o, derive_seed(o.data_seed, "cli.graph", 0));
    ds = synth_dataset(graph, family, o.feat_dim, o.noise, o.data_seed);
  }
  if (!o.split.empty()) {
    SplitKind kind;
    try {
      kind = parse_split_kind(o.split);
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    ds.masks = split(ds.graph, SplitSpec{kind, {0.6, 0.2, 0.2}, o.data_seed});
  }
  return ds;
}

std::string dataset_label(const Options& o) {
  if (!o.edges_csv.empty()) return fs::path(o.edges_csv).stem().string();
  return o.graph + "-" + o.family;
}

void print_metrics(std::ostream& out, const std::string& name, const std::optional<MetricsReport>& m) {
  if (!m) return;
  out << name << ": picp=" << format_double(m->picp) << " mpiw=" << format_double(m->mpiw)
      << " winkler=" << format_double(m->winkler) << " cwc=" << format_double(m->cwc) << "\n";
}

std::vector<ResultRow> mask_rows(const IntervalSet& iv, const Dataset& ds, const Options& o) {
  std::vector<ResultRow> rows;
  const std::pair<const char*, const Mask*> masks[] = {
      {"train", &ds.masks.train}, {"val", &ds.masks.val}, {"test", &ds.masks.test}};
  for (const auto& [name, mask] : masks) {
    const auto m = try_report(iv, ds.targets, *mask, o.cfg.alpha);
    if (!m) continue;
    ResultRow r;
    r.label = {std::string(o.command) + "/" + name, dataset_label(o), o.cfg.model_label(), o.cfg.lambda_width,
               o.cfg.seed};
    r.metrics = *m;
    r.experiment = o.command;
    r.kind = name;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string intervals_csv(const IntervalSet& iv, const Dataset& ds) {
  std::ostringstream os;
  os << "node,low,up,target,split\n";
  for (Eigen::Index v = 0; v < iv.size(); ++v) {
    const auto u = static_cast<std::size_t>(v);
    const char* part = ds.masks.train[u] ? "train" : ds.masks.val[u] ? "val" : "test";
    os << v << ',' << format_double(iv.low(v)) << ',' << format_double(iv.up(v)) << ','
       << format_double(ds.targets(v)) << ',' << part << '\n';
  }
  return os.str();
}

std::vector<std::uint64_t> seeds_of(const Options& o, int count) { return seed_list(o.cfg.seed, count); }

// ---------------------------------------------------------------------------

void cmd_gen(const Options& o, const Writer& w) {
  const auto ds = make_dataset(o);
  export_csv(ds, w.path("edges.csv"), w.path("features.csv"), w.path("targets.csv"));
  std::ostringstream masks;
  masks << "node,split\n";
  for (std::size_t v = 0; v < ds.masks.train.size(); ++v) {
    masks << v << ',' << (ds.masks.train[v] ? "train" : ds.masks.val[v] ? "val" : "test") << '\n';
  }
  w.write("masks.csv", masks.str());
}

void cmd_train(const Options& o, const Writer& w, std::ostream& out) {
  const auto ds = make_dataset(o);
  auto model = train(ds, o.cfg);
  w.table("trajectory", trajectory_csv(model.record));
  save_checkpoint(w.path("checkpoint.json"), model.params);
  out << "wrote " << w.path("checkpoint.json").string() << "\n";
  const auto iv = predict_intervals(ds, model.params, o.cfg);
  w.table("metrics", results_csv(mask_rows(iv, ds, o)));
  print_metrics(out, "train", model.record.train_metrics);
  print_metrics(out, "val", model.record.val_metrics);
  print_metrics(out, "test", model.record.test_metrics);
}

void cmd_eval(const Options& o, const Writer& w, std::ostream& out) {
  if (o.checkpoint.empty()) throw UsageError("eval requires --checkpoint");
  const auto ds = make_dataset(o);
  auto params = load_checkpoint(o.checkpoint, o.cfg.model_config(ds.features.cols()));
  const auto iv = predict_intervals(ds, params, o.cfg);
  const auto rows = mask_rows(iv, ds, o);
  w.table("metrics", results_csv(rows));
  w.table("intervals", intervals_csv(iv, ds));
  for (const auto& r : rows) print_metrics(out, r.kind, r.metrics);
}

void cmd_sweep(const Options& o, const Writer& w, std::ostream& out) {
  const auto ds = make_dataset(o);
  const auto result = o.tune ? lambda_tune(ds, o.cfg, TuneBounds{o.lo, o.hi}, o.budget, o.jobs)
                             : lambda_sweep(ds, o.cfg, o.grid.empty() ? default_lambda_grid() : o.grid, o.jobs);
  w.table("sweep", result.to_csv());
  w.table("results", results_csv(result.rows(dataset_label(o), o.cfg)));
  out << "chosen lambda=" << format_double(result.chosen_lambda)
      << " objective=" << format_double(result.chosen_objective) << "\n";
  for (const auto& f : result.flags) out << "flag: " << f << "\n";
}

void cmd_ablate(const Options& o, const Writer& w, std::ostream& out) {
  const auto ds = make_dataset(o);
  const auto table = ablation_suite(ds, o.cfg, seeds_of(o, o.seeds), o.jobs);
  w.table("ablation", results_csv(table.result_rows(dataset_label(o))));
  w.table("ablation_summary", table.summary_csv());
  for (const auto& r : table.rows) {
    out << r.label << ": picp=" << format_double(r.summary.picp.mean) << "+-" << format_double(r.summary.picp.std)
        << " mpiw=" << format_double(r.summary.mpiw.mean) << "+-" << format_double(r.summary.mpiw.std)
        << " cwc=" << format_double(r.summary.cwc.mean) << "\n";
  }
}

void cmd_robust(const Options& o, const Writer& w, std::ostream& out) {
  const auto ds = make_dataset(o);
  const PerturbLevels levels{{PerturbKind::FeatureNoise, o.feature_levels},
                             {PerturbKind::TargetNoise, o.target_levels},
                             {PerturbKind::EdgeDropout, o.edge_levels}};
  const auto table = robustness_suite(ds, o.cfg, levels, seeds_of(o, o.seeds), o.jobs);
  w.table("robustness", results_csv(table.result_rows(dataset_label(o), o.cfg)));
  w.table("robustness_summary", table.summary_csv());
  out << "clean: picp=" << format_double(table.clean.picp.mean) << " mpiw=" << format_double(table.clean.mpiw.mean)
      << "\n";
  for (const auto& r : table.rows) {
    out << to_string(r.kind) << "@" << format_double(r.level) << ": picp=" << format_double(r.summary.picp.mean)
        << " mpiw=" << format_double(r.summary.mpiw.mean) << " retention=" << format_double(r.coverage_retention)
        << " growth=" << format_double(r.width_growth) << "\n";
  }
}

void cmd_shift(const Options& o, const Writer& w, std::ostream& out) {
  FeatureFamily family;
  try {
    family = parse_feature_family(o.family);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  const auto families = default_shift_families(o.nodes, family, o.feat_dim, o.noise, o.data_seed);
  const auto seeds = seeds_of(o, o.runs);
  const auto m = shift_matrix(families, o.cfg, seeds, o.jobs);
  w.table("shift_matrix", m.to_csv());
  w.table("shift", results_csv(m.result_rows(o.cfg, seeds)));
  for (std::size_t i = 0; i < m.families.size(); ++i) {
    out << m.families[i] << ":";
    for (std::size_t j = 0; j < m.families.size(); ++j) out << " " << format_double(m.at(i, j).picp.mean);
    out << "\n";
  }
}

void cmd_splits(const Options& o, const Writer& w, std::ostream& out) {
  const auto ds = make_dataset(o);
  std::vector<SplitKind> kinds;
  try {
    for (const auto& k : o.split_kinds) kinds.push_back(parse_split_kind(k));
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  const auto seeds = seeds_of(o, o.seeds);
  const auto rows = split_experiment(ds, o.cfg, kinds, seeds, o.jobs);
  w.table("splits", results_csv(split_result_rows(rows, dataset_label(o), o.cfg, seeds)));
  std::ostringstream summary;
  summary << summary_csv_header() << '\n';
  for (const auto& r : rows) {
    summary << summary_csv_row(to_string(r.kind), r.summary) << '\n';
    out << to_string(r.kind) << ": picp=" << format_double(r.summary.picp.mean)
        << " mpiw=" << format_double(r.summary.mpiw.mean) << "\n";
  }
  w.table("splits_summary", summary.str());
}

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

void cmd_theory(const Options& o, const Writer& w, std::ostream& out) {
  if (o.check == "hoeffding") {
    out << "epsilon=" << fixed6(hoeffding_epsilon(o.n, o.delta)) << "\n";
  } else if (o.check == "mcdiarmid") {
    out << "bound=" << fixed6(mcdiarmid_prob(o.n, o.eps)) << "\n";
  } else if (o.check == "optimal-width") {
    out << "half_width=" << fixed6(gaussian_optimal_halfwidth(o.sigma, o.cfg.alpha)) << "\n";
  } else if (o.check == "concentration") {
    const double d = gaussian_optimal_halfwidth(o.sigma, o.cfg.alpha);
    const auto r = concentration_check({-d, d}, GaussianDist{0.0, o.sigma}, o.n, o.trials, o.delta, o.cfg.seed);
    std::ostringstream csv;
    csv << "n,std\n";
    for (std::size_t i = 0; i < r.scaling_sizes.size(); ++i) {
      csv << r.scaling_sizes[i] << ',' << format_double(r.scaling_std[i]) << '\n';
    }
    w.table("concentration", csv.str());
    out << "expected_coverage=" << fixed6(r.expected_coverage) << " epsilon=" << fixed6(r.epsilon)
        << " exceedance=" << fixed6(r.exceedance_fraction) << " limit=" << fixed6(r.exceedance_limit) << "\n";
    out << "std ratios:";
    for (double x : r.scaling_ratios) out << " " << fixed6(x);
    out << "\n" << (r.passed() ? "PASS" : "FAIL") << "\n";
  } else if (o.check == "convergence") {
    const auto ds = make_dataset(o);
    const auto model = train(ds, o.cfg);
    w.table("trajectory", trajectory_csv(model.record));
    const auto r = convergence_check(model.record);
    out << r.message << "\n" << (r.passed() ? "PASS" : "FAIL") << "\n";
  } else {
    throw UsageError("unknown check '" + o.check + "'");
  }
}

void cmd_report(const Options& o, const Writer& w, std::ostream& out) {
  if (o.inputs.empty()) throw UsageError("report requires --input");
  // Group result rows by everything except seed and run_id.
  std::map<std::string, std::vector<MetricsReport>> groups;
  const std::vector<std::string> key_cols{"experiment", "kind", "level", "source_family", "target_family",
                                          "model",      "lambda"};
  for (const auto& input : o.inputs) {
    std::ifstream f(input);
    if (!f) throw IngestionError("cannot open " + input);
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      if (header.empty()) {
        header = split_line(line);
        continue;
      }
      const auto cells = split_line(line);
      if (cells.size() != header.size()) {
        throw IngestionError(input + ":" + std::to_string(line_no) + ": ragged row");
      }
      std::map<std::string, std::string> row;
      for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
      std::string key;
      for (const auto& k : key_cols) key += (key.empty() ? "" : "|") + row[k];
      auto num = [&](const char* col) {
        const auto it = row.find(col);
        if (it == row.end()) throw IngestionError(input + ": missing column " + col);
        try {
          return std::stod(it->second);
        } catch (const std::exception&) {
          throw IngestionError(input + ":" + std::to_string(line_no) + ": bad number in " + col);
        }
      };
      MetricsReport m;
      m.picp = num("picp");
      m.mpiw = num("mpiw");
      m.nmpiw = num("nmpiw");
      m.mpe = num("mpe");
      m.sharpness = num("sharpness");
      m.winkler = num("winkler");
      m.cwc = num("cwc");
      groups[key].push_back(m);
    }
  }
  std::ostringstream csv;
  csv << summary_csv_header() << '\n';
  for (const auto& [key, rs] : groups) {
    const auto s = MetricsSummary::of(rs);
    csv << summary_csv_row(key, s) << '\n';
    out << key << ": n=" << s.runs << " picp=" << format_double(s.picp.mean) << " mpiw=" << format_double(s.mpiw.mean)
        << "\n";
  }
  w.table("report", csv.str());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Node-level prediction intervals on graphs: training, tuning and experiments", "qpignn"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read flags from a TOML/INI config file");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset as CSV");
  add_dataset_flags(gen, o);
  auto* trn = app.add_subcommand("train", "Train one model; write trajectory, checkpoint and metrics");
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  evl->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON written by train")->required();
  auto* swp = app.add_subcommand("sweep", "Width-penalty sweep or tuning");
  swp->add_option("--grid", o.grid, "Comma-separated lambda values")->delimiter(',');
  swp->add_flag("--tune", o.tune, "Bounded search instead of a fixed grid");
  swp->add_option("--lo", o.lo, "Lower tuning bound");
  swp->add_option("--hi", o.hi, "Upper tuning bound");
  swp->add_option("--budget", o.budget, "Tuning evaluations (coarse grid plus trisection)");
  auto* abl = app.add_subcommand("ablate", "Ablation over heads and loss terms");
  auto* rob = app.add_subcommand("robust", "Perturbation robustness");
  rob->add_option("--feature-levels", o.feature_levels, "Feature-noise levels")->delimiter(',');
  rob->add_option("--target-levels", o.target_levels, "Target-noise levels")->delimiter(',');
  rob->add_option("--edge-levels", o.edge_levels, "Edge-dropout levels")->delimiter(',');
  auto* sft = app.add_subcommand("shift", "Train-on-one-family, evaluate-on-another matrix");
  sft->add_option("--runs", o.runs, "Runs per cell")->check(CLI::PositiveNumber);
  auto* spl = app.add_subcommand("splits", "Random / degree / community split comparison");
  spl->add_option("--kinds", o.split_kinds, "Comma-separated split kinds")->delimiter(',');
  auto* thy = app.add_subcommand("theory", "Closed-form bounds and Monte-Carlo checks");
  thy->add_option("--check", o.check, "hoeffding, mcdiarmid, optimal-width, concentration, convergence")
      ->check(CLI::IsMember({"hoeffding", "mcdiarmid", "optimal-width", "concentration", "convergence"}));
  thy->add_option("--n", o.n, "Sample size");
  thy->add_option("--delta", o.delta, "Failure probability");
  thy->add_option("--eps", o.eps, "Deviation radius");
  thy->add_option("--sigma", o.sigma, "Noise standard deviation");
  thy->add_option("--trials", o.trials, "Monte-Carlo trials");
  auto* rep = app.add_subcommand("report", "Aggregate result CSVs by experiment group");
  rep->add_option("--input", o.inputs, "Result CSV files")->required()->delimiter(',');

  for (auto* sub : {trn, evl, swp, abl, rob, sft, spl, thy}) {
    add_dataset_flags(sub, o);
    add_train_flags(sub, o);
  }
  for (auto* sub : {abl, rob, spl}) sub->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  for (auto* sub : {gen, trn, evl, swp, abl, rob, sft, spl, thy, rep}) add_output_flags(sub, o);

  bool shift_lambda_given = false;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    o.command = app.get_subcommands().front()->get_name();
    shift_lambda_given = sft->count("--lambda") > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (o.command == "shift" && !shift_lambda_given) o.cfg.lambda_width = kShiftLambdaWidth;
    finalize_config(o);
    const Writer w(o, out);
    w.write("config.json", config_json(o, w.stamp()).dump(2) + "\n");
    if (o.command == "gen") cmd_gen(o, w);
    if (o.command == "train") cmd_train(o, w, out);
    if (o.command == "eval") cmd_eval(o, w, out);
    if (o.command == "sweep") cmd_sweep(o, w, out);
    if (o.command == "ablate") cmd_ablate(o, w, out);
    if (o.command == "robust") cmd_robust(o, w, out);
    if (o.command == "shift") cmd_shift(o, w, out);
    if (o.command == "splits") cmd_splits(o, w, out);
    if (o.command == "theory") cmd_theory(o, w, out);
    if (o.command == "report") cmd_report(o, w, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace qpi::cli
