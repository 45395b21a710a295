#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "qpi/cli.hpp"
#include "support.hpp"

using namespace qpi;
using qpi::test::read_file;
using qpi::test::TempDir;
using qpi::test::write_file;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Small, quick dataset and training flags shared by the training subcommands.
std::vector<std::string> small(const TempDir& dir, std::vector<std::string> head) {
  for (const char* a : {"--nodes", "150", "--epochs", "20", "--hidden", "8", "--lr", "0.01", "--no-timestamp"}) {
    head.emplace_back(a);
  }
  head.emplace_back("--out");
  head.push_back(dir.path().string());
  return head;
}

std::vector<std::string> data_lines(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty() && l[0] != '#') out.push_back(l);
  }
  return out;
}

/// Columns dataset through cwc of a results row.
std::vector<std::string> metric_cells(const std::string& row) {
  std::vector<std::string> cells;
  std::istringstream in(row);
  for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
  return {cells.begin() + 1, cells.begin() + 12};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  const Result unknown = invoke({"theory", "--check", "hoeffding", "--bogus"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK_FALSE((unknown.out + unknown.err).empty());
  CHECK(invoke({"theory", "--check", "nope"}).code == cli::kExitUsage);
  CHECK(invoke({"--help"}).code == cli::kExitOk);
  TempDir dir("cli_usage");
  CHECK(invoke(small(dir, {"train", "--alpha", "1.5"})).code == cli::kExitUsage);
  CHECK(invoke(small(dir, {"eval"})).code == cli::kExitUsage);
}

TEST_CASE("theory closed forms") {
  TempDir dir("cli_theory");
  const std::string out = dir.path().string();
  const Result h = invoke({"theory", "--check", "hoeffding", "--n", "2000", "--delta", "0.05", "--out", out});
  CHECK(h.code == 0);
  CHECK(h.out.find("epsilon=0.030368") != std::string::npos);
  const Result m = invoke({"theory", "--check", "mcdiarmid", "--n", "1000", "--eps", "0.05", "--out", out});
  CHECK(m.out.find("0.013476") != std::string::npos);
  const Result w = invoke({"theory", "--check", "optimal-width", "--sigma", "2", "--alpha", "0.1", "--out", out});
  CHECK(w.out.find("half_width=3.289707") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "config.json"));
}

TEST_CASE("runtime errors exit with 2") {
  TempDir dir("cli_runtime");
  write_file(dir / "edges.csv", "0,1\n1,7\n");
  write_file(dir / "features.csv", "1\n2\n3\n");
  write_file(dir / "targets.csv", "1\n2\n3\n");
  const Result r = invoke(small(dir, {"train", "--edges", (dir / "edges.csv").string(), "--features",
                                      (dir / "features.csv").string(), "--targets", (dir / "targets.csv").string()}));
  CHECK(r.code == cli::kExitRuntime);
  CHECK(r.err.find("edges.csv:2") != std::string::npos);
  CHECK(invoke(small(dir, {"eval", "--checkpoint", (dir / "missing.json").string()})).code == cli::kExitRuntime);
}

TEST_CASE("train writes its artifacts and eval reads them back") {
  TempDir dir("cli_train");
  const Result r = invoke(small(dir, {"train", "--family", "gaussian", "--lambda", "0.5", "--seed", "1"}));
  REQUIRE(r.code == 0);
  for (const char* f : {"config.json", "trajectory.csv", "checkpoint.json", "metrics.csv"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto traj = data_lines(read_file(dir / "trajectory.csv"));
  CHECK(traj.size() == 21);
  const auto metrics = data_lines(read_file(dir / "metrics.csv"));
  REQUIRE(metrics.size() == 4);
  CHECK(metrics[0].rfind("run_id,dataset,model,lambda,seed,picp", 0) == 0);

  const auto cfg = nlohmann::json::parse(read_file(dir / "config.json"));
  CHECK(cfg.contains("command"));

  TempDir eval_dir("cli_eval");
  const Result e = invoke(small(eval_dir, {"eval", "--lambda", "0.5", "--seed", "1", "--checkpoint",
                                           (dir / "checkpoint.json").string()}));
  CHECK(e.code == 0);
  CHECK(data_lines(read_file(eval_dir / "intervals.csv")).size() == 151);
  // The checkpoint reproduces the training run's metrics; only the label columns differ.
  const auto evaluated = data_lines(read_file(eval_dir / "metrics.csv"));
  REQUIRE(evaluated.size() == metrics.size());
  for (std::size_t i = 1; i < metrics.size(); ++i) CHECK(metric_cells(evaluated[i]) == metric_cells(metrics[i]));
}

TEST_CASE("sweep marks exactly one chosen row") {
  TempDir dir("cli_sweep");
  const Result r = invoke(small(dir, {"sweep", "--grid", "0.1,0.3,0.5,0.7"}));
  REQUIRE(r.code == 0);
  const auto rows = data_lines(read_file(dir / "sweep.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].find("chosen") != std::string::npos);
  int chosen = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream cells(rows[i]);
    std::string lambda, objective, flag;
    std::getline(cells, lambda, ',');
    std::getline(cells, objective, ',');
    std::getline(cells, flag, ',');
    chosen += flag == "1" ? 1 : 0;
  }
  CHECK(chosen == 1);
  CHECK(r.out.find("chosen lambda=") != std::string::npos);
}

TEST_CASE("identical invocations give byte-identical outputs") {
  TempDir a("cli_det_a"), b("cli_det_b");
  REQUIRE(invoke(small(a, {"train", "--seed", "3"})).code == 0);
  REQUIRE(invoke(small(b, {"train", "--seed", "3"})).code == 0);
  for (const char* f : {"trajectory.csv", "checkpoint.json", "metrics.csv"}) {
    CAPTURE(f);
    CHECK(read_file(a / f) == read_file(b / f));
  }

  TempDir c("cli_det_c");
  std::vector<std::string> stamped = small(c, {"train", "--seed", "3"});
  std::erase(stamped, std::string("--no-timestamp"));
  REQUIRE(invoke(stamped).code == 0);
  const std::string with_stamp = read_file(c / "trajectory.csv");
  CHECK(with_stamp.rfind("# generated ", 0) == 0);
  CHECK(with_stamp.substr(with_stamp.find('\n') + 1) == read_file(a / "trajectory.csv"));
}

TEST_CASE("json format mirrors csv rows") {
  TempDir dir("cli_json");
  REQUIRE(invoke(small(dir, {"train", "--format", "json"})).code == 0);
  const auto j = nlohmann::json::parse(read_file(dir / "metrics.json"));
  REQUIRE(j["rows"].size() == 3);
  CHECK(j["rows"][0].contains("picp"));
  CHECK_FALSE(j.contains("generated"));
}

TEST_CASE("gen then train from the exported csv") {
  TempDir gen("cli_gen");
  REQUIRE(invoke({"gen", "--nodes", "80", "--graph", "ba", "--out", gen.path().string(), "--no-timestamp"}).code == 0);
  for (const char* f : {"edges.csv", "features.csv", "targets.csv", "masks.csv"}) CHECK(std::filesystem::exists(gen / f));
  TempDir run("cli_gen_train");
  const Result r = invoke(small(run, {"train", "--edges", (gen / "edges.csv").string(), "--features",
                                      (gen / "features.csv").string(), "--targets", (gen / "targets.csv").string()}));
  CHECK(r.code == 0);
}

TEST_CASE("report aggregates result files") {
  TempDir dir("cli_report");
  REQUIRE(invoke(small(dir, {"sweep", "--grid", "0.1,0.5"})).code == 0);
  TempDir rep("cli_report_out");
  const Result r = invoke({"report", "--input", (dir / "results.csv").string(), "--out", rep.path().string(),
                           "--no-timestamp"});
  CHECK(r.code == 0);
  CHECK(data_lines(read_file(rep / "report.csv")).size() >= 2);
  CHECK(invoke({"report", "--input", (dir / "nope.csv").string(), "--out", rep.path().string()}).code ==
        cli::kExitRuntime);
}
