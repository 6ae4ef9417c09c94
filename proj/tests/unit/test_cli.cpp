#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tki/cli.hpp"
#include "tki/error.hpp"

using namespace tki;
using namespace tki::cli;
using nlohmann::json;

namespace {

struct RunOutput {
  int code = 0;
  std::string out;
  std::string err;
};

RunOutput run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tki");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunOutput r;
  r.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Runs the installed binary through the shell; returns its exit status.
int run_binary(const std::string& args, const std::string& stdout_path) {
  std::string cmd = std::string(TKI_BINARY) + " " + args + " > " + stdout_path + " 2>/dev/null";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("tki_cli_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no tki::Error thrown";
  return ErrorCode::Io;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Parsing, ParamsAndGrid) {
  ParamMap p = parse_params("M=1.5,tz=-0.25");
  EXPECT_EQ(p.at("M"), 1.5);
  EXPECT_EQ(p.at("tz"), -0.25);
  EXPECT_TRUE(parse_params("").empty());
  EXPECT_EQ(parse_grid("16"), (std::vector<int>{16}));
  EXPECT_EQ(parse_grid("8,10,12"), (std::vector<int>{8, 10, 12}));
  EXPECT_EQ(code_of([] { parse_params("M"); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { parse_params("M=abc"); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { parse_grid("7"); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { parse_grid("6"); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { parse_grid("8,x"); }), ErrorCode::Usage);
}

TEST(Parsing, ArgumentErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run_cli({"invariant", "--model", "trivial", "--methods", "pfaffian,bogus"}).code, kUsage);
  EXPECT_EQ(run_cli({"invariant", "--model", "trivial", "--grid", "9"}).code, kUsage);
  RunOutput unknown = run_cli({"invariant", "--model", "nope"});
  EXPECT_EQ(unknown.code, kUsage);
  EXPECT_NE(unknown.err.find("nope"), std::string::npos);
  EXPECT_EQ(run_cli({"--help"}).code, kOk);
}

TEST(Parsing, ConfigFields) {
  std::ostringstream sink;
  const char* argv[] = {"tki", "invariant", "--model", "fkm3d", "--params", "dt1=0.5", "--grid", "24",
                        "--methods", "pfaffian,planes", "--seed", "9", "--tol-sewing", "1e-7"};
  auto cfg = parse_args(14, argv, sink);
  ASSERT_TRUE(cfg.has_value());
  EXPECT_EQ(cfg->command, "invariant");
  EXPECT_EQ(cfg->model, "fkm3d");
  EXPECT_EQ(cfg->params.at("dt1"), 0.5);
  EXPECT_EQ(cfg->methods, (std::vector<std::string>{"pfaffian", "planes"}));
  EXPECT_EQ(cfg->seed, 9u);
  EXPECT_EQ(cfg->tol.sewing, 1e-7);
  EXPECT_EQ(cfg->tol.kramers, 1e-9);
}

TEST(ReportJson, RoundTripsExactly) {
  InvariantReport r = compute_report(make_model("fkm3d"), {16, 16, 16}, {"pfaffian", "planes", "wzw"});
  r.notes.push_back("extra note");
  json j = report_to_json(r);
  EXPECT_EQ(report_from_json(j), r);
  EXPECT_EQ(report_from_json(json::parse(j.dump())), r);
  for (const char* key : {"model", "grid", "methods", "trim_pfaffians", "weak", "strong", "consensus", "notes"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["methods"]["pfaffian"]["parity"], -1);
  EXPECT_TRUE(j["methods"]["pfaffian"].contains("runtime_ms"));

  InvariantReport mock;
  mock.model = "mock";
  mock.grid = {8, 8};
  mock.methods["planes"] = {1, 0.1, 0.1, 2.5};
  mock.unconverged = {"pfaffian"};
  EXPECT_EQ(report_from_json(report_to_json(mock)), mock);
}

TEST(ExitCodes, FollowReportState) {
  InvariantReport r;
  r.methods["pfaffian"] = {-1, -1, 0, 0};
  r.methods["wzw"] = {-1, 1, 0, 0};
  finalize_consensus(r);
  EXPECT_EQ(exit_code_for(r), kOk);
  r.methods["planes"] = {1, 0, 0, 0};
  finalize_consensus(r);
  EXPECT_EQ(exit_code_for(r), kDisagreement);
  InvariantReport partial;
  partial.methods["planes"] = {1, 0, 0, 0};
  partial.unconverged = {"wzw"};
  finalize_consensus(partial);
  EXPECT_EQ(exit_code_for(partial), kNonConvergent);
  EXPECT_EQ(exit_code_for(InvariantReport{}), kNonConvergent);
}

TEST(Invariant, TrivialReportsEvenConsensus) {
  RunOutput r = run_cli({"invariant", "--model", "trivial", "--dim", "3", "--m", "2", "--grid", "16", "--methods", "pfaffian,wzw"});
  ASSERT_EQ(r.code, kOk) << r.err;
  json j = json::parse(r.out);
  EXPECT_EQ(j["methods"]["pfaffian"]["parity"], 1);
  EXPECT_EQ(j["methods"]["wzw"]["parity"], 1);
  EXPECT_EQ(j["consensus"], true);
}

TEST(Invariant, FkmStrongPointFourMethods) {
  RunOutput r = run_cli({"invariant", "--model", "fkm3d", "--params", "dt1=0.5", "--grid", "24", "--methods", "pfaffian,planes,wzw,winding"});
  ASSERT_EQ(r.code, kOk) << r.err;
  json j = json::parse(r.out);
  for (const char* m : {"pfaffian", "planes", "wzw", "winding"}) EXPECT_EQ(j["methods"][m]["parity"], -1) << m;
  EXPECT_EQ(j["strong"], -1);
}

TEST(Invariant, RoughGridIsNonConvergent) {
  RunOutput r = run_cli({"invariant", "--model", "fkm3d", "--grid", "12", "--methods", "planes,wzw"});
  EXPECT_EQ(r.code, kNonConvergent);
}

TEST(Invariant, OutputIndependentOfThreadCount) {
  RunOutput a = run_cli({"invariant", "--model", "fkm3d", "--grid", "16", "--methods", "pfaffian,planes,wzw", "--threads", "1"});
  RunOutput b = run_cli({"invariant", "--model", "fkm3d", "--grid", "16", "--methods", "pfaffian,planes,wzw", "--threads", "3"});
  EXPECT_EQ(a.code, kOk);
  EXPECT_EQ(a.out, b.out);
}

TEST(PhaseDiagram, TrivialSweepIsEven) {
  RunOutput r = run_cli({"phase-diagram", "--model", "trivial", "--dim", "3", "--m", "2", "--sweep", "E", "--from", "0.5", "--to", "2", "--steps", "4", "--grid", "8"});
  ASSERT_EQ(r.code, kOk) << r.err;
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"param", "gap", "parity_pfaffian", "parity_planes", "parity_wzw", "consensus", "gapless"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][2], "1");
    EXPECT_EQ(rows[i][3], "1");
    EXPECT_EQ(rows[i][4], "1");
    EXPECT_EQ(rows[i][5], "true");
    EXPECT_EQ(rows[i][6], "false");
  }
}

TEST(PhaseDiagram, FkmFlipsOnceAtClosing) {
  RunOutput r = run_cli({"phase-diagram", "--model", "fkm3d", "--sweep", "dt1", "--from", "0.5", "--to", "3.5", "--steps", "7", "--grid", "24"});
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 8u) << r.err;
  int flips = 0;
  std::string prev;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double param = std::stod(rows[i][0]);
    if (std::abs(param - 2.0) < 1e-12) {
      EXPECT_EQ(rows[i][6], "true");
      EXPECT_EQ(rows[i][3], "NaN");
      continue;
    }
    EXPECT_EQ(rows[i][6], "false");
    const std::string& planes = rows[i][3];
    ASSERT_NE(planes, "NaN") << "dt1 = " << param;
    if (!prev.empty() && planes != prev) ++flips;
    prev = planes;
    EXPECT_EQ(planes, param < 2.0 ? "-1" : "1") << "dt1 = " << param;
  }
  EXPECT_EQ(flips, 1);
}

TEST(PhaseDiagram, DiracSphereFlipsAtZero) {
  RunOutput r = run_cli({"phase-diagram", "--model", "dirac_s3", "--sweep", "mass", "--from", "-2", "--to", "2", "--steps", "5", "--s3-mesh", "32"});
  ASSERT_EQ(r.code, kOk) << r.err;
  auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[3][6], "true");
  EXPECT_EQ(rows[3][4], "NaN");
  EXPECT_EQ(rows[1][4], rows[2][4]);
  EXPECT_EQ(rows[4][4], rows[5][4]);
  EXPECT_NE(rows[1][4], rows[5][4]);
}

TEST(Localise, UniformForms) {
  RunOutput three = run_cli({"localise", "--form", "uniform:3", "--grid", "8"});
  ASSERT_EQ(three.code, kOk) << three.err;
  json j = json::parse(three.out);
  EXPECT_EQ(j["parity"], -1);
  ASSERT_EQ(j["fixed_values"].size(), 8u);
  for (const auto& fv : j["fixed_values"]) {
    bool all_pi = fv["coords"] == json::array({0, 0, 0});
    EXPECT_NEAR(fv["value"].get<double>(), all_pi ? 3.0 : 0.0, 1e-12);
  }
  EXPECT_TRUE(j.contains("levels"));
  EXPECT_NEAR(j["total"].get<double>(), 3.0, 1e-12);

  RunOutput zero = run_cli({"localise", "--form", "uniform:0", "--grid", "8"});
  ASSERT_EQ(zero.code, kOk);
  json z = json::parse(zero.out);
  EXPECT_EQ(z["parity"], 1);
  for (const auto& fv : z["fixed_values"]) EXPECT_EQ(fv["value"].get<double>(), 0.0);
  EXPECT_EQ(run_cli({"localise", "--form", "cubic:1"}).code, kUsage);
}

TEST(Localise, WzwFormMatchesPfaffian) {
  RunOutput loc = run_cli({"localise", "--model", "fkm3d", "--grid", "24", "--form", "wzw"});
  RunOutput inv = run_cli({"invariant", "--model", "fkm3d", "--grid", "24", "--methods", "pfaffian"});
  ASSERT_EQ(loc.code, kOk) << loc.err;
  ASSERT_EQ(inv.code, kOk) << inv.err;
  EXPECT_EQ(json::parse(loc.out)["parity"], json::parse(inv.out)["methods"]["pfaffian"]["parity"]);
}

TEST(Validate, DefaultSuitePasses) {
  RunOutput r = run_cli({"validate"});
  ASSERT_EQ(r.code, kOk) << r.out;
  json j = json::parse(r.out);
  EXPECT_EQ(j["all_pass"], true);
  std::set<std::string> models;
  for (const auto& p : j["properties"]) models.insert(p["model"].get<std::string>());
  for (const char* m : {"trivial", "bhz2d", "fkm3d"}) EXPECT_EQ(models.count(m), 1u) << m;
}

TEST(Validate, TimeReversalBreakFails) {
  RunOutput r = run_cli({"validate", "--inject-tr-break", "0.1"});
  EXPECT_EQ(r.code, kValidationFailure);
  json j = json::parse(r.out);
  EXPECT_EQ(j["all_pass"], false);
  bool sewing_failed = false;
  for (const auto& p : j["properties"]) {
    if (p["property"].get<std::string>().rfind("sewing.", 0) == 0 && !p["pass"].get<bool>()) sewing_failed = true;
  }
  EXPECT_TRUE(sewing_failed);
}

TEST(Binary, ValidateIsByteDeterministic) {
  auto dir = scratch_dir();
  EXPECT_EQ(run_binary("validate --seed 7", (dir / "a.json").string()), 0);
  EXPECT_EQ(run_binary("validate --seed 7", (dir / "b.json").string()), 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_FALSE(slurp(dir / "a.json").empty());
  std::filesystem::remove_all(dir);
}

TEST(Binary, ExitCodesAndOutFile) {
  auto dir = scratch_dir();
  EXPECT_EQ(run_binary("invariant --model nope", (dir / "x").string()), 1);
  EXPECT_EQ(run_binary("validate --inject-tr-break 0.1", (dir / "x").string()), 4);
  auto report = dir / "report.json";
  EXPECT_EQ(run_binary("invariant --model trivial --grid 8 --methods pfaffian --out " + report.string(), (dir / "x").string()), 0);
  EXPECT_EQ(json::parse(slurp(report))["methods"]["pfaffian"]["parity"], 1);
  EXPECT_EQ(run_binary("invariant --model trivial --grid 8 --out /nonexistent/dir/r.json", (dir / "x").string()), 1);
  std::filesystem::remove_all(dir);
}

TEST(Binary, ThreadEnvironmentFallback) {
  auto dir = scratch_dir();
  const std::string args = "invariant --model fkm3d --grid 16 --methods pfaffian,planes";
  EXPECT_EQ(run_binary(args, (dir / "a.json").string()), 0);
  ASSERT_EQ(::setenv("TKI_THREADS", "2", 1), 0);
  EXPECT_EQ(run_binary(args, (dir / "b.json").string()), 0);
  ::unsetenv("TKI_THREADS");
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  std::filesystem::remove_all(dir);
}

TEST(Ingest, WritesNormalizedCache) {
  auto dir = scratch_dir();
  auto path = dir / "trivial.json";
  {
    json doc = json::parse(export_sampled(make_model("trivial", {{"d", 3}, {"m", 2}}), BZGrid({8, 8, 8})));
    std::ofstream(path) << doc.dump();
  }
  RunOutput r = run_cli({"ingest", path.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  auto cache = std::filesystem::path(path.string() + ".normalized.json");
  ASSERT_TRUE(std::filesystem::exists(cache));
  BlochModel back = ingest_sampled(slurp(cache));
  EXPECT_EQ(back.n_bands, 4);

  RunOutput inv = run_cli({"invariant", "--ingest", path.string(), "--methods", "pfaffian,planes"});
  ASSERT_EQ(inv.code, kOk) << inv.err;
  EXPECT_EQ(json::parse(inv.out)["methods"]["pfaffian"]["parity"], 1);
  std::filesystem::remove_all(dir);
}

TEST(Ingest, ReportsFirstSchemaViolation) {
  auto dir = scratch_dir();
  auto path = dir / "bad.json";
  json doc = json::parse(export_sampled(make_model("trivial", {{"d", 2}, {"m", 2}}), BZGrid({8, 8})));
  doc.erase("h_imag");
  std::ofstream(path) << doc.dump();
  RunOutput r = run_cli({"ingest", path.string()});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("h_imag"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"ingest", (dir / "missing.json").string()}).code, kUsage);
  std::filesystem::remove_all(dir);
}
