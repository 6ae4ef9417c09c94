#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tki/eqforms.hpp"
#include "tki/invariants.hpp"
#include "tki/models.hpp"

namespace tki::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,  // bad arguments, unreadable or invalid input, IO failure
  kDisagreement = 2,
  kNonConvergent = 3,
  kValidationFailure = 4,
};

struct Tolerances {
  double sewing = 1e-8;      // sewing unitarity, tau-relation, TRIM skewness, TR residual
  double kramers = 1e-9;     // Kramers degeneracy and <psi, Theta psi>
  double chern = 1e-6;       // plane Chern numbers
  double quaternionic = 1e-6;
  double gap = 1e-8;         // phase-diagram points at or below this gap are gapless
  double localise = 1e-9;    // relative fixed-point sum error
};

struct Sweep {
  std::string param;
  double from = 0.0;
  double to = 1.0;
  int steps = 11;
};

struct RunConfig {
  std::string command;
  std::string model;
  ParamMap params;
  std::string ingest_path;
  std::vector<int> grid;  // empty: command default
  std::vector<std::string> methods;
  std::string form;       // localise: "uniform:<v>" or "wzw"
  std::string out;        // empty: standard output
  int threads = 0;        // 0: TKI_THREADS or hardware concurrency
  std::uint64_t seed = 1;
  int s3_mesh = 48;
  bool timings = false;
  double inject_tr_break = 0.0;  // validate: Zeeman term that breaks time reversal
  std::vector<std::string> validate_models{"trivial", "bhz2d", "fkm3d"};
  Tolerances tol;
  Sweep sweep;
};

// Throws Error(Usage) on invalid arguments. Returns nullopt after printing
// help or version text to `out`.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out);

ParamMap parse_params(const std::string& text);
std::vector<int> parse_grid(const std::string& text);

nlohmann::json report_to_json(const InvariantReport& report);
InvariantReport report_from_json(const nlohmann::json& j);
nlohmann::json trace_to_json(const LocalisationTrace& trace);

// 0 on consensus, 2 on disagreement, 3 when a method did not converge or none ran.
int exit_code_for(const InvariantReport& report);

BlochModel model_from_config(const RunConfig& cfg);

int cmd_invariant(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_phase_diagram(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_localise(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Full command-line entry point; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tki::cli
