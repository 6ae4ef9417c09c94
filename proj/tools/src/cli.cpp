#include "tki/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "tki/error.hpp"
#include "tki/parallel.hpp"

namespace tki::cli {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Usage, "cannot parse " + what + " '" + text + "'");
  }
}

void write_output(const RunConfig& cfg, const std::string& text, std::ostream& out) {
  if (cfg.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(cfg.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + cfg.out + "' for writing");
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write to '" + cfg.out + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int exit_code_for_error(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NonConvergent:
    case ErrorCode::ConvergenceFailure:
    case ErrorCode::RoughGauge:
    case ErrorCode::ChernObstruction:
    case ErrorCode::NearSingular:
    case ErrorCode::DetWinding:
    case ErrorCode::BoundaryGaugeFailure:
    case ErrorCode::AxisInconsistency:
    case ErrorCode::PfaffianOffCircle:
    case ErrorCode::UnaveragedConnection:
    case ErrorCode::EigFailure:
    case ErrorCode::UndersampledPath:
      return kNonConvergent;
    default:
      return kUsage;
  }
}

std::vector<int> grid_for(const RunConfig& cfg, const BlochModel& model, int fallback) {
  if (model.sampled_grid && cfg.grid.empty()) return model.sampled_grid->sizes();
  std::vector<int> g = cfg.grid.empty() ? std::vector<int>{fallback} : cfg.grid;
  if (g.size() == 1) g.assign(static_cast<std::size_t>(model.dim), g[0]);
  if (static_cast<int>(g.size()) != model.dim) {
    throw Error(ErrorCode::Usage, "grid has " + std::to_string(g.size()) + " sizes but the model is " +
                                      std::to_string(model.dim) + "-dimensional");
  }
  return g;
}

std::vector<std::string> default_methods(const BlochModel& model) {
  if (model.domain == DomainKind::Sphere3) return {"s3"};
  if (model.dim == 2) return {"pfaffian", "planes"};
  return {"pfaffian", "planes", "wzw", "winding"};
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "NaN";
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

}  // namespace

ParamMap parse_params(const std::string& text) {
  ParamMap out;
  for (const auto& item : split(text, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Usage, "parameter '" + item + "' is not key=value");
    out[item.substr(0, eq)] = parse_number(item.substr(eq + 1), "parameter " + item.substr(0, eq));
  }
  return out;
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) {
    double v = parse_number(item, "grid size");
    int n = static_cast<int>(v);
    if (v != n || n < 8 || n % 2 != 0) throw Error(ErrorCode::Usage, "grid sizes must be even integers >= 8, got '" + item + "'");
    out.push_back(n);
  }
  if (out.empty() || out.size() > 3) throw Error(ErrorCode::Usage, "grid needs 1 to 3 sizes");
  return out;
}

std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out) {
  RunConfig cfg;
  CLI::App app{"Z2 (Kane-Mele) invariants of time-reversal-symmetric band structures", "tki"};
  app.require_subcommand(1);
  std::string params, grid, methods, validate_models;
  std::optional<int> dim, m;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "registry model name");
    sub->add_option("--params", params, "model parameters k=v,...");
    sub->add_option("--dim", dim, "trivial model: torus dimension (2 or 3)");
    sub->add_option("--m", m, "trivial model: number of occupied bands");
    sub->add_option("--ingest", cfg.ingest_path, "sampled Hamiltonian document to use as the model");
    sub->add_option("--grid", grid, "grid sizes N or N,N,N (even, >= 8)");
    sub->add_option("--methods", methods, "comma-separated subset of pfaffian,planes,wzw,winding,cs,s3,localise");
    sub->add_option("--out", cfg.out, "output file (default: standard output)");
    sub->add_option("--threads", cfg.threads, "worker threads (default: TKI_THREADS or all cores)");
    sub->add_option("--seed", cfg.seed, "seed for randomized checks");
    sub->add_option("--s3-mesh", cfg.s3_mesh, "angular cells per polar angle for sphere models");
    sub->add_flag("--timings", cfg.timings, "record method runtimes in reports");
    sub->add_option("--tol-sewing", cfg.tol.sewing, "sewing unitarity / tau-relation / TRIM skewness");
    sub->add_option("--tol-kramers", cfg.tol.kramers, "Kramers degeneracy and orthogonality");
    sub->add_option("--tol-chern", cfg.tol.chern, "plane Chern number residual");
    sub->add_option("--tol-quaternionic", cfg.tol.quaternionic, "averaged connection residual");
    sub->add_option("--tol-gap", cfg.tol.gap, "gap below which a sweep point counts as gapless");
    sub->add_option("--tol-localise", cfg.tol.localise, "relative fixed-point sum error");
  };

  CLI::App* inv = app.add_subcommand("invariant", "compute the Z2 invariant by several methods");
  add_common(inv);
  CLI::App* pd = app.add_subcommand("phase-diagram", "sweep one parameter and write CSV");
  add_common(pd);
  pd->add_option("--sweep", cfg.sweep.param, "parameter to sweep")->required();
  pd->add_option("--from", cfg.sweep.from, "first value");
  pd->add_option("--to", cfg.sweep.to, "last value");
  pd->add_option("--steps", cfg.sweep.steps, "number of points")->check(CLI::PositiveNumber);
  CLI::App* loc = app.add_subcommand("localise", "descend a top form to the fixed points and dump the trace");
  add_common(loc);
  loc->add_option("--form", cfg.form, "uniform:<v> or wzw")->required();
  CLI::App* val = app.add_subcommand("validate", "run the property suite");
  add_common(val);
  val->add_option("--inject-tr-break", cfg.inject_tr_break, "add a time-reversal-breaking Zeeman term of this size");
  val->add_option("--models", validate_models, "comma-separated registry models to check");
  CLI::App* ing = app.add_subcommand("ingest", "validate a sampled Hamiltonian and cache its normalized form");
  add_common(ing);
  std::string ingest_positional;
  ing->add_option("path", ingest_positional, "sampled Hamiltonian JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCode::Usage, e.what());
  }

  for (CLI::App* sub : {inv, pd, loc, val, ing}) {
    if (sub->parsed()) cfg.command = sub->get_name();
  }
  if (!params.empty()) cfg.params = parse_params(params);
  if (dim) cfg.params["d"] = *dim;
  if (m) cfg.params["m"] = *m;
  if (!grid.empty()) cfg.grid = parse_grid(grid);
  if (!methods.empty()) {
    cfg.methods = split(methods, ',');
    for (const auto& name : cfg.methods) {
      if (std::find(known_methods().begin(), known_methods().end(), name) == known_methods().end()) {
        throw Error(ErrorCode::Usage, "unknown method '" + name + "'");
      }
    }
  }
  if (!validate_models.empty()) cfg.validate_models = split(validate_models, ',');
  if (!ingest_positional.empty()) cfg.ingest_path = ingest_positional;
  if (cfg.threads < 0) throw Error(ErrorCode::Usage, "--threads must be >= 0");
  if (cfg.s3_mesh < 4 || cfg.s3_mesh % 2 != 0) throw Error(ErrorCode::Usage, "--s3-mesh must be even and >= 4");
  if (cfg.command == "ingest" && cfg.ingest_path.empty()) throw Error(ErrorCode::Usage, "ingest needs a file path");
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON

json report_to_json(const InvariantReport& report) {
  json j;
  j["model"] = {{"name", report.model}, {"params", report.params}};
  j["grid"] = report.grid;
  json methods = json::object();
  for (const auto& [name, r] : report.methods) {
    methods[name] = {{"parity", r.parity}, {"raw", r.raw}, {"residual", r.residual}, {"runtime_ms", r.runtime_ms}};
  }
  j["methods"] = methods;
  json pf = json::array();
  for (const auto& z : report.trim_pfaffians) pf.push_back({z.real(), z.imag()});
  j["trim_pfaffians"] = pf;
  j["weak"] = report.weak ? json(*report.weak) : json(nullptr);
  j["strong"] = report.strong ? json(*report.strong) : json(nullptr);
  j["consensus"] = report.consensus;
  j["unconverged"] = report.unconverged;
  j["notes"] = report.notes;
  return j;
}

InvariantReport report_from_json(const json& j) {
  try {
    InvariantReport r;
    r.model = j.at("model").at("name").get<std::string>();
    r.params = j.at("model").at("params").get<ParamMap>();
    r.grid = j.at("grid").get<std::vector<int>>();
    for (const auto& [name, m] : j.at("methods").items()) {
      r.methods[name] = {m.at("parity").get<int>(), m.at("raw").get<double>(), m.at("residual").get<double>(),
                         m.at("runtime_ms").get<double>()};
    }
    for (const auto& z : j.at("trim_pfaffians")) r.trim_pfaffians.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
    if (!j.at("weak").is_null()) r.weak = j.at("weak").get<std::array<int, 3>>();
    if (!j.at("strong").is_null()) r.strong = j.at("strong").get<int>();
    r.consensus = j.at("consensus").get<bool>();
    if (j.contains("unconverged")) r.unconverged = j.at("unconverged").get<std::vector<std::string>>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("report: ") + e.what());
  }
}

json trace_to_json(const LocalisationTrace& trace) {
  json j;
  j["axes"] = trace.axes;
  json levels = json::array();
  for (const auto& lv : trace.levels) {
    levels.push_back({{"dimension", lv.dimension}, {"axis", lv.axis}, {"integral", lv.integral}});
  }
  j["levels"] = levels;
  json fixed = json::array();
  if (!trace.levels.empty()) {
    const BZGrid& g = trace.levels.front().rho.grid();
    for (const auto& [node, value] : trace.fixed_values) {
      Coords c = g.coords(node);
      json coords = json::array(), k = json::array();
      for (int a = 0; a < g.dim(); ++a) {
        coords.push_back(c[static_cast<std::size_t>(a)]);
        k.push_back(g.k(a, c[static_cast<std::size_t>(a)]));
      }
      fixed.push_back({{"node", node}, {"coords", coords}, {"k", k}, {"value", value}});
    }
  }
  j["fixed_values"] = fixed;
  j["total"] = trace.total;
  j["parity"] = trace.parity ? json(*trace.parity) : json(nullptr);
  return j;
}

int exit_code_for(const InvariantReport& report) {
  if (!report.consensus) return kDisagreement;
  if (report.methods.empty() || !report.unconverged.empty()) return kNonConvergent;
  return kOk;
}

BlochModel model_from_config(const RunConfig& cfg) {
  if (!cfg.ingest_path.empty()) {
    if (!cfg.model.empty()) throw Error(ErrorCode::Usage, "--model and --ingest are mutually exclusive");
    return ingest_sampled(read_file(cfg.ingest_path));
  }
  if (cfg.model.empty()) throw Error(ErrorCode::Usage, "--model or --ingest is required");
  return make_model(cfg.model, cfg.params);
}

// ---------------------------------------------------------------------------
// Commands

namespace {

PipelineOptions pipeline_options(const RunConfig& cfg) {
  PipelineOptions o;
  o.s3_mesh = cfg.s3_mesh;
  o.record_timings = cfg.timings;
  return o;
}

}  // namespace

int cmd_invariant(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  BlochModel model = model_from_config(cfg);
  std::vector<int> grid = model.domain == DomainKind::Sphere3 ? std::vector<int>{} : grid_for(cfg, model, 16);
  std::vector<std::string> methods = cfg.methods.empty() ? default_methods(model) : cfg.methods;
  InvariantReport report = compute_report(model, grid, methods, pipeline_options(cfg));
  write_output(cfg, report_to_json(report).dump(2) + "\n", out);
  return exit_code_for(report);
}

int cmd_phase_diagram(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.model.empty()) throw Error(ErrorCode::Usage, "phase-diagram needs --model");
  const int steps = cfg.sweep.steps;
  std::ostringstream csv;
  csv << "param,gap,parity_pfaffian,parity_planes,parity_wzw,consensus,gapless\n";
  bool any_disagreement = false;
  bool any_failure = false;
  for (int s = 0; s < steps; ++s) {
    double value = steps == 1 ? cfg.sweep.from : cfg.sweep.from + (cfg.sweep.to - cfg.sweep.from) * s / (steps - 1);
    ParamMap params = cfg.params;
    params[cfg.sweep.param] = value;
    BlochModel model = make_model_unchecked(cfg.model, params);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double gap = nan;
    double parity[3] = {nan, nan, nan};
    bool gapless = false;
    bool consensus = false;
    try {
      if (model.domain == DomainKind::Sphere3) {
        try {
          S3Result r = km_s3(model, cfg.s3_mesh);
          gap = r.min_gap;
          gapless = gap <= cfg.tol.gap;
          if (!gapless) parity[2] = r.parity;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::GaplessAt) throw;
          gap = 0.0;
          gapless = true;
        }
      } else {
        std::vector<int> sizes = grid_for(cfg, model, 16);
        BZGrid grid(sizes);
        ValidationReport v = validate_model(model, grid);
        gap = v.min_gap;
        gapless = gap <= cfg.tol.gap;
        if (!gapless) {
          std::vector<std::string> methods = {"pfaffian", "planes"};
          if (model.dim == 3) methods.push_back("wzw");
          InvariantReport report = compute_report(model, sizes, methods, pipeline_options(cfg));
          const char* names[3] = {"pfaffian", "planes", "wzw"};
          for (int k = 0; k < 3; ++k) {
            auto it = report.methods.find(names[k]);
            if (it != report.methods.end()) parity[k] = it->second.parity;
          }
          if (!report.unconverged.empty()) {
            any_failure = true;
            for (const auto& note : report.notes) {
              for (const auto& name : report.unconverged) {
                if (note.rfind(name + ":", 0) == 0) err << "param=" << fmt_double(value) << ": " << note << "\n";
              }
            }
          }
        }
      }
    } catch (const Error& e) {
      err << "param=" << fmt_double(value) << ": " << e.what() << "\n";
      any_failure = true;
    }
    if (!gapless) {
      std::optional<double> first;
      consensus = true;
      int present = 0;
      for (double p : parity) {
        if (std::isnan(p)) continue;
        ++present;
        if (!first) first = p;
        else if (*first != p) consensus = false;
      }
      if (present == 0) consensus = false;
      if (present > 0 && !consensus) any_disagreement = true;
    }
    csv << fmt_double(value) << ',' << fmt_double(gap) << ',' << fmt_double(parity[0]) << ',' << fmt_double(parity[1])
        << ',' << fmt_double(parity[2]) << ',' << (consensus ? "true" : "false") << ',' << (gapless ? "true" : "false")
        << "\n";
  }
  write_output(cfg, csv.str(), out);
  if (any_disagreement) return kDisagreement;
  if (any_failure) return kNonConvergent;
  return kOk;
}

int cmd_localise(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  Cochain form;
  if (cfg.form.rfind("uniform:", 0) == 0) {
    double upsilon = parse_number(cfg.form.substr(8), "uniform density");
    std::vector<int> sizes = cfg.grid.empty() ? std::vector<int>{8} : cfg.grid;
    if (sizes.size() == 1) sizes.assign(3, sizes[0]);
    form = uniform_form(BZGrid(sizes), upsilon);
  } else if (cfg.form == "wzw") {
    BlochModel model = model_from_config(cfg);
    if (model.domain != DomainKind::Torus || model.dim != 3) {
      throw Error(ErrorCode::Usage, "--form wzw needs a 3-torus model");
    }
    BZGrid grid(grid_for(cfg, model, 16));
    SewingPipeline pipe = build_sewing(model, grid);
    form = sample_wzw(pipe.su).cochain;
  } else {
    throw Error(ErrorCode::Usage, "--form must be uniform:<v> or wzw");
  }
  LocalisationTrace trace = localise(form);
  write_output(cfg, trace_to_json(trace).dump(2) + "\n", out);
  return trace.parity ? kOk : kNonConvergent;
}

namespace {

struct PropertyCheck {
  std::string model;
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(std::string model) : model_(std::move(model)) {}

  void at_most(const std::string& name, double value, double tol) {
    checks.push_back({model_, name, value, tol, value <= tol, ""});
  }
  void at_least(const std::string& name, double value, double tol) {
    checks.push_back({model_, name, value, tol, value >= tol, ""});
  }
  void failed(const std::string& name, const std::string& detail) {
    checks.push_back({model_, name, std::numeric_limits<double>::quiet_NaN(), 0.0, false, detail});
  }

  std::vector<PropertyCheck> checks;

 private:
  std::string model_;
};

// Kramers degeneracy of the occupied levels and <psi, Theta psi> at the TRIMs.
std::pair<double, double> kramers_defects(const FrameField& frames, const TimeReversalOperator& theta) {
  double degeneracy = 0.0, overlap = 0.0;
  for (NodeIndex t : frames.grid.trims()) {
    const RVector& e = frames.energies[t];
    RVector sorted = e;
    std::sort(sorted.begin(), sorted.end());
    for (Eigen::Index i = 0; i + 1 < sorted.size(); i += 2) degeneracy = std::max(degeneracy, std::abs(sorted(i + 1) - sorted(i)));
    const CMatrix& u = frames.frames[t];
    CMatrix tu = theta.apply(u);
    for (Eigen::Index c = 0; c < u.cols(); ++c) overlap = std::max(overlap, std::abs(u.col(c).dot(tu.col(c))));
  }
  return {degeneracy, overlap};
}

void check_model(Suite& suite, const BlochModel& model, const RunConfig& cfg, int n) {
  std::vector<int> sizes(static_cast<std::size_t>(model.dim), n);
  BZGrid grid(sizes);
  ValidationReport v = validate_model(model, grid);
  suite.at_most("hamiltonian.hermiticity", v.hermiticity, cfg.tol.sewing);
  suite.at_most("hamiltonian.time_reversal", v.tr_residual, cfg.tol.sewing);
  suite.at_least("bands.gap", v.min_gap, cfg.tol.gap);
  FrameField raw = diagonalize_grid(model, grid);
  auto [degeneracy, overlap] = kramers_defects(raw, model.theta);
  suite.at_most("bands.kramers_degeneracy", degeneracy, cfg.tol.kramers);
  suite.at_most("bands.kramers_orthogonality", overlap, cfg.tol.kramers);

  SewingDiagnostics sd = sewing_diagnostics(sewing_field_unchecked(raw, model.theta));
  suite.at_most("sewing.unitarity", sd.unitarity, cfg.tol.sewing);
  suite.at_most("sewing.tau_relation", sd.involution, cfg.tol.sewing);
  suite.at_most("sewing.trim_skew", sd.trim_skew, cfg.tol.sewing);

  double chern = 0.0;
  for (const auto& pc : plane_chern_numbers(raw)) chern = std::max(chern, std::abs(pc.flux));
  suite.at_most("gauge.plane_chern", chern, cfg.tol.chern);

  try {
    SewingPipeline pipe = build_sewing(model, grid);
    TrimPfaffianResult pf = km_trim_pfaffian(pipe.su);
    int oracle = 1;
    if (model.dim == 3) oracle = km_weak_strong(model, grid).strong;
    else oracle = km_plane_invariant(raw, model.theta).parity;
    suite.at_most("invariants.pfaffian_matches_planes", pf.parity == oracle ? 0.0 : 1.0, 0.0);
    if (model.dim == 3) {
      ConnectionField avg = quaternionic_average(berry_connection(pipe.smooth), pipe.w);
      suite.at_most("connection.quaternionic_residual", quaternionic_residual(avg, pipe.w), cfg.tol.quaternionic);
      InvariantReport report = compute_report(model, sizes, {"pfaffian"}, {});
      suite.at_most("report.json_roundtrip", report_from_json(json::parse(report_to_json(report).dump())) == report ? 0.0 : 1.0, 0.0);
    }
  } catch (const Error& e) {
    suite.failed("invariants.pipeline", e.what());
  }
}

void check_eqforms(Suite& suite, const RunConfig& cfg) {
  BZGrid grid({8, 8, 8});
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Cochain c(grid, 3);
  for (double& x : c.component(0)) x = dist(rng);
  Cochain odd = project_pm(c).minus;
  LocalisationTrace trace = localise(odd);
  double sum = 0.0;
  for (const auto& [node, value] : trace.fixed_values) sum += value;
  suite.at_most("eqforms.localisation_exactness", std::abs(sum - integrate(odd)) / odd.norm1(), cfg.tol.localise);

  const int upsilon = static_cast<int>(cfg.seed % 5);
  LocalisationTrace u = localise(uniform_form(grid, upsilon));
  double worst = 0.0;
  const NodeIndex pi_node = grid.index({0, 0, 0});
  for (const auto& [node, value] : u.fixed_values) worst = std::max(worst, std::abs(value - (node == pi_node ? upsilon : 0.0)));
  suite.at_most("eqforms.uniform_example", worst, 1e-12);
}

}  // namespace

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const int n = cfg.grid.empty() ? 16 : cfg.grid[0];
  std::vector<PropertyCheck> checks;
  for (const auto& name : cfg.validate_models) {
    Suite suite(name);
    try {
      BlochModel model = make_model(name, name == cfg.model ? cfg.params : ParamMap{});
      if (cfg.inject_tr_break != 0.0) model = with_zeeman(model, cfg.inject_tr_break);
      if (model.domain == DomainKind::Sphere3) {
        S3Result r = km_s3(model, cfg.s3_mesh);
        suite.at_most("sphere.descent_matches_quadrature", std::abs(r.rho0_N - r.rho0_S - r.upsilon), 1e-3);
      } else {
        check_model(suite, model, cfg, n);
      }
    } catch (const Error& e) {
      suite.failed("model.setup", e.what());
    }
    checks.insert(checks.end(), suite.checks.begin(), suite.checks.end());
  }
  Suite forms("eqforms");
  check_eqforms(forms, cfg);
  checks.insert(checks.end(), forms.checks.begin(), forms.checks.end());

  bool all = std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.pass; });
  json j;
  j["seed"] = cfg.seed;
  j["grid"] = n;
  j["inject_tr_break"] = cfg.inject_tr_break;
  json props = json::array();
  for (const auto& c : checks) {
    json p = {{"model", c.model}, {"property", c.name}, {"pass", c.pass}, {"tolerance", c.tolerance}};
    p["value"] = std::isnan(c.value) ? json(nullptr) : json(c.value);
    if (!c.detail.empty()) p["detail"] = c.detail;
    props.push_back(p);
  }
  j["properties"] = props;
  j["all_pass"] = all;
  write_output(cfg, j.dump(2) + "\n", out);
  return all ? kOk : kValidationFailure;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  BlochModel model = ingest_sampled(read_file(cfg.ingest_path));
  const std::string cache = cfg.ingest_path + ".normalized.json";
  {
    std::ofstream f(cache, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write '" + cache + "'");
    f << export_sampled(model, *model.sampled_grid);
  }
  json j = {{"valid", true},
            {"name", model.name},
            {"grid", model.sampled_grid->sizes()},
            {"n_bands", model.n_bands},
            {"n_occ", model.n_occ},
            {"normalized", cache}};
  write_output(cfg, j.dump(2) + "\n", out);
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    std::optional<RunConfig> cfg = parse_args(argc, argv, out);
    if (!cfg) return kOk;
    int threads = cfg->threads;
    if (threads == 0) {
      if (const char* env = std::getenv("TKI_THREADS")) threads = static_cast<int>(parse_number(env, "TKI_THREADS"));
    }
    if (threads > 0) set_thread_count(threads);
    if (cfg->command == "invariant") return cmd_invariant(*cfg, out, err);
    if (cfg->command == "phase-diagram") return cmd_phase_diagram(*cfg, out, err);
    if (cfg->command == "localise") return cmd_localise(*cfg, out, err);
    if (cfg->command == "validate") return cmd_validate(*cfg, out, err);
    if (cfg->command == "ingest") return cmd_ingest(*cfg, out, err);
    throw Error(ErrorCode::Usage, "unknown command");
  } catch (const Error& e) {
    err << "tki: " << e.what() << "\n";
    return exit_code_for_error(e);
  } catch (const std::exception& e) {
    err << "tki: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace tki::cli
