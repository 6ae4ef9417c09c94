#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tki/bloch.hpp"
#include "tki/models.hpp"

namespace tki {

struct TrimPfaffianResult {
  int parity = 1;
  std::vector<NodeIndex> trims;
  std::vector<cplx> pfaffians;
  double residual = 0.0;  // max over TRIMs of |pf - (+/-1)|
};

// Product of Pfaffians of the SU-reduced sewing matrix at the TRIMs.
// Throws NonSkewTrim, PfaffianOffCircle.
TrimPfaffianResult km_trim_pfaffian(const SewingField& su);

struct PlaneResult {
  int parity = 1;
  double raw = 0.0;        // boundary Berry phase minus enclosed flux, over 2 pi
  double deviation = 0.0;  // distance of raw from the nearest integer
};

// Z2 index of an involution-invariant 2-torus from its frames (any gauge).
// Throws BoundaryGaugeFailure.
PlaneResult km_plane_invariant(const FrameField& plane, const TimeReversalOperator& theta);

struct WeakStrongResult {
  int strong = 1;
  std::array<int, 3> weak{1, 1, 1};            // nu(k_a = pi)
  std::array<int, 3> strong_by_axis{1, 1, 1};  // nu(k_a = 0) nu(k_a = pi)
  std::array<std::array<PlaneResult, 2>, 3> planes{};  // [axis][0: k_a = 0, 1: k_a = pi]
  double deviation = 0.0;
};

// Throws AxisInconsistency, IncompatibleGrid.
WeakStrongResult km_weak_strong(const BlochModel& model, const BZGrid& grid);

enum class WzwScheme {
  Forward,  // w(k)^-1 (w(k + e_a) - w(k)) / h at the anchor corner
  Centred,  // edge-averaged differences and the averaged corner value of each cube
  // Signed S^3 volume swept by each cube (Kuhn triangulation, geodesic simplices)
  // for the 2x2 diagonal blocks of w; other block sizes fall back to Centred.
  Simplicial,
};

// Per-cube WZW density times cube volume, indexed by anchor node.
// Throws RoughGauge when a cube is too coarse for the simplicial scheme.
std::vector<double> wzw_cube_values(const SewingField& su, WzwScheme scheme = WzwScheme::Forward);

// Frame smoothness limit for a scheme: 0.3 for finite differences, 0.5 for Simplicial.
void check_wzw_smoothness(const SewingField& su, WzwScheme scheme);

struct WzwResult {
  double integral = 0.0;
  long nearest = 0;
  int parity = 1;
  double residual = 0.0;
};

// Throws RoughGauge (see check_wzw_smoothness), NonConvergent.
WzwResult km_wzw(const SewingField& su, WzwScheme scheme = WzwScheme::Simplicial);

struct WindingResult {
  long index = 0;
  int parity = 1;
  double sum = 0.0;
  double residual = 0.0;
  std::vector<double> slices;  // s(theta_j)
};

WindingResult km_winding(const SewingField& su, int family_axis = 2, WzwScheme scheme = WzwScheme::Simplicial);

struct ChernSimonsResult {
  double cs = 0.0;
  int parity = 1;
  double relation_residual = 0.0;
  double wzw_integral = 0.0;
  double residual = 0.0;  // distance of 2 cs from the nearest integer
};

// Throws UnaveragedConnection, NonConvergent.
ChernSimonsResult km_chern_simons(const ConnectionField& conn, const SewingField& su);

struct S3Result {
  int parity = 1;
  double upsilon = 0.0;  // full-sphere quadrature
  double rho0_N = 0.0;
  double rho0_S = 0.0;
  std::array<double, 4> level_integrals{};  // dimensions 3, 2, 1, 0
  double symmetric_part = 0.0;
  double min_gap = 0.0;
  double residual = 0.0;
};

// mesh: polar angles get `mesh` cells each and the azimuth 2 * mesh cells.
// Throws IncompatibleGrid, GaplessAt, NonConvergent.
S3Result km_s3(const BlochModel& model, int mesh);

struct MethodResult {
  int parity = 1;
  double raw = 0.0;
  double residual = 0.0;
  double runtime_ms = 0.0;

  bool operator==(const MethodResult&) const = default;
};

struct InvariantReport {
  std::string model;
  ParamMap params;
  std::vector<int> grid;
  std::map<std::string, MethodResult> methods;
  std::vector<cplx> trim_pfaffians;
  std::optional<std::array<int, 3>> weak;
  std::optional<int> strong;
  bool consensus = true;
  std::vector<std::string> unconverged;  // requested methods that produced no parity
  std::vector<std::string> notes;

  bool operator==(const InvariantReport&) const = default;
};

// Sets consensus from the method parities.
void finalize_consensus(InvariantReport& report);

const std::vector<std::string>& known_methods();

struct PipelineOptions {
  GaugeOptions gauge;
  int winding_axis = 2;
  int s3_mesh = 48;
  // Wall-clock runtimes make reports non-reproducible, so they are opt-in.
  bool record_timings = false;
};

// Runs the requested methods ("pfaffian", "planes", "wzw", "winding", "cs",
// "s3", "localise") and assembles a report. A method that fails to converge
// (NonConvergent, RoughGauge, PfaffianOffCircle, AxisInconsistency,
// UnaveragedConnection) is listed in `unconverged`, explained in notes and left
// out of the consensus.
InvariantReport compute_report(const BlochModel& model, const std::vector<int>& grid,
                               const std::vector<std::string>& methods, const PipelineOptions& options = {});

// Shared front half of the torus pipeline.
struct SewingPipeline {
  FrameField raw;
  FrameField smooth;
  SewingField w;
  SewingField su;
};
SewingPipeline build_sewing(const BlochModel& model, const BZGrid& grid, const GaugeOptions& options = {});

}  // namespace tki
