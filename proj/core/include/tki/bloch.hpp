#pragma once

#include <vector>

#include "tki/grid.hpp"
#include "tki/linalg.hpp"
#include "tki/models.hpp"

namespace tki {

// Occupied columns belonging to one band block: frames carry the block's
// states in columns [col0, col0 + n_occ) and zeros outside its bands.
struct FrameBlock {
  std::vector<int> bands;
  int col0 = 0;
  int n_occ = 0;
};

struct FrameField {
  BZGrid grid;
  int n_bands = 0;
  int n_occ = 0;
  std::vector<FrameBlock> blocks;
  std::vector<CMatrix> frames;     // n_bands x n_occ per node
  std::vector<RVector> energies;   // occupied eigenvalues per node
  double smoothness = 0.0;         // max over links of |1 - u(k)^dagger u(k + delta)|_2
};

struct SewingField {
  BZGrid grid;
  std::vector<CMatrix> w;          // m x m per node
  std::vector<double> det_phase;   // continuous phase of det w (filled by su_reduce)
  bool su_reduced = false;
  double smoothness = 0.0;         // smoothness of the frames it was built from
};

struct ConnectionField {
  BZGrid grid;
  // A[axis][node]: link variable on the edge from node along +axis.
  std::vector<std::vector<CMatrix>> A;
  double quaternionic_residual = -1.0;  // negative until measured
};

// Link overlap deficiency used as the smoothness metric.
double link_deficiency(const CMatrix& a, const CMatrix& b);
double measure_smoothness(const BZGrid& grid, const std::vector<CMatrix>& frames);

// Throws GaplessAt, EigFailure, IncompatibleGrid.
FrameField diagonalize_grid(const BlochModel& model, const BZGrid& grid);

// Frames on a 2D slice of a 3D model: the plane with k_axis fixed at the given node index.
FrameField diagonalize_plane(const BlochModel& model, const BZGrid& grid3, int axis, int node);

struct GaugeOptions {
  // Checkerboard over-relaxation sweeps that maximize sum Re tr u(k)^dagger u(k').
  int relax_sweeps = 400;
  double overrelax = 1.8;
  // Stop once a sweep raises the link functional by less than this fraction.
  double relax_tolerance = 1e-9;
};

// Periodic gauge that varies slowly from node to node. Throws ChernObstruction, ConvergenceFailure.
FrameField smooth_gauge(const FrameField& raw, const GaugeOptions& options = {});

// Right-multiplies every frame by a per-node unitary (m x m).
FrameField apply_gauge(const FrameField& frames, const std::vector<CMatrix>& a);

// w_ab(k) = <u_a(-k), Theta u_b(k)>. Throws RoughGauge if smoothness > 0.5.
SewingField sewing_field(const FrameField& frames, const TimeReversalOperator& theta);
SewingField sewing_field_unchecked(const FrameField& frames, const TimeReversalOperator& theta);

// Divides out a continuous phase of det w so that det w = 1. Throws DetWinding.
SewingField su_reduce(const SewingField& wfield);

struct SewingDiagnostics {
  double unitarity = 0.0;     // max |w^dagger w - 1|
  double involution = 0.0;    // max |w(-k) + w(k)^T|
  double trim_skew = 0.0;     // max over TRIMs |w + w^T|
};
SewingDiagnostics sewing_diagnostics(const SewingField& wfield);

ConnectionField berry_connection(const FrameField& frames);

// Z2 average A' = (A + Phi(A)) / 2 where Phi is the lattice version of
// A -> [w^dagger (tau^* A) w - w^dagger dw]^T. Throws GaugeMismatch.
ConnectionField quaternionic_average(const ConnectionField& conn, const SewingField& wfield);
// max over links |A - Phi(A)|.
double quaternionic_residual(const ConnectionField& conn, const SewingField& wfield);

// Lattice Chern numbers (gauge-invariant plaquette flux) of every coordinate
// plane of a 3D grid, or of the whole torus of a 2D grid.
struct PlaneChern {
  int axis_a = 0, axis_b = 1;
  int fixed_axis = -1;  // -1 for 2D grids
  int fixed_node = 0;
  double flux = 0.0;    // total flux / 2 pi
};
std::vector<PlaneChern> plane_chern_numbers(const FrameField& frames);

// Frames on the plane k_axis = const pulled out of a 3D field.
FrameField restrict_to_plane(const FrameField& frames3, int axis, int node);

}  // namespace tki
