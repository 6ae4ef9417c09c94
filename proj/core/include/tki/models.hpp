#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tki/grid.hpp"
#include "tki/linalg.hpp"

namespace tki {

// Antiunitary psi -> U conj(psi) with U conj(U) = -1.
struct TimeReversalOperator {
  CMatrix U;

  CMatrix apply(const CMatrix& psi) const { return U * psi.conjugate(); }
  // Theta H Theta^{-1} = U conj(H) U^dagger.
  CMatrix conjugate(const CMatrix& h) const { return U * h.conjugate() * U.adjoint(); }
};

// Block-diagonal structure of a Hamiltonian: the listed bands never mix with
// the rest and hold n_occ occupied states. Direct sums expose their summands
// this way so diagonalization and gauge fixing act per summand.
struct BandBlock {
  std::vector<int> bands;
  int n_occ = 0;
};

enum class DomainKind { Torus, Sphere3 };

using ParamMap = std::map<std::string, double>;

struct BlochModel {
  std::string name;
  ParamMap params;
  DomainKind domain = DomainKind::Torus;
  int dim = 3;  // torus dimension; 3 for the sphere
  int n_bands = 0;
  int n_occ = 0;
  TimeReversalOperator theta;
  std::vector<BandBlock> blocks;
  // Torus models take (k_0, ..., k_{d-1}); sphere models take a unit vector
  // (n_0, n_1, n_2, n_3) in R^4, n_0 being the axis fixed by the involution.
  std::function<CMatrix(std::span<const double>)> hamiltonian;
  // Sphere models: a unitary C with C H C^dagger = -H, used to build a global frame.
  std::optional<CMatrix> chiral;
  // Ingested models: the grid the samples live on.
  std::optional<BZGrid> sampled_grid;
};

std::vector<std::string> registered_models();

// Builds a registry model; missing parameters fall back to documented defaults.
// Throws UnknownModel, BadParams, SymmetryViolation, Gapless.
BlochModel make_model(const std::string& name, const ParamMap& params = {});

// Same as make_model without the symmetry and gap check; for parameter scans
// that must be able to land on a gap closing.
BlochModel make_model_unchecked(const std::string& name, const ParamMap& params = {});

// Block direct sum A + B with Theta_A + Theta_B.
BlochModel direct_sum(const BlochModel& a, const BlochModel& b);

// Adds eps * (1 (x) sigma_z), which is odd under time reversal. Used to check
// that symmetry diagnostics fire.
BlochModel with_zeeman(const BlochModel& model, double eps);

// Torus: k has dim entries (any real values, periodic). Sphere: hyperspherical
// angles (b1, b2, b3) with b1, b2 in [0, pi]; see sphere_point.
CMatrix evaluate(const BlochModel& model, std::span<const double> k);

// Embedding of hyperspherical angles:
// n1 = cos b1, n2 = sin b1 cos b2, n3 = sin b1 sin b2 cos b3, n0 = sin b1 sin b2 sin b3.
std::array<double, 4> sphere_point(double b1, double b2, double b3);

struct ValidationReport {
  double tr_residual = 0.0;
  double min_gap = 0.0;
  bool kramers_ok = true;
  double hermiticity = 0.0;
};

ValidationReport validate_model(const BlochModel& model, const BZGrid& grid);

// Sampled-Hamiltonian documents (JSON text).
BlochModel ingest_sampled(const std::string& json_text);
std::string export_sampled(const BlochModel& model, const BZGrid& grid);

// Standard per-orbital Kramers operator 1_orb (x) i sigma_y.
CMatrix kramers_unitary(int n_bands);

}  // namespace tki
