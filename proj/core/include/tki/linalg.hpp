#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tki {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

struct EigResult {
  RVector values;   // ascending
  CMatrix vectors;  // columns are orthonormal eigenvectors
};

// Eigen-decomposition of a Hermitian matrix. Throws NonSquare / NonHermitian.
EigResult hermitian_eig(const CMatrix& h);

// Pfaffian of a complex skew-symmetric matrix (Parlett-Reid elimination with
// partial pivoting). Throws NonSquare / OddDimension / NotSkew.
cplx pfaffian(const CMatrix& a);

// Unitary factor of the polar decomposition M = U P. Throws NearSingular.
CMatrix polar_unitary(const CMatrix& m);

struct PhaseTrack {
  std::vector<double> phases;
  double raw_winding = 0.0;  // (phase_end - phase_start) / 2pi
  long winding = 0;          // raw_winding rounded
};

// Continuous argument along a sampled path of nonzero complex numbers.
// Throws ZeroEntry, or UndersampledPath when consecutive samples differ by
// more than pi/2 in phase.
PhaseTrack phase_continue(std::span<const cplx> z);

// Helpers shared by the geometric modules.
CMatrix anti_hermitian_part(const CMatrix& m);
// Principal logarithm of a unitary matrix (anti-Hermitian result, eigenphases in (-pi, pi]).
CMatrix log_unitary(const CMatrix& u);
// Eigenphases of a unitary matrix, in (-pi, pi].
RVector unitary_phases(const CMatrix& u);
// exp(a) for anti-Hermitian a.
CMatrix exp_anti_hermitian(const CMatrix& a);
double op_norm(const CMatrix& m);
double max_abs(const CMatrix& m);
// Antiunitary sanity: U unitary and U conj(U) = -1.
double kramers_defect(const CMatrix& u);

}  // namespace tki
