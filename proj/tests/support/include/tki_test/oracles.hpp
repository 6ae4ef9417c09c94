#pragma once

#include <random>
#include <string>
#include <vector>

#include "tki/bloch.hpp"
#include "tki/grid.hpp"
#include "tki/linalg.hpp"
#include "tki/models.hpp"

namespace tki_test {

using tki::CMatrix;
using tki::cplx;

// Recursive expansion along the first row. Fine for dimension <= 8.
cplx cofactor_pfaffian(const CMatrix& a);

// Unwrapped argument of a sampled path, started at arg(z[0]).
std::vector<double> unwrap_phases(const std::vector<cplx>& z);

struct PlaneOracle {
  int parity = 1;
  cplx value;  // should sit on +-1
  double half_flux = 0.0;
};

// Z2 index of the occupied bands on a TR-invariant plane, from TRIM Pfaffians.
// Each of the two invariant loops k_b in {0, pi} gets its own continuous
// periodic frame (parallel transport plus closure), the square root of det w
// is continued from k_a = 0 to k_a = pi along the loop, and the loop factors
// are glued with the Berry phases and the lattice flux through the half zone.
// The free axes are the two axes other than fixed_axis (fixed_axis = -1 for a
// 2D model); fixed_k is 0 or pi.
PlaneOracle plane_oracle(const tki::BlochModel& model, int fixed_axis, double fixed_k, int n);

// Strong index nu(k_c = 0) nu(k_c = pi) using the planes normal to axis c.
int strong_oracle(const tki::BlochModel& model, int n, int axis = 2);

// Random matrices.
CMatrix random_matrix(int rows, int cols, std::mt19937_64& rng);
CMatrix random_hermitian(int n, std::mt19937_64& rng);
CMatrix random_unitary(int n, std::mt19937_64& rng);
CMatrix random_skew(int n, std::mt19937_64& rng);

// Smooth periodic gauge field a(k) in U(m): exp of a few low Fourier modes.
std::vector<CMatrix> smooth_random_gauge(const tki::BZGrid& grid, int m, double amplitude, std::mt19937_64& rng);

// SU(2) gauge field of degree `degree` in {-1, +1} on T^3, built from the
// lattice Dirac map (sin k_0, sin k_1, sin k_2, 2 + sum cos k_a), randomly
// rotated and shifted, embedded in the top-left 2x2 block of U(m).
std::vector<CMatrix> winding_gauge(const tki::BZGrid& grid, int m, int degree, std::mt19937_64& rng);

// Degree of the map T^3 -> S^3 used by winding_gauge, by direct counting of
// preimages of a regular value (independent of the WZW code).
int dirac_map_degree(double mass);

}  // namespace tki_test
