#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tki/bloch.hpp"
#include "tki/grid.hpp"
#include "tki/invariants.hpp"

namespace tki {

// Real cubical cochain on a periodic grid: one value per oriented p-cube,
// i.e. per (axis subset S with |S| = p, anchor node n). The cube spans
// n + sum_{a in S} [0, 1] e_a.
class Cochain {
 public:
  Cochain() = default;
  // Throws WrongDegree if degree > grid.dim().
  Cochain(BZGrid grid, int degree);

  const BZGrid& grid() const { return grid_; }
  int degree() const { return degree_; }
  // Axis subsets as bitmasks, ordered lexicographically by their sorted axes.
  const std::vector<unsigned>& subsets() const { return subsets_; }
  std::size_t component_index(unsigned mask) const;

  double at(unsigned mask, NodeIndex n) const { return values_[component_index(mask)][n]; }
  double& at(unsigned mask, NodeIndex n) { return values_[component_index(mask)][n]; }
  std::vector<double>& component(std::size_t c) { return values_[c]; }
  const std::vector<double>& component(std::size_t c) const { return values_[c]; }

  double norm1() const;
  double max_abs() const;

  bool operator==(const Cochain& other) const = default;

 private:
  BZGrid grid_;
  int degree_ = 0;
  std::vector<unsigned> subsets_;
  std::vector<std::vector<double>> values_;
};

unsigned full_mask(int dim);

// Coboundary. Throws TopDegree for degree = dim.
Cochain d(const Cochain& c);

// (tau^* c)(n, S) = (-1)^{|S|} c(-n - sum_{a in S} e_a, S).
Cochain involution_pullback(const Cochain& c);

struct PlusMinus {
  Cochain plus;
  Cochain minus;
};
PlusMinus project_pm(const Cochain& c);

enum class Region { All, FundamentalDomain, ImageDomain };

// Sum of a top cochain over a region. The fundamental domain holds anchors with
// n_a in [N/2, N - 1] on `axis` (default: the grid's fundamental-domain axis);
// the image domain is its involution image. Throws WrongDegree.
double integrate(const Cochain& c, Region region = Region::All, int axis = -1);

// Primitive on the closed half V = {N/2 <= n_a <= N} by cumulative summation
// along `axis`, zero on the slice n_a = N/2. Values at n_a = N are stored in
// the slice n_a = 0. Throws WrongDegree for degree 0.
Cochain primitive_on_half(const Cochain& c, int axis);

// rho = o * (eta + sign * tau^* eta) on the slices n_a in {0, N/2}, where o
// orients each slice as a boundary component of V (outward normal +e_a at
// n_a = 0, i.e. k_a = pi).
Cochain boundary_rho(const Cochain& eta, int axis, int sign);

struct LocalisationLevel {
  int dimension = 0;
  int axis = -1;                // axis used to descend from this level (-1 at dimension 0)
  Cochain rho;
  std::optional<Cochain> eta;   // primitive built on this level
  double integral = 0.0;
};

struct LocalisationTrace {
  std::vector<int> axes;
  std::vector<LocalisationLevel> levels;
  std::vector<std::pair<NodeIndex, double>> fixed_values;  // TRIM node -> rho^0
  double total = 0.0;
  std::optional<int> parity;  // set when total is within 0.25 of an integer
};

// Descends a top cochain with tau^* c = (-1)^dim c down to the fixed points.
// Default axis order is dim-1, ..., 0. Throws ParityViolation, WrongDegree.
LocalisationTrace localise(const Cochain& c, std::vector<int> axes = {});

// Uniform top density summing to upsilon.
Cochain uniform_form(const BZGrid& grid, double upsilon);

struct SampledForm {
  Cochain cochain;               // odd part of the sampled WZW density
  double symmetric_norm1 = 0.0;  // 1-norm of the discarded even part
};

// Throws RoughGauge.
SampledForm sample_wzw(const SewingField& su, WzwScheme scheme = WzwScheme::Simplicial);

}  // namespace tki
