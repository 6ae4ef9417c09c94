#include "tki/eqforms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "tki/error.hpp"
#include "tki/invariants.hpp"

namespace tki {

namespace {

std::vector<unsigned> subsets_of_size(int dim, int p) {
  std::vector<unsigned> out;
  for (unsigned mask = 0; mask < (1u << dim); ++mask)
    if (std::popcount(mask) == p) out.push_back(mask);
  // Lexicographic in the sorted axis tuple.
  std::sort(out.begin(), out.end(), [dim](unsigned x, unsigned y) {
    for (int a = 0; a < dim; ++a) {
      bool bx = (x >> a) & 1u, by = (y >> a) & 1u;
      if (bx != by) return bx;
    }
    return false;
  });
  return out;
}

int position_in(unsigned mask, int axis) { return std::popcount(mask & ((1u << axis) - 1u)); }

// Neumaier-compensated running sum.
class Accumulator {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

NodeIndex mirror_anchor(const BZGrid& g, NodeIndex n, unsigned mask) {
  Coords c = g.coords(n);
  for (int a = 0; a < g.dim(); ++a) {
    c[static_cast<std::size_t>(a)] = -c[static_cast<std::size_t>(a)] - static_cast<int>((mask >> a) & 1u);
  }
  return g.index(c);
}

}  // namespace

unsigned full_mask(int dim) { return (1u << dim) - 1u; }

Cochain::Cochain(BZGrid grid, int degree) : grid_(std::move(grid)), degree_(degree) {
  if (degree < 0 || degree > grid_.dim()) {
    throw Error(ErrorCode::WrongDegree, "degree " + std::to_string(degree) + " on a " + std::to_string(grid_.dim()) + "-torus");
  }
  subsets_ = subsets_of_size(grid_.dim(), degree);
  values_.assign(subsets_.size(), std::vector<double>(grid_.node_count(), 0.0));
}

std::size_t Cochain::component_index(unsigned mask) const {
  auto it = std::find(subsets_.begin(), subsets_.end(), mask);
  if (it == subsets_.end()) throw Error(ErrorCode::WrongDegree, "axis subset does not match the cochain degree");
  return static_cast<std::size_t>(it - subsets_.begin());
}

double Cochain::norm1() const {
  Accumulator acc;
  for (const auto& comp : values_)
    for (double v : comp) acc.add(std::abs(v));
  return acc.value();
}

double Cochain::max_abs() const {
  double m = 0.0;
  for (const auto& comp : values_)
    for (double v : comp) m = std::max(m, std::abs(v));
  return m;
}

Cochain d(const Cochain& c) {
  const BZGrid& g = c.grid();
  if (c.degree() >= g.dim()) throw Error(ErrorCode::TopDegree, "cannot differentiate a top-degree cochain");
  Cochain out(g, c.degree() + 1);
  for (std::size_t k = 0; k < out.subsets().size(); ++k) {
    unsigned mask = out.subsets()[k];
    auto& dst = out.component(k);
    int i = 0;
    for (int a = 0; a < g.dim(); ++a) {
      if (!((mask >> a) & 1u)) continue;
      const double sign = (i % 2 == 0) ? 1.0 : -1.0;
      const auto& src = c.component(c.component_index(mask & ~(1u << a)));
      for (NodeIndex n = 0; n < g.node_count(); ++n) dst[n] += sign * (src[g.shift(n, a, 1)] - src[n]);
      ++i;
    }
  }
  return out;
}

Cochain involution_pullback(const Cochain& c) {
  const BZGrid& g = c.grid();
  Cochain out(g, c.degree());
  const double sign = (c.degree() % 2 == 0) ? 1.0 : -1.0;
  for (std::size_t k = 0; k < c.subsets().size(); ++k) {
    unsigned mask = c.subsets()[k];
    const auto& src = c.component(k);
    auto& dst = out.component(k);
    for (NodeIndex n = 0; n < g.node_count(); ++n) dst[n] = sign * src[mirror_anchor(g, n, mask)];
  }
  return out;
}

PlusMinus project_pm(const Cochain& c) {
  Cochain t = involution_pullback(c);
  PlusMinus out{Cochain(c.grid(), c.degree()), Cochain(c.grid(), c.degree())};
  for (std::size_t k = 0; k < c.subsets().size(); ++k) {
    const auto& x = c.component(k);
    const auto& y = t.component(k);
    auto& p = out.plus.component(k);
    auto& m = out.minus.component(k);
    for (std::size_t n = 0; n < x.size(); ++n) {
      p[n] = 0.5 * (x[n] + y[n]);
      m[n] = 0.5 * (x[n] - y[n]);
    }
  }
  return out;
}

double integrate(const Cochain& c, Region region, int axis) {
  const BZGrid& g = c.grid();
  if (c.degree() != g.dim()) throw Error(ErrorCode::WrongDegree, "integration needs a top-degree cochain");
  if (axis < 0) axis = g.fdomain_axis();
  const unsigned mask = full_mask(g.dim());
  const auto& v = c.component(0);
  const int half = g.size(axis) / 2;
  Accumulator acc;
  for (NodeIndex n = 0; n < g.node_count(); ++n) {
    int na = g.coords(n)[static_cast<std::size_t>(axis)];
    if (na < half) continue;
    switch (region) {
      case Region::All:
        // Orbit pairs are summed first so that tau-odd integrands cancel exactly.
        acc.add(v[n] + v[mirror_anchor(g, n, mask)]);
        break;
      case Region::FundamentalDomain: acc.add(v[n]); break;
      case Region::ImageDomain: acc.add(v[mirror_anchor(g, n, mask)]); break;
    }
  }
  return acc.value();
}

Cochain primitive_on_half(const Cochain& c, int axis) {
  const BZGrid& g = c.grid();
  if (c.degree() == 0) throw Error(ErrorCode::WrongDegree, "0-cochains have no primitive");
  if (axis < 0 || axis >= g.dim()) throw Error(ErrorCode::WrongDegree, "axis out of range");
  Cochain eta(g, c.degree() - 1);
  const int len = g.size(axis);
  const int half = len / 2;
  for (std::size_t k = 0; k < c.subsets().size(); ++k) {
    unsigned mask = c.subsets()[k];
    if (!((mask >> axis) & 1u)) continue;
    const double sign = position_in(mask, axis) % 2 == 0 ? 1.0 : -1.0;
    const auto& src = c.component(k);
    auto& dst = eta.component(eta.component_index(mask & ~(1u << axis)));
    for (NodeIndex n = 0; n < g.node_count(); ++n) {
      if (g.coords(n)[static_cast<std::size_t>(axis)] != half) continue;
      // Cumulative sum along the axis from the base slice (left at zero).
      NodeIndex cur = n;
      double run = 0.0;
      for (int t = half; t < len; ++t) {
        run += sign * src[cur];
        cur = g.shift(cur, axis, 1);
        dst[cur] = run;
      }
    }
  }
  return eta;
}

Cochain boundary_rho(const Cochain& eta, int axis, int sign) {
  const BZGrid& g = eta.grid();
  Cochain t = involution_pullback(eta);
  Cochain rho(g, eta.degree());
  const int half = g.size(axis) / 2;
  for (std::size_t k = 0; k < eta.subsets().size(); ++k) {
    unsigned mask = eta.subsets()[k];
    if ((mask >> axis) & 1u) continue;
    const double orient = position_in(mask | (1u << axis), axis) % 2 == 0 ? 1.0 : -1.0;
    const auto& e = eta.component(k);
    const auto& te = t.component(k);
    auto& r = rho.component(k);
    for (NodeIndex n = 0; n < g.node_count(); ++n) {
      int na = g.coords(n)[static_cast<std::size_t>(axis)];
      if (na == 0) r[n] = orient * (e[n] + sign * te[n]);
      else if (na == half) r[n] = -orient * (e[n] + sign * te[n]);
    }
  }
  return rho;
}

namespace {

double plain_total(const Cochain& c) {
  Accumulator acc;
  for (std::size_t k = 0; k < c.subsets().size(); ++k)
    for (double v : c.component(k)) acc.add(v);
  return acc.value();
}

}  // namespace

LocalisationTrace localise(const Cochain& c, std::vector<int> axes) {
  const BZGrid& g = c.grid();
  const int dim = g.dim();
  if (c.degree() != dim) throw Error(ErrorCode::WrongDegree, "localise needs a top-degree cochain");
  if (axes.empty()) {
    for (int a = dim - 1; a >= 0; --a) axes.push_back(a);
  }
  {
    std::vector<int> sorted = axes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(static_cast<std::size_t>(dim));
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw Error(ErrorCode::WrongDegree, "descent axes must be a permutation of the grid axes");
  }
  LocalisationTrace trace;
  trace.axes = axes;
  Cochain rho = c;
  for (int level = dim; level >= 0; --level) {
    // Level parity: tau^* rho = (-1)^level rho.
    Cochain t = involution_pullback(rho);
    const double want = level % 2 == 0 ? 1.0 : -1.0;
    const double scale = std::max(1.0, rho.max_abs());
    for (std::size_t k = 0; k < rho.subsets().size(); ++k)
      for (std::size_t n = 0; n < rho.component(k).size(); ++n) {
        if (std::abs(t.component(k)[n] - want * rho.component(k)[n]) > 1e-10 * scale) {
          throw Error(ErrorCode::ParityViolation, "level " + std::to_string(level) + " is not tau-" + (want > 0 ? "even" : "odd"));
        }
      }
    LocalisationLevel lv;
    lv.dimension = level;
    lv.integral = plain_total(rho);
    if (level == 0) {
      lv.rho = rho;
      trace.levels.push_back(std::move(lv));
      break;
    }
    const int axis = axes[static_cast<std::size_t>(dim - level)];
    lv.axis = axis;
    Cochain eta = primitive_on_half(rho, axis);
    Cochain next = boundary_rho(eta, axis, (level - 1) % 2 == 0 ? 1 : -1);
    lv.rho = std::move(rho);
    lv.eta = std::move(eta);
    trace.levels.push_back(std::move(lv));
    rho = std::move(next);
  }
  const auto& rho0 = trace.levels.back().rho.component(0);
  Accumulator acc;
  for (NodeIndex t : g.trims()) {
    trace.fixed_values.emplace_back(t, rho0[t]);
    acc.add(rho0[t]);
  }
  trace.total = trace.levels.front().integral;
  long n = std::lround(trace.total);
  if (std::abs(trace.total - static_cast<double>(n)) <= 0.25) trace.parity = (n % 2 == 0) ? 1 : -1;
  return trace;
}

Cochain uniform_form(const BZGrid& grid, double upsilon) {
  Cochain c(grid, grid.dim());
  const double v = upsilon / static_cast<double>(grid.node_count());
  std::fill(c.component(0).begin(), c.component(0).end(), v);
  return c;
}

SampledForm sample_wzw(const SewingField& su, WzwScheme scheme) {
  check_wzw_smoothness(su, scheme);
  Cochain raw(su.grid, 3);
  raw.component(0) = wzw_cube_values(su, scheme);
  PlusMinus pm = project_pm(raw);
  return {pm.minus, pm.plus.norm1()};
}

}  // namespace tki
