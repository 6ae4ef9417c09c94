#include "tki/models.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <set>

#include "tki/error.hpp"

namespace tki {

namespace {

constexpr double pi = std::numbers::pi;
const cplx I(0.0, 1.0);

CMatrix pauli(int which) {
  CMatrix s = CMatrix::Zero(2, 2);
  switch (which) {
    case 0: s << 1, 0, 0, 1; break;
    case 1: s << 0, 1, 1, 0; break;
    case 2: s << 0, -I, I, 0; break;
    case 3: s << 1, 0, 0, -1; break;
    default: break;
  }
  return s;
}

// Basis index = 2 * orbital + spin, so kron(tau, s) has tau on orbitals.
CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CMatrix gamma(int tau, int s) { return kron(pauli(tau), pauli(s)); }

struct Gammas {
  CMatrix tz1 = gamma(3, 0), txsz = gamma(1, 3), ty1 = gamma(2, 0), txsx = gamma(1, 1);
  CMatrix tx1 = gamma(1, 0), tzsx = gamma(3, 1), tzsy = gamma(3, 2), tzsz = gamma(3, 3);
  CMatrix txsy = gamma(1, 2);
};

const Gammas& G() {
  static const Gammas g;
  return g;
}

double get(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void check_keys(const std::string& model, const ParamMap& p, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : p) {
    if (!allowed.count(key)) throw Error(ErrorCode::BadParams, model + ": unknown parameter '" + key + "'");
    if (!std::isfinite(value)) throw Error(ErrorCode::BadParams, model + ": parameter '" + key + "' is not finite");
  }
}

std::vector<BandBlock> single_block(int n_bands, int n_occ) {
  BandBlock b;
  for (int i = 0; i < n_bands; ++i) b.bands.push_back(i);
  b.n_occ = n_occ;
  return {b};
}

BlochModel trivial_model(const ParamMap& p) {
  check_keys("trivial", p, {"d", "m", "E"});
  double dv = get(p, "d", 3), mv = get(p, "m", 2), e = get(p, "E", 1.0);
  int d = static_cast<int>(std::lround(dv)), m = static_cast<int>(std::lround(mv));
  if (dv != d || (d != 2 && d != 3)) throw Error(ErrorCode::BadParams, "trivial: d must be 2 or 3");
  if (mv != m || m < 2 || m % 2 != 0) throw Error(ErrorCode::BadParams, "trivial: m must be an even integer >= 2");
  BlochModel model;
  model.name = "trivial";
  model.params = {{"d", d}, {"m", m}, {"E", e}};
  model.dim = d;
  model.n_bands = 2 * m;
  model.n_occ = m;
  model.theta.U = kramers_unitary(2 * m);
  CMatrix h = CMatrix::Zero(2 * m, 2 * m);
  for (int i = 0; i < m; ++i) {
    h(i, i) = -e;
    h(m + i, m + i) = e;
  }
  model.hamiltonian = [h](std::span<const double>) { return h; };
  // Each Kramers doublet of the occupied and empty sector forms its own summand.
  for (int j = 0; j < m / 2; ++j) model.blocks.push_back({{2 * j, 2 * j + 1, m + 2 * j, m + 2 * j + 1}, 2});
  return model;
}

CMatrix bhz_matrix(double M, double rashba, double kx, double ky, double mass_shift) {
  const auto& g = G();
  return (M - std::cos(kx) - std::cos(ky) + mass_shift) * g.tz1 + std::sin(kx) * g.txsz + std::sin(ky) * g.ty1 +
         rashba * std::sin(ky) * g.txsx;
}

BlochModel bhz2d_model(const ParamMap& p) {
  check_keys("bhz2d", p, {"M", "rashba"});
  double M = get(p, "M", 1.0), r = get(p, "rashba", 0.3);
  BlochModel model;
  model.name = "bhz2d";
  model.params = {{"M", M}, {"rashba", r}};
  model.dim = 2;
  model.n_bands = 4;
  model.n_occ = 2;
  model.theta.U = kramers_unitary(4);
  model.hamiltonian = [M, r](std::span<const double> k) { return bhz_matrix(M, r, k[0], k[1], 0.0); };
  model.blocks = single_block(4, 2);
  return model;
}

BlochModel layered3d_model(const ParamMap& p) {
  check_keys("layered3d", p, {"M", "tz", "rashba"});
  double M = get(p, "M", 1.0), tz = get(p, "tz", 0.5), r = get(p, "rashba", 0.3);
  BlochModel model;
  model.name = "layered3d";
  model.params = {{"M", M}, {"tz", tz}, {"rashba", r}};
  model.dim = 3;
  model.n_bands = 4;
  model.n_occ = 2;
  model.theta.U = kramers_unitary(4);
  model.hamiltonian = [M, r, tz](std::span<const double> k) {
    return bhz_matrix(M, r, k[0], k[1], tz * std::cos(k[2]));
  };
  model.blocks = single_block(4, 2);
  return model;
}

// Four-band Dirac-matrix model on the diamond lattice, written in reduced
// coordinates k_j = k . a_j of the fcc primitive vectors.
BlochModel fkm3d_model(const ParamMap& p) {
  check_keys("fkm3d", p, {"t", "dt1", "lambda"});
  double t = get(p, "t", 1.0), dt1 = get(p, "dt1", 0.5), lam = get(p, "lambda", 0.3);
  BlochModel model;
  model.name = "fkm3d";
  model.params = {{"t", t}, {"dt1", dt1}, {"lambda", lam}};
  model.dim = 3;
  model.n_bands = 4;
  model.n_occ = 2;
  model.theta.U = kramers_unitary(4);
  model.hamiltonian = [t, dt1, lam](std::span<const double> k) {
    const auto& g = G();
    double k1 = k[0], k2 = k[1], k3 = k[2];
    double d1 = t + dt1 + t * (std::cos(k1) + std::cos(k2) + std::cos(k3));
    double d2 = t * (std::sin(k1) + std::sin(k2) + std::sin(k3));
    double d3 = lam * (std::sin(k2) - std::sin(k3) - std::sin(k2 - k1) + std::sin(k3 - k1));
    double d4 = lam * (std::sin(k3) - std::sin(k1) - std::sin(k3 - k2) + std::sin(k1 - k2));
    double d5 = lam * (std::sin(k1) - std::sin(k2) - std::sin(k1 - k3) + std::sin(k2 - k3));
    return CMatrix(d1 * g.tx1 + d2 * g.ty1 + d3 * g.tzsx + d4 * g.tzsy + d5 * g.tzsz);
  };
  model.blocks = single_block(4, 2);
  return model;
}

// Massive Dirac Hamiltonian on the one-point compactification S^3 of R^3:
// H = n . (tau_x s) + (m (1 + n0) - B (1 - n0)) tau_z.
BlochModel dirac_s3_model(const ParamMap& p) {
  check_keys("dirac_s3", p, {"mass", "B"});
  double mass = get(p, "mass", 1.0), B = get(p, "B", 1.0);
  if (B <= 0) throw Error(ErrorCode::BadParams, "dirac_s3: B must be positive");
  BlochModel model;
  model.name = "dirac_s3";
  model.params = {{"mass", mass}, {"B", B}};
  model.domain = DomainKind::Sphere3;
  model.dim = 3;
  model.n_bands = 4;
  model.n_occ = 2;
  model.theta.U = kramers_unitary(4);
  model.hamiltonian = [mass, B](std::span<const double> n) {
    const auto& g = G();
    double n0 = n[0];
    return CMatrix((mass * (1 + n0) - B * (1 - n0)) * g.tz1 + n[1] * g.txsx + n[2] * g.txsy + n[3] * g.txsz);
  };
  model.chiral = gamma(2, 0);
  model.blocks = single_block(4, 2);
  return model;
}

double spectral_gap(const RVector& ev, int n_occ) {
  double below = -ev(n_occ - 1);
  double above = ev(n_occ);
  return std::min(below, above);
}

void sanity_check(const BlochModel& model) {
  ValidationReport rep;
  if (model.domain == DomainKind::Torus) {
    rep = validate_model(model, BZGrid(std::vector<int>(static_cast<std::size_t>(model.dim), 16)));
  } else {
    // 16-cell angular mesh over the sphere.
    rep.tr_residual = 0.0;
    rep.min_gap = INFINITY;
    const int n = 16;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        for (int l = 0; l < 2 * n; ++l) {
          double b1 = pi * i / n, b2 = pi * j / n, b3 = pi * l / n;
          double ang[3] = {b1, b2, b3};
          double mir[3] = {pi - b1, pi - b2, pi - b3};
          CMatrix h = evaluate(model, ang);
          CMatrix hm = evaluate(model, mir);
          rep.tr_residual = std::max(rep.tr_residual, max_abs(model.theta.conjugate(h) - hm));
          rep.min_gap = std::min(rep.min_gap, spectral_gap(hermitian_eig(h).values, model.n_occ));
        }
  }
  if (rep.tr_residual > 1e-9) {
    throw Error(ErrorCode::SymmetryViolation, model.name + ": time-reversal residual " + std::to_string(rep.tr_residual));
  }
  if (!(rep.min_gap > 1e-8)) {
    throw Error(ErrorCode::Gapless, model.name + ": gap " + std::to_string(rep.min_gap) + " on sanity grid");
  }
}

}  // namespace

CMatrix kramers_unitary(int n_bands) {
  CMatrix u = CMatrix::Zero(n_bands, n_bands);
  for (int o = 0; o + 1 < n_bands; o += 2) {
    u(o, o + 1) = 1.0;
    u(o + 1, o) = -1.0;
  }
  return u;
}

std::vector<std::string> registered_models() { return {"trivial", "fkm3d", "bhz2d", "layered3d", "dirac_s3"}; }

BlochModel make_model(const std::string& name, const ParamMap& params) {
  BlochModel model = make_model_unchecked(name, params);
  sanity_check(model);
  return model;
}

BlochModel make_model_unchecked(const std::string& name, const ParamMap& params) {
  BlochModel model;
  if (name == "trivial") model = trivial_model(params);
  else if (name == "bhz2d") model = bhz2d_model(params);
  else if (name == "layered3d") model = layered3d_model(params);
  else if (name == "fkm3d") model = fkm3d_model(params);
  else if (name == "dirac_s3") model = dirac_s3_model(params);
  else throw Error(ErrorCode::UnknownModel, "'" + name + "'");
  return model;
}

BlochModel direct_sum(const BlochModel& a, const BlochModel& b) {
  if (a.domain != b.domain || a.dim != b.dim) {
    throw Error(ErrorCode::BadParams, "direct sum needs summands on the same domain");
  }
  BlochModel s;
  s.name = a.name + "+" + b.name;
  for (const auto& [k, v] : a.params) s.params["lhs." + k] = v;
  for (const auto& [k, v] : b.params) s.params["rhs." + k] = v;
  s.domain = a.domain;
  s.dim = a.dim;
  s.n_bands = a.n_bands + b.n_bands;
  s.n_occ = a.n_occ + b.n_occ;
  s.theta.U = CMatrix::Zero(s.n_bands, s.n_bands);
  s.theta.U.topLeftCorner(a.n_bands, a.n_bands) = a.theta.U;
  s.theta.U.bottomRightCorner(b.n_bands, b.n_bands) = b.theta.U;
  s.blocks = a.blocks;
  for (auto blk : b.blocks) {
    for (int& band : blk.bands) band += a.n_bands;
    s.blocks.push_back(blk);
  }
  auto ha = a.hamiltonian, hb = b.hamiltonian;
  int na = a.n_bands, nb = b.n_bands;
  s.hamiltonian = [ha, hb, na, nb](std::span<const double> k) {
    CMatrix h = CMatrix::Zero(na + nb, na + nb);
    h.topLeftCorner(na, na) = ha(k);
    h.bottomRightCorner(nb, nb) = hb(k);
    return h;
  };
  if (a.chiral && b.chiral) {
    CMatrix c = CMatrix::Zero(na + nb, na + nb);
    c.topLeftCorner(na, na) = *a.chiral;
    c.bottomRightCorner(nb, nb) = *b.chiral;
    s.chiral = c;
  }
  if (a.sampled_grid) s.sampled_grid = a.sampled_grid;
  return s;
}

BlochModel with_zeeman(const BlochModel& model, double eps) {
  BlochModel out = model;
  out.name = model.name + "+zeeman";
  out.params["zeeman"] = eps;
  CMatrix z = kron(CMatrix::Identity(model.n_bands / 2, model.n_bands / 2), pauli(3));
  auto h = model.hamiltonian;
  out.hamiltonian = [h, z, eps](std::span<const double> k) { return CMatrix(h(k) + eps * z); };
  // The perturbation couples every band with its Kramers partner only, so the
  // block structure survives.
  return out;
}

std::array<double, 4> sphere_point(double b1, double b2, double b3) {
  return {std::sin(b1) * std::sin(b2) * std::sin(b3), std::cos(b1), std::sin(b1) * std::cos(b2),
          std::sin(b1) * std::sin(b2) * std::cos(b3)};
}

CMatrix evaluate(const BlochModel& model, std::span<const double> k) {
  if (model.domain == DomainKind::Torus) {
    if (static_cast<int>(k.size()) != model.dim) {
      throw Error(ErrorCode::OutOfDomain, "expected " + std::to_string(model.dim) + " momentum components");
    }
    for (double v : k)
      if (!std::isfinite(v)) throw Error(ErrorCode::OutOfDomain, "non-finite momentum");
    return model.hamiltonian(k);
  }
  if (k.size() != 3) throw Error(ErrorCode::OutOfDomain, "sphere models take three hyperspherical angles");
  constexpr double slack = 1e-12;
  if (!(k[0] >= -slack && k[0] <= pi + slack && k[1] >= -slack && k[1] <= pi + slack && std::isfinite(k[2]))) {
    throw Error(ErrorCode::OutOfDomain, "polar angles must lie in [0, pi]");
  }
  auto n = sphere_point(k[0], k[1], k[2]);
  return model.hamiltonian(std::span<const double>(n.data(), 4));
}

ValidationReport validate_model(const BlochModel& model, const BZGrid& grid) {
  if (model.domain != DomainKind::Torus || grid.dim() != model.dim) {
    throw Error(ErrorCode::IncompatibleGrid, "model " + model.name + " is not defined on a " +
                                                 std::to_string(grid.dim()) + "-torus grid");
  }
  const std::size_t count = grid.node_count();
  std::vector<CMatrix> hs(count);
  for (NodeIndex i = 0; i < count; ++i) {
    auto k = grid.momentum(i);
    hs[i] = evaluate(model, std::span<const double>(k.data(), static_cast<std::size_t>(grid.dim())));
  }
  ValidationReport rep;
  rep.min_gap = INFINITY;
  for (NodeIndex i = 0; i < count; ++i) {
    const CMatrix& h = hs[i];
    rep.hermiticity = std::max(rep.hermiticity, max_abs(h - h.adjoint()));
    rep.tr_residual = std::max(rep.tr_residual, max_abs(model.theta.conjugate(h) - hs[grid.involution(i)]));
    RVector ev = hermitian_eig(h).values;
    rep.min_gap = std::min(rep.min_gap, spectral_gap(ev, model.n_occ));
    if (grid.is_trim(i)) {
      for (Eigen::Index b = 0; b + 1 < ev.size(); b += 2) {
        if (std::abs(ev(b + 1) - ev(b)) > 1e-9) rep.kramers_ok = false;
      }
    }
  }
  return rep;
}

}  // namespace tki
