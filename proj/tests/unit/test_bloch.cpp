#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "tki/bloch.hpp"
#include "tki/error.hpp"
#include "tki/invariants.hpp"
#include "tki/models.hpp"
#include "tki_test/oracles.hpp"

using namespace tki;

namespace {

constexpr double pi = std::numbers::pi;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no tki::Error thrown";
  return ErrorCode::Usage;
}

CMatrix w0() {
  CMatrix w(2, 2);
  w << 0, 1, -1, 0;
  return w;
}

// Two-band model without time reversal; the lower band has Chern number 1
// for |mass| < 2 and 0 for |mass| > 2.
BlochModel chern_model(double mass = 1.0) {
  BlochModel m;
  m.name = "chern";
  m.domain = DomainKind::Torus;
  m.dim = 2;
  m.n_bands = 2;
  m.n_occ = 1;
  m.theta.U = CMatrix::Identity(2, 2);
  m.hamiltonian = [mass](std::span<const double> k) {
    double dx = std::sin(k[0]), dy = std::sin(k[1]), dz = mass + std::cos(k[0]) + std::cos(k[1]);
    CMatrix h(2, 2);
    h << dz, cplx(dx, -dy), cplx(dx, dy), -dz;
    return h;
  };
  return m;
}

FrameField phase_field(int n) {
  FrameField f;
  f.grid = BZGrid({n, n});
  f.n_bands = 1;
  f.n_occ = 1;
  f.blocks = {{{0}, 0, 1}};
  for (NodeIndex i = 0; i < f.grid.node_count(); ++i) {
    auto k = f.grid.momentum(i);
    double phi = std::sin(k[0]) + 0.5 * std::cos(k[1]);
    f.frames.push_back(CMatrix::Constant(1, 1, std::exp(cplx(0, phi))));
    f.energies.push_back(RVector::Constant(1, -1.0));
  }
  f.smoothness = measure_smoothness(f.grid, f.frames);
  return f;
}

}  // namespace

TEST(Grid, InvolutionSquaresToIdentityAndFixesTrims) {
  for (const auto& sizes : std::vector<std::vector<int>>{{8, 8}, {6, 10}, {8, 8, 8}, {4, 6, 10}}) {
    BZGrid g(sizes);
    std::size_t fixed = 0;
    for (NodeIndex i = 0; i < g.node_count(); ++i) {
      EXPECT_EQ(g.involution(g.involution(i)), i);
      auto k = g.momentum(i), km = g.momentum(g.involution(i));
      for (int a = 0; a < g.dim(); ++a) {
        double s = k[static_cast<std::size_t>(a)] + km[static_cast<std::size_t>(a)];
        EXPECT_NEAR(std::remainder(s, 2 * pi), 0.0, 1e-12);
      }
      if (g.involution(i) == i) {
        ++fixed;
        EXPECT_TRUE(g.is_trim(i));
      } else {
        EXPECT_FALSE(g.is_trim(i));
      }
    }
    EXPECT_EQ(fixed, std::size_t{1} << g.dim());
    EXPECT_EQ(g.trims().size(), fixed);
  }
}

TEST(Grid, NodeConvention) {
  BZGrid g({8, 8, 8});
  EXPECT_NEAR(g.k(0, 4), 0.0, 1e-15);
  EXPECT_NEAR(g.k(0, 0), -pi, 1e-15);
  EXPECT_EQ(g.index({0, 0, 1}), 1u);
  EXPECT_EQ(g.index({0, 1, 0}), 8u);
  EXPECT_EQ(g.shift(g.index({7, 0, 0}), 0, 1), g.index({0, 0, 0}));
}

TEST(Grid, FundamentalDomainAndImageCoverWithBoundaryOverlap) {
  BZGrid g({8, 6, 10});
  const int a = g.fdomain_axis();
  const int n = g.size(a);
  auto in_domain = [&](NodeIndex i) {
    int c = g.coords(i)[static_cast<std::size_t>(a)];
    return c >= n / 2 || c == 0;  // n_a in [N/2, N] with N identified with 0
  };
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    bool f = in_domain(i), image = in_domain(g.involution(i));
    EXPECT_TRUE(f || image);
    int c = g.coords(i)[static_cast<std::size_t>(a)];
    EXPECT_EQ(f && image, c == 0 || c == n / 2);
  }
}

TEST(Grid, Errors) {
  EXPECT_EQ(code_of([] { BZGrid({7, 8}); }), ErrorCode::OddGrid);
  EXPECT_EQ(code_of([] { BZGrid({0, 8}); }), ErrorCode::OddGrid);
}

TEST(Diagonalize, TrivialFramesAreCoordinateColumns) {
  BlochModel m = make_model("trivial", {{"d", 3}, {"m", 2}});
  FrameField f = diagonalize_grid(m, BZGrid({8, 8, 8}));
  for (const auto& u : f.frames) {
    CMatrix proj = u * u.adjoint();
    CMatrix expect = CMatrix::Zero(4, 4);
    expect(0, 0) = expect(1, 1) = 1;
    EXPECT_LE(max_abs(proj - expect), 1e-14);
  }
}

TEST(Diagonalize, FkmContractSweep) {
  BlochModel m = make_model("fkm3d");
  BZGrid grid({16, 16, 16});
  FrameField f = diagonalize_grid(m, grid);
  double ortho = 0, resid = 0, occ_max = -INFINITY;
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    const CMatrix& u = f.frames[i];
    ortho = std::max(ortho, max_abs(u.adjoint() * u - CMatrix::Identity(m.n_occ, m.n_occ)));
    auto k = grid.momentum(i);
    CMatrix h = evaluate(m, k);
    CMatrix hu = h * u;
    for (int c = 0; c < m.n_occ; ++c) {
      CVector v = u.col(c);
      double e = (v.adjoint() * h * v)(0, 0).real();
      resid = std::max(resid, (hu.col(c) - e * v).norm());
    }
    occ_max = std::max(occ_max, f.energies[i].maxCoeff());
    for (Eigen::Index j = 1; j < f.energies[i].size(); ++j) EXPECT_LE(f.energies[i](j - 1), f.energies[i](j));
  }
  EXPECT_LE(ortho, 1e-11);
  EXPECT_LE(resid, 1e-10);
  EXPECT_LT(occ_max, 0.0);
}

TEST(Diagonalize, Errors) {
  BlochModel closing = make_model_unchecked("fkm3d", {{"dt1", 2.0}});
  EXPECT_EQ(code_of([&] { diagonalize_grid(closing, BZGrid({8, 8, 8})); }), ErrorCode::GaplessAt);
  EXPECT_EQ(code_of([] { diagonalize_grid(make_model("bhz2d"), BZGrid({8, 8, 8})); }), ErrorCode::IncompatibleGrid);
}

TEST(SmoothGauge, TrivialIsAlreadyConstant) {
  BlochModel m = make_model("trivial", {{"d", 3}, {"m", 2}});
  FrameField raw = diagonalize_grid(m, BZGrid({8, 8, 8}));
  FrameField s = smooth_gauge(raw);
  EXPECT_LE(s.smoothness, 1e-12);
  for (std::size_t i = 0; i < raw.frames.size(); ++i) {
    CMatrix g = raw.frames[i].adjoint() * s.frames[i];
    EXPECT_LE(max_abs(g.adjoint() * g - CMatrix::Identity(2, 2)), 1e-12);
  }
}

TEST(SmoothGauge, FkmRefinementStudy) {
  BlochModel m = make_model("fkm3d");
  double prev = INFINITY;
  for (int n : {12, 16, 24}) {
    FrameField raw = diagonalize_grid(m, BZGrid({n, n, n}));
    FrameField s = smooth_gauge(raw);
    EXPECT_LT(s.smoothness, prev) << "N = " << n;
    // Link deficiency of a smooth frame scales like the spacing.
    EXPECT_LE(s.smoothness * n, 8.0) << "N = " << n;
    prev = s.smoothness;
    // Same occupied subspace as the raw frames, node by node.
    double proj = 0;
    for (std::size_t i = 0; i < raw.frames.size(); ++i) {
      proj = std::max(proj, max_abs(raw.frames[i] * raw.frames[i].adjoint() - s.frames[i] * s.frames[i].adjoint()));
    }
    EXPECT_LE(proj, 1e-10);
  }
}

TEST(SmoothGauge, ChernBandIsObstructed) {
  FrameField raw = diagonalize_grid(chern_model(), BZGrid({16, 16}));
  auto planes = plane_chern_numbers(raw);
  ASSERT_EQ(planes.size(), 1u);
  EXPECT_NEAR(std::abs(planes[0].flux), 1.0, 1e-9);
  EXPECT_EQ(code_of([&] { smooth_gauge(raw); }), ErrorCode::ChernObstruction);
}

TEST(Sewing, TrivialAdaptedFrameGivesW0) {
  BlochModel m = make_model("trivial", {{"d", 3}, {"m", 2}});
  FrameField f = diagonalize_grid(m, BZGrid({8, 8, 8}));
  for (auto& u : f.frames) u = CMatrix::Identity(4, 2);
  f.smoothness = measure_smoothness(f.grid, f.frames);
  SewingField w = sewing_field(f, m.theta);
  for (const auto& x : w.w) EXPECT_EQ(x, w0());
  SewingField su = su_reduce(w);
  for (const auto& x : su.w) EXPECT_LE(max_abs(x - w0()), 1e-15);
}

TEST(Sewing, RelationsHoldForRegistryModels) {
  std::vector<std::pair<BlochModel, std::vector<int>>> cases = {
      {make_model("bhz2d"), {8, 8}},
      {make_model("bhz2d", {{"M", -1}}), {12, 10}},
      {make_model("layered3d"), {8, 8, 8}},
      {make_model("fkm3d"), {8, 8, 8}},
      {make_model("fkm3d", {{"dt1", 3}}), {10, 8, 12}},
      {make_model("trivial", {{"d", 3}, {"m", 4}}), {8, 8, 8}},
  };
  for (const auto& [m, sizes] : cases) {
    FrameField raw = diagonalize_grid(m, BZGrid(sizes));
    for (const FrameField& f : {raw, smooth_gauge(raw)}) {
      SewingDiagnostics d = sewing_diagnostics(sewing_field_unchecked(f, m.theta));
      EXPECT_LE(d.unitarity, 1e-8) << m.name;
      EXPECT_LE(d.involution, 1e-8) << m.name;
      EXPECT_LE(d.trim_skew, 1e-8) << m.name;
    }
  }
}

TEST(Sewing, FkmTrimsAreSkew) {
  BlochModel m = make_model("fkm3d");
  SewingPipeline p = build_sewing(m, BZGrid({16, 16, 16}));
  const BZGrid& g = p.w.grid;
  EXPECT_EQ(g.trims().size(), 8u);
  for (NodeIndex t : g.trims()) {
    EXPECT_LE(max_abs(p.w.w[t] + p.w.w[t].transpose()), 1e-8);
    EXPECT_LE(max_abs(p.su.w[t] + p.su.w[t].transpose()), 1e-8);
  }
}

TEST(Sewing, RoughFramesAreRejected) {
  BlochModel m = make_model("fkm3d");
  FrameField raw = diagonalize_grid(m, BZGrid({8, 8, 8}));
  std::mt19937_64 rng(5);
  std::vector<CMatrix> a;
  for (std::size_t i = 0; i < raw.frames.size(); ++i) a.push_back(tki_test::random_unitary(2, rng));
  FrameField rough = apply_gauge(raw, a);
  EXPECT_GT(rough.smoothness, 0.5);
  EXPECT_EQ(code_of([&] { sewing_field(rough, m.theta); }), ErrorCode::RoughGauge);
  EXPECT_EQ(code_of([&] { berry_connection(rough); }), ErrorCode::RoughGauge);
}

TEST(Sewing, GaugeCovariance) {
  BlochModel m = make_model("fkm3d");
  BZGrid grid({8, 8, 8});
  FrameField f = smooth_gauge(diagonalize_grid(m, grid));
  std::mt19937_64 rng(6);
  std::vector<CMatrix> a = tki_test::smooth_random_gauge(grid, 2, 0.3, rng);
  SewingField w = sewing_field_unchecked(f, m.theta);
  SewingField wa = sewing_field_unchecked(apply_gauge(f, a), m.theta);
  double err = 0;
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    CMatrix expect = a[grid.involution(i)].adjoint() * w.w[i] * a[i].conjugate();
    err = std::max(err, max_abs(wa.w[i] - expect));
  }
  EXPECT_LE(err, 1e-8);
}

TEST(SuReduce, ConstantDeterminantPhase) {
  BZGrid grid({4, 4});
  const double phi = 0.7;
  SewingField w;
  w.grid = grid;
  w.w.assign(grid.node_count(), std::exp(cplx(0, phi / 2)) * w0());
  w.det_phase.assign(grid.node_count(), 0.0);
  SewingField su = su_reduce(w);
  EXPECT_TRUE(su.su_reduced);
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    EXPECT_NEAR(su.det_phase[i], phi, 1e-14);
    EXPECT_LE(max_abs(su.w[i] - w0()), 1e-14);
  }
}

TEST(SuReduce, FkmDeterminantAndParityPreserved) {
  BlochModel m = make_model("fkm3d");
  SewingPipeline p = build_sewing(m, BZGrid({16, 16, 16}));
  SewingDiagnostics d = sewing_diagnostics(p.su);
  EXPECT_LE(d.involution, 1e-8);
  EXPECT_LE(d.trim_skew, 1e-8);
  for (const auto& x : p.su.w) EXPECT_LE(std::abs(x.determinant() - 1.0), 1e-9);
  EXPECT_EQ(km_wzw(p.w).parity, km_wzw(p.su).parity);
  EXPECT_EQ(km_wzw(p.su).parity, -1);
}

TEST(SuReduce, WindingDeterminantThrows) {
  BZGrid grid({8, 8});
  SewingField w;
  w.grid = grid;
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    double k0 = grid.momentum(i)[0];
    CMatrix x = w0();
    x(0, 1) *= std::exp(cplx(0, k0));
    w.w.push_back(x);
  }
  w.det_phase.assign(grid.node_count(), 0.0);
  EXPECT_EQ(code_of([&] { su_reduce(w); }), ErrorCode::DetWinding);
}

TEST(BerryConnection, ConstantFramesGiveZero) {
  BlochModel m = make_model("trivial", {{"d", 2}, {"m", 2}});
  FrameField f = smooth_gauge(diagonalize_grid(m, BZGrid({8, 8})));
  ConnectionField c = berry_connection(f);
  for (const auto& axis : c.A)
    for (const auto& x : axis) EXPECT_LE(max_abs(x), 1e-12);
}

TEST(BerryConnection, SingleBandPhaseField) {
  double prev = INFINITY;
  for (int n : {32, 64, 128}) {
    FrameField f = phase_field(n);
    ConnectionField c = berry_connection(f);
    double err = 0;
    for (NodeIndex i = 0; i < f.grid.node_count(); ++i) {
      auto k = f.grid.momentum(i);
      err = std::max(err, std::abs(c.A[0][i](0, 0) - cplx(0, std::cos(k[0]))));
      err = std::max(err, std::abs(c.A[1][i](0, 0) - cplx(0, -0.5 * std::sin(k[1]))));
    }
    double h = 2 * pi / n;
    EXPECT_LE(err, h);
    if (n > 32) EXPECT_NEAR(prev / err, 2.0, 0.2);
    prev = err;
  }
}

TEST(BerryConnection, AntiHermitianAndPlaquetteFlux) {
  // Trivial total Chern number but nonzero local curvature.
  BlochModel m = chern_model(3.0);
  double prev = INFINITY;
  for (int n : {16, 32}) {
    BZGrid grid({n, n});
    FrameField f = smooth_gauge(diagonalize_grid(m, grid));
    ConnectionField c = berry_connection(f);
    double herm = 0, err = 0;
    const double h = grid.spacing(0);
    for (NodeIndex i = 0; i < grid.node_count(); ++i) {
      for (int a = 0; a < 2; ++a) herm = std::max(herm, max_abs(c.A[static_cast<std::size_t>(a)][i] + c.A[static_cast<std::size_t>(a)][i].adjoint()));
      NodeIndex i10 = grid.shift(i, 0, 1), i01 = grid.shift(i, 1, 1), i11 = grid.shift(i10, 1, 1);
      double circ = h * (c.A[0][i].trace() + c.A[1][i10].trace() - c.A[0][i01].trace() - c.A[1][i].trace()).imag();
      // Projector-method flux of the same plaquette.
      CMatrix p00 = f.frames[i] * f.frames[i].adjoint(), p10 = f.frames[i10] * f.frames[i10].adjoint();
      CMatrix p11 = f.frames[i11] * f.frames[i11].adjoint(), p01 = f.frames[i01] * f.frames[i01].adjoint();
      double proj = std::arg((p00 * p10 * p11 * p01).trace());
      err = std::max(err, std::abs(circ - proj));
    }
    EXPECT_LE(herm, 1e-10);
    EXPECT_LE(err, 2 * h * h) << "N = " << n;
    if (n == 32) EXPECT_LT(err, prev / 3.5);
    prev = err;
  }
}

TEST(QuaternionicAverage, CompatibleConnectionUnchanged) {
  BlochModel m = make_model("trivial", {{"d", 3}, {"m", 2}});
  FrameField f = diagonalize_grid(m, BZGrid({8, 8, 8}));
  for (auto& u : f.frames) u = CMatrix::Identity(4, 2);
  f.smoothness = 0;
  SewingField su = su_reduce(sewing_field(f, m.theta));
  ConnectionField c = berry_connection(f);
  EXPECT_LE(quaternionic_residual(c, su), 1e-12);
  ConnectionField avg = quaternionic_average(c, su);
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < c.A[0].size(); ++i) EXPECT_LE(max_abs(avg.A[static_cast<std::size_t>(a)][i] - c.A[static_cast<std::size_t>(a)][i]), 1e-10);
}

TEST(QuaternionicAverage, FkmProjectorProperty) {
  BlochModel m = make_model("fkm3d");
  SewingPipeline p = build_sewing(m, BZGrid({16, 16, 16}));
  ConnectionField c = berry_connection(p.smooth);
  ConnectionField once = quaternionic_average(c, p.su);
  ConnectionField twice = quaternionic_average(once, p.su);
  EXPECT_LE(once.quaternionic_residual, 1e-8);
  double diff = 0, herm = 0;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < c.A[0].size(); ++i) {
      const CMatrix& x = once.A[static_cast<std::size_t>(a)][i];
      diff = std::max(diff, max_abs(twice.A[static_cast<std::size_t>(a)][i] - x));
      herm = std::max(herm, max_abs(x + x.adjoint()));
    }
  EXPECT_LE(diff, 1e-10);
  EXPECT_LE(herm, 1e-12);
}

TEST(QuaternionicAverage, ZeroConnectionPicksUpSewingTerm) {
  BlochModel m = make_model("fkm3d");
  SewingPipeline p = build_sewing(m, BZGrid({16, 16, 16}));
  ConnectionField zero = berry_connection(p.smooth);
  for (auto& axis : zero.A)
    for (auto& x : axis) x.setZero();
  ConnectionField avg = quaternionic_average(zero, p.su);
  double biggest = 0;
  for (const auto& axis : avg.A)
    for (const auto& x : axis) biggest = std::max(biggest, max_abs(x));
  EXPECT_GT(biggest, 1e-3);
  ConnectionField other = zero;
  other.grid = BZGrid({16, 16, 14});
  EXPECT_EQ(code_of([&] { quaternionic_average(other, p.su); }), ErrorCode::GaugeMismatch);
}

TEST(PlaneChern, TimeReversalModelsHaveZeroFlux) {
  for (const auto& m : {make_model("fkm3d"), make_model("fkm3d", {{"dt1", -1.5}}), make_model("layered3d")}) {
    FrameField f = diagonalize_grid(m, BZGrid({12, 12, 12}));
    auto planes = plane_chern_numbers(f);
    EXPECT_EQ(planes.size(), 36u);
    for (const auto& p : planes) EXPECT_LE(std::abs(p.flux), 1e-9) << m.name;
  }
  FrameField f2 = diagonalize_grid(make_model("bhz2d"), BZGrid({16, 16}));
  EXPECT_LE(std::abs(plane_chern_numbers(f2)[0].flux), 1e-9);
}

TEST(PlaneChern, RestrictToPlaneMatchesDirectSlice) {
  BlochModel m = make_model("fkm3d");
  BZGrid grid({8, 8, 8});
  FrameField f = diagonalize_grid(m, grid);
  FrameField slice = restrict_to_plane(f, 1, 0);
  FrameField direct = diagonalize_plane(m, grid, 1, 0);
  ASSERT_EQ(slice.frames.size(), direct.frames.size());
  for (std::size_t i = 0; i < slice.frames.size(); ++i) {
    EXPECT_LE(max_abs(slice.frames[i] * slice.frames[i].adjoint() - direct.frames[i] * direct.frames[i].adjoint()), 1e-10);
  }
}
