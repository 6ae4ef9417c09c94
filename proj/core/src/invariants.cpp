#include "tki/invariants.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "tki/eqforms.hpp"
#include "tki/error.hpp"
#include "tki/parallel.hpp"

namespace tki {

namespace {

constexpr double pi = std::numbers::pi;

int parity_of(long n) { return (n % 2 == 0) ? 1 : -1; }

long nearest_checked(double x, double tol, const std::string& what) {
  long n = std::lround(x);
  if (std::abs(x - static_cast<double>(n)) > tol) {
    throw Error(ErrorCode::NonConvergent, what + " = " + std::to_string(x) + " is not within " + std::to_string(tol) +
                                              " of an integer");
  }
  return n;
}

CMatrix symplectic_w0(Eigen::Index m) {
  const Eigen::Index r = m / 2;
  CMatrix w0 = CMatrix::Zero(m, m);
  w0.topRightCorner(r, r) = CMatrix::Identity(r, r);
  w0.bottomLeftCorner(r, r) = -CMatrix::Identity(r, r);
  return w0;
}

}  // namespace

// ---------------------------------------------------------------------------
// TRIM Pfaffians

TrimPfaffianResult km_trim_pfaffian(const SewingField& su) {
  TrimPfaffianResult out;
  const BZGrid& grid = su.grid;
  out.trims = grid.trims();
  double prod = 1.0;
  for (NodeIndex t : out.trims) {
    const CMatrix& w = su.w[t];
    double skew = max_abs(w + w.transpose());
    if (skew > 1e-8) throw Error(ErrorCode::NonSkewTrim, "|w + w^T| = " + std::to_string(skew) + " at node " + std::to_string(t));
    cplx pf = pfaffian(w);
    double sign = pf.real() >= 0 ? 1.0 : -1.0;
    double dev = std::abs(pf - sign);
    if (dev > 1e-4) {
      throw Error(ErrorCode::PfaffianOffCircle, "pfaffian " + std::to_string(pf.real()) + "+" + std::to_string(pf.imag()) +
                                                    "i at node " + std::to_string(t));
    }
    out.residual = std::max(out.residual, dev);
    out.pfaffians.push_back(pf);
    prod *= sign;
  }
  out.parity = prod > 0 ? 1 : -1;
  return out;
}

// ---------------------------------------------------------------------------
// Plane invariant

namespace {

// Symplectic frame [Theta psi_1 .. Theta psi_r, psi_1 .. psi_r] of the
// occupied space at a TRIM.
CMatrix kramers_frame(const CMatrix& occ, const TimeReversalOperator& theta) {
  const Eigen::Index m = occ.cols();
  const Eigen::Index r = m / 2;
  CMatrix psi(occ.rows(), r), tpsi(occ.rows(), r);
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index best_col = 0;
    double best = -1.0;
    CVector best_vec;
    for (Eigen::Index c = 0; c < m; ++c) {
      CVector v = occ.col(c);
      for (Eigen::Index j = 0; j < i; ++j) {
        v -= psi.col(j) * psi.col(j).dot(v);
        v -= tpsi.col(j) * tpsi.col(j).dot(v);
      }
      if (v.norm() > best) {
        best = v.norm();
        best_col = c;
        best_vec = v;
      }
    }
    (void)best_col;
    if (best < 1e-6) throw Error(ErrorCode::BoundaryGaugeFailure, "occupied space at TRIM has no Kramers basis");
    psi.col(i) = best_vec / best;
    tpsi.col(i) = theta.apply(psi.col(i));
    double leak = (tpsi.col(i) - occ * (occ.adjoint() * tpsi.col(i))).norm();
    if (leak > 1e-6) {
      throw Error(ErrorCode::BoundaryGaugeFailure, "Kramers partner leaves the occupied space (" + std::to_string(leak) + ")");
    }
  }
  CMatrix k(occ.rows(), m);
  k.leftCols(r) = tpsi;
  k.rightCols(r) = psi;
  return k;
}

CMatrix transport_step(const CMatrix& prev, const CMatrix& raw_next) {
  try {
    return raw_next * polar_unitary(raw_next.adjoint() * prev);
  } catch (const Error&) {
    throw Error(ErrorCode::BoundaryGaugeFailure, "occupied spaces of neighbouring nodes are nearly orthogonal");
  }
}

double link_phase(const CMatrix& a, const CMatrix& b) { return std::arg((a.adjoint() * b).determinant()); }

// Time-reversal constrained frames along the line n_q = q_node.
std::vector<CMatrix> constrained_line(const FrameField& plane, const TimeReversalOperator& theta, int q_node) {
  const BZGrid& g = plane.grid;
  const int np = g.size(0);
  const int half = np / 2;
  auto raw = [&](int p) { return plane.frames[g.index({wrap(p, np), q_node, 0})]; };
  std::vector<CMatrix> line(static_cast<std::size_t>(np));
  CMatrix k0 = kramers_frame(raw(half), theta);
  CMatrix kpi = kramers_frame(raw(0), theta);

  std::vector<CMatrix> ut(static_cast<std::size_t>(half) + 1);
  ut[0] = k0;
  for (int t = 1; t <= half; ++t) ut[static_cast<std::size_t>(t)] = transport_step(ut[static_cast<std::size_t>(t) - 1], raw(half + t));
  // ut[half] = kpi M; spread M^{-1} along the half line.
  CMatrix mismatch = polar_unitary(kpi.adjoint() * ut[static_cast<std::size_t>(half)]);
  CMatrix log_inv = log_unitary(mismatch.adjoint());
  for (int t = 0; t <= half; ++t) {
    CMatrix g_t = exp_anti_hermitian(log_inv * (static_cast<double>(t) / half));
    line[static_cast<std::size_t>(wrap(half + t, np))] = ut[static_cast<std::size_t>(t)] * g_t;
  }
  line[static_cast<std::size_t>(half)] = k0;
  line[0] = kpi;
  const CMatrix minus_w0 = -symplectic_w0(k0.cols());
  for (int t = 1; t < half; ++t) line[static_cast<std::size_t>(half - t)] = theta.apply(line[static_cast<std::size_t>(half + t)]) * minus_w0;
  return line;
}

}  // namespace

PlaneResult km_plane_invariant(const FrameField& plane, const TimeReversalOperator& theta) {
  const BZGrid& g = plane.grid;
  if (g.dim() != 2) throw Error(ErrorCode::IncompatibleGrid, "plane invariant needs a 2D frame field");
  if (plane.n_occ % 2 != 0) throw Error(ErrorCode::BoundaryGaugeFailure, "odd number of occupied states");
  const int np = g.size(0), nq = g.size(1);
  std::vector<CMatrix> frames = plane.frames;
  auto at = [&](int p, int q) -> CMatrix& { return frames[g.index({wrap(p, np), wrap(q, nq), 0})]; };

  const int q_zero = nq / 2, q_pi = 0;
  std::vector<CMatrix> bottom = constrained_line(plane, theta, q_zero);
  std::vector<CMatrix> top = constrained_line(plane, theta, q_pi);
  for (int p = 0; p < np; ++p) {
    at(p, q_zero) = bottom[static_cast<std::size_t>(p)];
    at(p, q_pi) = top[static_cast<std::size_t>(p)];
  }

  double boundary = 0.0;
  for (int p = 0; p < np; ++p) {
    boundary += link_phase(at(p, q_zero), at(p + 1, q_zero));
    boundary -= link_phase(at(p, q_pi), at(p + 1, q_pi));
  }
  double flux = 0.0;
  for (int q = q_zero; q < nq; ++q)
    for (int p = 0; p < np; ++p) {
      cplx loop = (at(p, q).adjoint() * at(p + 1, q)).determinant() * (at(p + 1, q).adjoint() * at(p + 1, q + 1)).determinant() *
                  (at(p + 1, q + 1).adjoint() * at(p, q + 1)).determinant() * (at(p, q + 1).adjoint() * at(p, q)).determinant();
      flux += std::arg(loop);
    }
  PlaneResult out;
  out.raw = (boundary - flux) / (2 * pi);
  long n = std::lround(out.raw);
  out.deviation = std::abs(out.raw - static_cast<double>(n));
  out.parity = parity_of(n);
  return out;
}

WeakStrongResult km_weak_strong(const BlochModel& model, const BZGrid& grid) {
  if (model.domain != DomainKind::Torus || model.dim != 3 || grid.dim() != 3) {
    throw Error(ErrorCode::IncompatibleGrid, "weak/strong indices need a 3-torus model");
  }
  WeakStrongResult out;
  for (int a = 0; a < 3; ++a) {
    const int nodes[2] = {grid.size(a) / 2, 0};
    for (int s = 0; s < 2; ++s) {
      FrameField plane = diagonalize_plane(model, grid, a, nodes[s]);
      out.planes[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)] = km_plane_invariant(plane, model.theta);
      out.deviation = std::max(out.deviation, out.planes[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)].deviation);
    }
    const auto& pl = out.planes[static_cast<std::size_t>(a)];
    out.strong_by_axis[static_cast<std::size_t>(a)] = pl[0].parity * pl[1].parity;
    out.weak[static_cast<std::size_t>(a)] = pl[1].parity;
  }
  if (out.strong_by_axis[0] != out.strong_by_axis[1] || out.strong_by_axis[1] != out.strong_by_axis[2]) {
    throw Error(ErrorCode::AxisInconsistency, "axis pairings give strong indices " + std::to_string(out.strong_by_axis[0]) +
                                                  ", " + std::to_string(out.strong_by_axis[1]) + ", " +
                                                  std::to_string(out.strong_by_axis[2]) + " (max deviation " +
                                                  std::to_string(out.deviation) + ")");
  }
  out.strong = out.strong_by_axis[0];
  return out;
}

// ---------------------------------------------------------------------------
// WZW and winding

namespace {

// Index sets of the diagonal blocks of w shared by every node.
std::vector<std::vector<Eigen::Index>> sewing_blocks(const SewingField& su) {
  const Eigen::Index m = su.w.empty() ? 0 : su.w[0].rows();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  auto find = [&](Eigen::Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (const CMatrix& w : su.w)
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < m; ++c)
        if (r != c && std::abs(w(r, c)) > 1e-12) parent[static_cast<std::size_t>(find(r))] = find(c);
  std::map<Eigen::Index, std::vector<Eigen::Index>> groups;
  for (Eigen::Index r = 0; r < m; ++r) groups[find(r)].push_back(r);
  std::vector<std::vector<Eigen::Index>> out;
  for (auto& [root, idx] : groups) out.push_back(std::move(idx));
  return out;
}

CMatrix sub_block(const CMatrix& w, const std::vector<Eigen::Index>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  CMatrix out(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) out(r, c) = w(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
  return out;
}

// Grundmann-Moeller rule of degree 7 on the unit 3-simplex (barycentric points).
struct SimplexRule {
  std::vector<std::array<double, 4>> points;
  std::vector<double> weights;

  SimplexRule() {
    constexpr int n = 3, s = 3, d = 2 * s + 1;
    auto factorial = [](int k) {
      double f = 1;
      for (int j = 2; j <= k; ++j) f *= j;
      return f;
    };
    for (int i = 0; i <= s; ++i) {
      const double denom = d + n - 2 * i;
      const double w = ((i % 2) ? -1.0 : 1.0) * std::pow(2.0, -2 * s) * std::pow(denom, d) / (factorial(i) * factorial(d + n - i));
      const int total = s - i;
      for (int b0 = 0; b0 <= total; ++b0)
        for (int b1 = 0; b0 + b1 <= total; ++b1)
          for (int b2 = 0; b0 + b1 + b2 <= total; ++b2) {
            int b3 = total - b0 - b1 - b2;
            points.push_back({(2 * b0 + 1) / denom, (2 * b1 + 1) / denom, (2 * b2 + 1) / denom, (2 * b3 + 1) / denom});
            weights.push_back(w);
          }
    }
  }
};

using Quat = Eigen::Vector4d;

// Unit quaternion of b / root for a U(2) matrix b, where root^2 = det b. The
// caller picks the branch of root; flipping it negates the quaternion.
Quat su2_quat(const CMatrix& b, cplx root) {
  cplx a = b(0, 0) / root, c = b(1, 0) / root;
  Quat q(a.real(), a.imag(), c.real(), c.imag());
  return q.normalized();
}

// Signed volume of the geodesic simplex spanned by four nearby unit quaternions:
// the integral of det(q0..q3) / |p|^4 over the affine simplex p = sum lambda_i q_i.
double spherical_simplex_volume(const std::array<Quat, 4>& q) {
  static const SimplexRule rule;
  Eigen::Matrix4d qm;
  for (int j = 0; j < 4; ++j) qm.col(j) = q[static_cast<std::size_t>(j)];
  const double det = qm.determinant();
  double acc = 0.0;
  for (std::size_t r = 0; r < rule.points.size(); ++r) {
    const auto& l = rule.points[r];
    Quat p = l[0] * q[0] + l[1] * q[1] + l[2] * q[2] + l[3] * q[3];
    double n2 = p.squaredNorm();
    acc += rule.weights[r] / (n2 * n2);
  }
  return det * acc;
}

double centred_density(const std::array<CMatrix, 8>& corner, const double h[3]) {
  CMatrix centre = CMatrix::Zero(corner[0].rows(), corner[0].cols());
  for (const CMatrix& c : corner) centre += c;
  const CMatrix cinv = (centre / 8.0).inverse();
  CMatrix l[3];
  for (int a = 0; a < 3; ++a) {
    CMatrix diff = CMatrix::Zero(centre.rows(), centre.cols());
    for (int b = 0; b < 8; ++b) {
      if ((b >> a) & 1) diff += corner[static_cast<std::size_t>(b)];
      else diff -= corner[static_cast<std::size_t>(b)];
    }
    l[a] = cinv * diff / (4.0 * h[a]);
  }
  return (l[0] * (l[1] * l[2] - l[2] * l[1])).trace().real();
}

constexpr int kuhn_perms[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
constexpr double kuhn_signs[6] = {1, 1, 1, -1, -1, -1};

}  // namespace

void check_wzw_smoothness(const SewingField& su, WzwScheme scheme) {
  // Finite differences need slowly varying frames; the simplicial scheme only
  // needs each cube to stay inside a cap, which wzw_cube_values checks itself.
  const double limit = scheme == WzwScheme::Simplicial ? 0.5 : 0.3;
  if (su.smoothness > limit) {
    throw Error(ErrorCode::RoughGauge, "frame smoothness " + std::to_string(su.smoothness) + " exceeds " + std::to_string(limit));
  }
}

std::vector<double> wzw_cube_values(const SewingField& su, WzwScheme scheme) {
  const BZGrid& grid = su.grid;
  if (grid.dim() != 3) throw Error(ErrorCode::IncompatibleGrid, "WZW density needs a 3-torus");
  const double h[3] = {grid.spacing(0), grid.spacing(1), grid.spacing(2)};
  const double scale = h[0] * h[1] * h[2] / (8 * pi * pi);
  const auto blocks = scheme == WzwScheme::Simplicial ? sewing_blocks(su) : std::vector<std::vector<Eigen::Index>>{};
  std::vector<double> out(grid.node_count());
  parallel_for(grid.node_count(), [&](std::size_t i) {
    if (scheme == WzwScheme::Forward) {
      const CMatrix winv = su.w[i].adjoint();
      CMatrix l[3];
      for (int a = 0; a < 3; ++a) l[a] = winv * (su.w[grid.shift(i, a, 1)] - su.w[i]) / h[a];
      out[i] = (l[0] * (l[1] * l[2] - l[2] * l[1])).trace().real() * scale;
      return;
    }
    // corner[b] sits at anchor + sum of e_a over the bits a of b.
    std::array<NodeIndex, 8> node;
    for (int b = 0; b < 8; ++b) {
      NodeIndex n = i;
      for (int a = 0; a < 3; ++a)
        if ((b >> a) & 1) n = grid.shift(n, a, 1);
      node[static_cast<std::size_t>(b)] = n;
    }
    if (scheme == WzwScheme::Centred) {
      std::array<CMatrix, 8> corner;
      for (int b = 0; b < 8; ++b) corner[static_cast<std::size_t>(b)] = su.w[node[static_cast<std::size_t>(b)]];
      out[i] = centred_density(corner, h) * scale;
      return;
    }
    double total = 0.0;
    for (const auto& idx : blocks) {
      if (idx.size() == 1) continue;  // U(1) blocks carry no 3-form
      if (idx.size() != 2) {
        std::array<CMatrix, 8> corner;
        for (int b = 0; b < 8; ++b) corner[static_cast<std::size_t>(b)] = sub_block(su.w[node[static_cast<std::size_t>(b)]], idx);
        total += centred_density(corner, h) * scale;
        continue;
      }
      std::array<Quat, 8> q;
      cplx root0;
      for (int b = 0; b < 8; ++b) {
        CMatrix blk = sub_block(su.w[node[static_cast<std::size_t>(b)]], idx);
        // Continue sqrt(det) from the anchor: det b moves by far less than pi across a
        // cube, so this is the continuous branch. For SU(2) blocks root is always 1.
        cplx root = std::sqrt(blk.determinant());
        if (b == 0) root0 = root;
        else if ((root * std::conj(root0)).real() < 0) root = -root;
        q[static_cast<std::size_t>(b)] = su2_quat(blk, root);
        // Geodesic simplices need the corners inside one open hemisphere.
        if (q[static_cast<std::size_t>(b)].dot(q[0]) <= 0.0) {
          throw Error(ErrorCode::RoughGauge, "sewing field turns by 90 degrees or more across a cube");
        }
      }
      double vol = 0.0;
      for (int p = 0; p < 6; ++p) {
        int v1 = 1 << kuhn_perms[p][0];
        int v2 = v1 | (1 << kuhn_perms[p][1]);
        vol += kuhn_signs[p] * spherical_simplex_volume({q[0], q[static_cast<std::size_t>(v1)], q[static_cast<std::size_t>(v2)], q[7]});
      }
      // Unit S^3 has volume 2 pi^2; orientation matches the forward scheme.
      total += vol / (2 * pi * pi);
    }
    out[i] = total;
  });
  return out;
}

WzwResult km_wzw(const SewingField& su, WzwScheme scheme) {
  check_wzw_smoothness(su, scheme);
  std::vector<double> cubes = wzw_cube_values(su, scheme);
  WzwResult out;
  for (double v : cubes) out.integral += v;
  out.nearest = nearest_checked(out.integral, 0.25, "WZW integral");
  out.residual = std::abs(out.integral - static_cast<double>(out.nearest));
  out.parity = parity_of(out.nearest);
  return out;
}

WindingResult km_winding(const SewingField& su, int family_axis, WzwScheme scheme) {
  check_wzw_smoothness(su, scheme);
  const BZGrid& grid = su.grid;
  if (family_axis < 0 || family_axis > 2) throw Error(ErrorCode::IncompatibleGrid, "family axis must be 0, 1 or 2");
  std::vector<double> cubes = wzw_cube_values(su, scheme);
  const int n = grid.size(family_axis);
  const double h = grid.spacing(family_axis);
  WindingResult out;
  out.slices.assign(static_cast<std::size_t>(n), 0.0);
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    out.slices[static_cast<std::size_t>(grid.coords(i)[static_cast<std::size_t>(family_axis)])] += cubes[i];
  }
  for (double& s : out.slices) s /= h;
  // u(theta_j) = exp(2 pi i sum_{j' < j} s_j' h) winds sum_j s_j h times; the
  // real partial sums carry the lift, so no branch tracking is needed.
  for (double s : out.slices) out.sum += s * h;
  out.index = nearest_checked(out.sum, 0.25, "winding sum");
  out.residual = std::abs(out.sum - static_cast<double>(out.index));
  out.parity = parity_of(out.index);
  return out;
}

// ---------------------------------------------------------------------------
// Chern-Simons

ChernSimonsResult km_chern_simons(const ConnectionField& conn, const SewingField& su) {
  const BZGrid& grid = conn.grid;
  if (grid.dim() != 3) throw Error(ErrorCode::IncompatibleGrid, "Chern-Simons needs a 3-torus");
  double qres = quaternionic_residual(conn, su);
  if (qres > 1e-6) {
    throw Error(ErrorCode::UnaveragedConnection, "quaternionic residual " + std::to_string(qres));
  }
  const double h[3] = {grid.spacing(0), grid.spacing(1), grid.spacing(2)};
  const double vol = h[0] * h[1] * h[2];
  static constexpr int perms[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
  static constexpr double signs[6] = {1, 1, 1, -1, -1, -1};
  std::vector<double> cells(grid.node_count());
  parallel_for(grid.node_count(), [&](std::size_t i) {
    const CMatrix* A[3] = {&conn.A[0][i], &conn.A[1][i], &conn.A[2][i]};
    CMatrix dA[3][3];  // dA[nu][lambda] = d_nu A_lambda
    for (int nu = 0; nu < 3; ++nu)
      for (int la = 0; la < 3; ++la)
        dA[nu][la] = (conn.A[static_cast<std::size_t>(la)][grid.shift(i, nu, 1)] - *A[la]) / h[nu];
    cplx total = 0.0;
    for (int p = 0; p < 6; ++p) {
      int mu = perms[p][0], nu = perms[p][1], la = perms[p][2];
      total += signs[p] * ((*A[mu]) * dA[nu][la]).trace();
      total += signs[p] * (2.0 / 3.0) * ((*A[mu]) * (*A[nu]) * (*A[la])).trace();
    }
    cells[i] = total.real() * vol / (8 * pi * pi);
  });
  ChernSimonsResult out;
  for (double c : cells) out.cs += c;
  double wzw = 0.0;
  for (double v : wzw_cube_values(su, WzwScheme::Simplicial)) wzw += v;
  out.wzw_integral = wzw;
  out.relation_residual = std::abs(out.cs + 0.5 * wzw);
  if (out.relation_residual > 0.1) {
    throw Error(ErrorCode::NonConvergent, "|cs + wzw/2| = " + std::to_string(out.relation_residual));
  }
  long twice = nearest_checked(2 * out.cs, 0.25, "2 cs");
  out.residual = std::abs(2 * out.cs - static_cast<double>(twice));
  out.parity = parity_of(twice);
  return out;
}

// ---------------------------------------------------------------------------
// S^3

namespace {

// Occupied frame of a chiral-symmetric Hamiltonian, smooth wherever it is gapped:
// in the eigenbasis of C, H = [[0, q], [q^dagger, 0]] and the occupied states are
// V [-q (q^dagger q)^{-1/2}; 1] / sqrt 2.
struct ChiralFrame {
  CMatrix V;  // columns: +1 eigenvectors of C, then -1 eigenvectors
  Eigen::Index half = 0;

  explicit ChiralFrame(const CMatrix& c) {
    CMatrix ch = 0.5 * (c + c.adjoint());
    EigResult e = hermitian_eig(ch);
    half = c.rows() / 2;
    V.resize(c.rows(), c.cols());
    V.leftCols(half) = e.vectors.rightCols(half);
    V.rightCols(half) = e.vectors.leftCols(half);
  }

  CMatrix occupied(const CMatrix& h, double& gap) const {
    CMatrix ht = V.adjoint() * h * V;
    CMatrix q = ht.topRightCorner(half, half);
    EigResult qq = hermitian_eig(q.adjoint() * q);
    gap = std::sqrt(std::max(0.0, qq.values(0)));
    RVector inv_sqrt = qq.values.cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    CMatrix root_inv = qq.vectors * inv_sqrt.asDiagonal() * qq.vectors.adjoint();
    CMatrix u(2 * half, half);
    u.topRows(half) = -q * root_inv;
    u.bottomRows(half) = CMatrix::Identity(half, half);
    return V * u / std::sqrt(2.0);
  }
};

}  // namespace

S3Result km_s3(const BlochModel& model, int mesh) {
  if (model.domain != DomainKind::Sphere3) throw Error(ErrorCode::IncompatibleGrid, "km_s3 needs a sphere model");
  if (!model.chiral) throw Error(ErrorCode::IncompatibleGrid, "sphere model lacks a chiral operator");
  if (mesh < 4 || mesh % 2 != 0) throw Error(ErrorCode::OddGrid, "mesh must be even and >= 4");
  if (model.n_occ * 2 != model.n_bands) throw Error(ErrorCode::IncompatibleGrid, "chiral frames need half filling");
  const int n1 = mesh, n2 = mesh, n3 = 2 * mesh;
  const double h1 = pi / n1, h2 = pi / n2, h3 = 2 * pi / n3;
  auto node = [&](int i, int j, int l) {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(n2 + 1) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(n3) +
           static_cast<std::size_t>(wrap(l, n3));
  };
  const std::size_t count = static_cast<std::size_t>(n1 + 1) * static_cast<std::size_t>(n2 + 1) * static_cast<std::size_t>(n3);
  ChiralFrame chiral(*model.chiral);
  {
    double ang[3] = {0.3, 0.7, 1.1};
    CMatrix h = evaluate(model, ang);
    if (max_abs(*model.chiral * h * model.chiral->adjoint() + h) > 1e-9) {
      throw Error(ErrorCode::IncompatibleGrid, "chiral operator does not anticommute with H");
    }
  }

  std::vector<CMatrix> u(count);
  std::vector<double> gaps(count);
  parallel_for(count, [&](std::size_t idx) {
    int l = static_cast<int>(idx % static_cast<std::size_t>(n3));
    int j = static_cast<int>((idx / static_cast<std::size_t>(n3)) % static_cast<std::size_t>(n2 + 1));
    int i = static_cast<int>(idx / (static_cast<std::size_t>(n3) * static_cast<std::size_t>(n2 + 1)));
    double ang[3] = {h1 * i, h2 * j, h3 * l};
    u[idx] = chiral.occupied(evaluate(model, ang), gaps[idx]);
  });
  S3Result out;
  out.min_gap = *std::min_element(gaps.begin(), gaps.end());
  if (!(out.min_gap > 1e-8)) throw Error(ErrorCode::GaplessAt, "sphere model closes its gap on the mesh");

  // Involution: every angle b -> pi - b.
  auto mirror = [&](int i, int j, int l) { return node(n1 - i, n2 - j, n3 / 2 - l); };
  std::vector<CMatrix> w(count);
  parallel_for(count, [&](std::size_t idx) {
    int l = static_cast<int>(idx % static_cast<std::size_t>(n3));
    int j = static_cast<int>((idx / static_cast<std::size_t>(n3)) % static_cast<std::size_t>(n2 + 1));
    int i = static_cast<int>(idx / (static_cast<std::size_t>(n3) * static_cast<std::size_t>(n2 + 1)));
    w[idx] = u[mirror(i, j, l)].adjoint() * model.theta.apply(u[idx]);
  });

  // Cell-centred WZW density.
  const std::size_t ncell = static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2) * static_cast<std::size_t>(n3);
  auto cell = [&](int i, int j, int l) {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(n2) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(n3) +
           static_cast<std::size_t>(wrap(l, n3));
  };
  std::vector<double> c(ncell);
  const double scale = h1 * h2 * h3 / (8 * pi * pi);
  parallel_for(ncell, [&](std::size_t idx) {
    int l = static_cast<int>(idx % static_cast<std::size_t>(n3));
    int j = static_cast<int>((idx / static_cast<std::size_t>(n3)) % static_cast<std::size_t>(n2));
    int i = static_cast<int>(idx / (static_cast<std::size_t>(n3) * static_cast<std::size_t>(n2)));
    const CMatrix* corner[2][2][2];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int e = 0; e < 2; ++e) corner[a][b][e] = &w[node(i + a, j + b, l + e)];
    CMatrix centre = CMatrix::Zero(w[0].rows(), w[0].cols());
    CMatrix d1 = centre, d2 = centre, d3 = centre;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        d1 += *corner[1][a][b] - *corner[0][a][b];
        d2 += *corner[a][1][b] - *corner[a][0][b];
        d3 += *corner[a][b][1] - *corner[a][b][0];
        centre += *corner[a][b][0] + *corner[a][b][1];
      }
    centre /= 8.0;
    CMatrix inv = centre.inverse();
    CMatrix l1 = inv * d1 / (4 * h1), l2 = inv * d2 / (4 * h2), l3 = inv * d3 / (4 * h3);
    c[idx] = (l1 * (l2 * l3 - l3 * l2)).trace().real() * scale;
  });

  // Odd part under the involution (the density is even cell-by-cell up to rounding).
  std::vector<double> odd(ncell);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      for (int l = 0; l < n3; ++l) {
        double here = c[cell(i, j, l)], there = c[cell(n1 - 1 - i, n2 - 1 - j, n3 / 2 - 1 - l)];
        odd[cell(i, j, l)] = 0.5 * (here + there);
        out.symmetric_part += std::abs(0.5 * (here - there));
      }
  for (double v : odd) out.upsilon += v;

  // Descent S^3 -> S^2 (b1 = pi/2) -> S^1 (b2 = pi/2) -> {N, S}.
  std::vector<double> eta2(static_cast<std::size_t>(n2) * static_cast<std::size_t>(n3), 0.0);
  for (int i = 0; i < n1 / 2; ++i)
    for (int j = 0; j < n2; ++j)
      for (int l = 0; l < n3; ++l) eta2[static_cast<std::size_t>(j * n3 + l)] += odd[cell(i, j, l)];
  std::vector<double> rho2(eta2.size());
  double level2 = 0.0;
  for (int j = 0; j < n2; ++j)
    for (int l = 0; l < n3; ++l) {
      int jm = n2 - 1 - j, lm = wrap(n3 / 2 - 1 - l, n3);
      rho2[static_cast<std::size_t>(j * n3 + l)] = eta2[static_cast<std::size_t>(j * n3 + l)] + eta2[static_cast<std::size_t>(jm * n3 + lm)];
      level2 += rho2[static_cast<std::size_t>(j * n3 + l)];
    }
  std::vector<double> eta1(static_cast<std::size_t>(n3), 0.0);
  for (int j = 0; j < n2 / 2; ++j)
    for (int l = 0; l < n3; ++l) eta1[static_cast<std::size_t>(l)] += rho2[static_cast<std::size_t>(j * n3 + l)];
  std::vector<double> rho1(static_cast<std::size_t>(n3));
  double level1 = 0.0;
  for (int l = 0; l < n3; ++l) {
    rho1[static_cast<std::size_t>(l)] = eta1[static_cast<std::size_t>(l)] + eta1[static_cast<std::size_t>(wrap(n3 / 2 - 1 - l, n3))];
    level1 += rho1[static_cast<std::size_t>(l)];
  }
  // Half circle from S (b3 = 3 pi / 2) to N (b3 = pi / 2) with theta(S) = 0.
  double theta_n = 0.0;
  for (int l = 3 * n3 / 4; l < n3 + n3 / 4; ++l) theta_n += rho1[static_cast<std::size_t>(wrap(l, n3))];
  out.rho0_N = 2 * theta_n;
  out.rho0_S = 0.0;
  out.level_integrals = {out.upsilon, level2, level1, out.rho0_N + out.rho0_S};

  long n = nearest_checked(out.upsilon, 0.25, "sphere WZW quadrature");
  out.residual = std::abs(out.upsilon - static_cast<double>(n));
  out.parity = parity_of(n);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"pfaffian", "planes", "wzw", "winding", "cs", "s3", "localise"};
  return m;
}

void finalize_consensus(InvariantReport& report) {
  report.consensus = true;
  std::optional<int> first;
  for (const auto& [name, res] : report.methods) {
    if (!first) first = res.parity;
    else if (*first != res.parity) report.consensus = false;
  }
}

SewingPipeline build_sewing(const BlochModel& model, const BZGrid& grid, const GaugeOptions& options) {
  SewingPipeline p;
  p.raw = diagonalize_grid(model, grid);
  p.smooth = smooth_gauge(p.raw, options);
  p.w = sewing_field(p.smooth, model.theta);
  p.su = su_reduce(p.w);
  return p;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start, bool record) {
  if (!record) return 0.0;
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

InvariantReport compute_report(const BlochModel& model, const std::vector<int>& grid_sizes,
                               const std::vector<std::string>& methods, const PipelineOptions& options) {
  InvariantReport report;
  report.model = model.name;
  report.params = model.params;
  report.grid = grid_sizes;
  for (const auto& m : methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw Error(ErrorCode::Usage, "unknown method '" + m + "'");
    }
  }
  auto wants = [&](const char* m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  auto record_failure = [&](const std::string& method, const Error& e) {
    if (e.code() != ErrorCode::NonConvergent && e.code() != ErrorCode::PfaffianOffCircle &&
        e.code() != ErrorCode::AxisInconsistency && e.code() != ErrorCode::UnaveragedConnection &&
        e.code() != ErrorCode::RoughGauge && e.code() != ErrorCode::ConvergenceFailure) {
      throw;
    }
    report.unconverged.push_back(method);
    report.notes.push_back(method + ": " + e.what());
  };

  if (model.domain == DomainKind::Sphere3) {
    for (const auto& m : methods) {
      if (m != "s3") report.notes.push_back(m + ": not defined on the sphere domain; skipped");
    }
    if (wants("s3")) {
      auto t0 = std::chrono::steady_clock::now();
      try {
        S3Result r = km_s3(model, options.s3_mesh);
        report.methods["s3"] = {r.parity, r.upsilon, r.residual, elapsed_ms(t0, options.record_timings)};
        report.notes.push_back("s3: rho0(N) = " + std::to_string(r.rho0_N) + ", rho0(S) = " + std::to_string(r.rho0_S));
      } catch (const Error& e) {
        record_failure("s3", e);
      }
    }
    finalize_consensus(report);
    return report;
  }

  BZGrid grid(grid_sizes);
  if (wants("s3")) report.notes.push_back("s3: only defined for sphere models; skipped");
  const bool needs_sewing = wants("pfaffian") || wants("wzw") || wants("winding") || wants("cs") || wants("localise");
  SewingPipeline pipe;
  double sewing_ms = 0.0;
  bool sewing_ok = true;
  const bool three_d = grid.dim() == 3;
  if (needs_sewing) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      pipe = build_sewing(model, grid, options.gauge);
    } catch (const Error& e) {
      // Every sewing-based method shares this failure; the plane route still runs.
      sewing_ok = false;
      for (const char* m : {"pfaffian", "wzw", "winding", "cs", "localise"}) {
        if (wants(m) && (three_d || std::string(m) == "pfaffian")) record_failure(m, e);
      }
    }
    sewing_ms = elapsed_ms(t0, options.record_timings);
  }

  if (sewing_ok && wants("pfaffian")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      TrimPfaffianResult r = km_trim_pfaffian(pipe.su);
      double raw = 1.0;
      for (const auto& pf : r.pfaffians) raw *= pf.real();
      report.methods["pfaffian"] = {r.parity, raw, r.residual, sewing_ms + elapsed_ms(t0, options.record_timings)};
      report.trim_pfaffians = r.pfaffians;
    } catch (const Error& e) {
      record_failure("pfaffian", e);
    }
  }
  if (wants("planes")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      if (three_d) {
        WeakStrongResult r = km_weak_strong(model, grid);
        double raw = r.planes[2][0].raw + r.planes[2][1].raw;
        report.methods["planes"] = {r.strong, raw, r.deviation, elapsed_ms(t0, options.record_timings)};
        report.weak = r.weak;
        report.strong = r.strong;
        report.notes.push_back("weak indices use the k_a = pi planes");
      } else {
        FrameField frames = diagonalize_grid(model, grid);
        PlaneResult r = km_plane_invariant(frames, model.theta);
        report.methods["planes"] = {r.parity, r.raw, r.deviation, elapsed_ms(t0, options.record_timings)};
      }
    } catch (const Error& e) {
      record_failure("planes", e);
    }
  }
  for (const char* m : {"wzw", "winding", "cs", "localise"}) {
    if (wants(m) && !three_d) report.notes.push_back(std::string(m) + ": needs a 3-torus; skipped");
  }
  if (sewing_ok && three_d && wants("wzw")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      WzwResult r = km_wzw(pipe.su);
      report.methods["wzw"] = {r.parity, r.integral, r.residual, sewing_ms + elapsed_ms(t0, options.record_timings)};
    } catch (const Error& e) {
      record_failure("wzw", e);
    }
  }
  if (sewing_ok && three_d && wants("winding")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      WindingResult r = km_winding(pipe.su, options.winding_axis);
      report.methods["winding"] = {r.parity, r.sum, r.residual, sewing_ms + elapsed_ms(t0, options.record_timings)};
    } catch (const Error& e) {
      record_failure("winding", e);
    }
  }
  if (sewing_ok && three_d && wants("cs")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      ConnectionField avg = quaternionic_average(berry_connection(pipe.smooth), pipe.su);
      ChernSimonsResult r = km_chern_simons(avg, pipe.su);
      report.methods["cs"] = {r.parity, r.cs, r.residual, sewing_ms + elapsed_ms(t0, options.record_timings)};
      report.notes.push_back("cs: |cs + wzw/2| = " + std::to_string(r.relation_residual));
    } catch (const Error& e) {
      record_failure("cs", e);
    }
  }
  if (sewing_ok && three_d && wants("localise")) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      SampledForm form = sample_wzw(pipe.su);
      LocalisationTrace trace = localise(form.cochain);
      if (!trace.parity) throw Error(ErrorCode::NonConvergent, "fixed-point sum " + std::to_string(trace.total) + " is not near an integer");
      report.methods["localise"] = {*trace.parity, trace.total, std::abs(trace.total - std::round(trace.total)),
                                    sewing_ms + elapsed_ms(t0, options.record_timings)};
    } catch (const Error& e) {
      record_failure("localise", e);
    }
  }
  finalize_consensus(report);
  return report;
}

}  // namespace tki
