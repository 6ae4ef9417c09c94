#include "tki/bloch.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "tki/error.hpp"
#include "tki/parallel.hpp"

namespace tki {

namespace {

constexpr double pi = std::numbers::pi;

CMatrix identity(Eigen::Index m) { return CMatrix::Identity(m, m); }

std::vector<FrameBlock> frame_blocks(const BlochModel& model) {
  std::vector<FrameBlock> out;
  int col = 0;
  if (model.blocks.empty()) {
    FrameBlock b;
    for (int i = 0; i < model.n_bands; ++i) b.bands.push_back(i);
    b.n_occ = model.n_occ;
    out.push_back(b);
    return out;
  }
  for (const auto& blk : model.blocks) {
    out.push_back({blk.bands, col, blk.n_occ});
    col += blk.n_occ;
  }
  return out;
}

CMatrix block_rows(const CMatrix& frame, const FrameBlock& b) {
  CMatrix out(static_cast<Eigen::Index>(b.bands.size()), b.n_occ);
  for (std::size_t r = 0; r < b.bands.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = frame.row(b.bands[r]).segment(b.col0, b.n_occ);
  return out;
}

void store_block_rows(CMatrix& frame, const FrameBlock& b, const CMatrix& sub) {
  for (std::size_t r = 0; r < b.bands.size(); ++r) frame.row(b.bands[r]).segment(b.col0, b.n_occ) = sub.row(static_cast<Eigen::Index>(r));
}

}  // namespace

double link_deficiency(const CMatrix& a, const CMatrix& b) {
  CMatrix m = a.adjoint() * b;
  return op_norm(identity(m.rows()) - m);
}

double measure_smoothness(const BZGrid& grid, const std::vector<CMatrix>& frames) {
  std::vector<double> per_node(grid.node_count(), 0.0);
  parallel_for(grid.node_count(), [&](std::size_t i) {
    double worst = 0.0;
    for (int a = 0; a < grid.dim(); ++a) worst = std::max(worst, link_deficiency(frames[i], frames[grid.shift(i, a, 1)]));
    per_node[i] = worst;
  });
  return *std::max_element(per_node.begin(), per_node.end());
}

FrameField diagonalize_grid(const BlochModel& model, const BZGrid& grid) {
  if (model.domain != DomainKind::Torus || model.dim != grid.dim()) {
    throw Error(ErrorCode::IncompatibleGrid, "model " + model.name + " cannot be sampled on this grid");
  }
  FrameField out;
  out.grid = grid;
  out.n_bands = model.n_bands;
  out.n_occ = model.n_occ;
  out.blocks = frame_blocks(model);
  out.frames.assign(grid.node_count(), CMatrix());
  out.energies.assign(grid.node_count(), RVector());

  parallel_for(grid.node_count(), [&](std::size_t i) {
    auto k = grid.momentum(i);
    CMatrix h = evaluate(model, std::span<const double>(k.data(), static_cast<std::size_t>(grid.dim())));
    CMatrix frame = CMatrix::Zero(model.n_bands, model.n_occ);
    std::vector<double> occ;
    double covered = 0.0;
    for (const auto& b : out.blocks) {
      const auto nb = static_cast<Eigen::Index>(b.bands.size());
      CMatrix sub(nb, nb);
      for (Eigen::Index r = 0; r < nb; ++r)
        for (Eigen::Index c = 0; c < nb; ++c) sub(r, c) = h(b.bands[static_cast<std::size_t>(r)], b.bands[static_cast<std::size_t>(c)]);
      covered += sub.squaredNorm();
      EigResult eig = hermitian_eig(sub);
      if (eig.values(b.n_occ - 1) >= -1e-8 || eig.values(b.n_occ) <= 1e-8) {
        throw Error(ErrorCode::GaplessAt, "node " + std::to_string(i) + " of model " + model.name);
      }
      CMatrix sub_frame = eig.vectors.leftCols(b.n_occ);
      for (Eigen::Index r = 0; r < nb; ++r) frame.row(b.bands[static_cast<std::size_t>(r)]).segment(b.col0, b.n_occ) = sub_frame.row(r);
      for (int j = 0; j < b.n_occ; ++j) occ.push_back(eig.values(j));
    }
    if (std::abs(h.squaredNorm() - covered) > 1e-20 + 1e-12 * h.squaredNorm()) {
      throw Error(ErrorCode::EigFailure, "Hamiltonian couples declared band blocks at node " + std::to_string(i));
    }
    std::sort(occ.begin(), occ.end());
    out.frames[i] = std::move(frame);
    out.energies[i] = Eigen::Map<RVector>(occ.data(), static_cast<Eigen::Index>(occ.size()));
  });
  out.smoothness = measure_smoothness(grid, out.frames);
  return out;
}

FrameField diagonalize_plane(const BlochModel& model, const BZGrid& grid3, int axis, int node) {
  if (model.dim != 3 || grid3.dim() != 3) throw Error(ErrorCode::IncompatibleGrid, "plane slices need a 3D model");
  BlochModel slice = model;
  slice.dim = 2;
  double kfix = grid3.k(axis, node);
  auto h = model.hamiltonian;
  slice.hamiltonian = [h, axis, kfix](std::span<const double> k2) {
    std::array<double, 3> k{};
    int j = 0;
    for (int a = 0; a < 3; ++a) k[static_cast<std::size_t>(a)] = a == axis ? kfix : k2[static_cast<std::size_t>(j++)];
    return h(std::span<const double>(k.data(), 3));
  };
  std::vector<int> sizes;
  for (int a = 0; a < 3; ++a)
    if (a != axis) sizes.push_back(grid3.size(a));
  return diagonalize_grid(slice, BZGrid(sizes));
}

// ---------------------------------------------------------------------------
// Smooth gauge

namespace {

CMatrix transport(const CMatrix& prev, const CMatrix& raw_next) {
  return raw_next * polar_unitary(raw_next.adjoint() * prev);
}

// Unit quaternion <-> SU(2): q = (a0, a1, b0, b1) for [[a, -conj b], [b, conj a]].
using Quat = Eigen::Vector4d;

Quat to_quat(const CMatrix& x) { return Quat(x(0, 0).real(), x(0, 0).imag(), x(1, 0).real(), x(1, 0).imag()); }

CMatrix from_quat(const Quat& q) {
  CMatrix x(2, 2);
  cplx a(q(0), q(1)), b(q(2), q(3));
  x << a, -std::conj(b), b, std::conj(a);
  return x;
}

std::vector<Quat> candidate_poles() {
  std::vector<Quat> out;
  out.emplace_back(-1, 0, 0, 0);
  const int vals[5] = {-2, -1, 0, 1, 2};
  for (int a : vals)
    for (int b : vals)
      for (int c : vals)
        for (int d : vals) {
          Quat q(a, b, c, d);
          if (q.norm() > 0) out.push_back(q.normalized());
        }
  return out;
}

// Paths s -> C_j(s) in SU(2) from 1 to X_j that depend smoothly on j. Straight
// lines in the stereographic chart centred away from every X_j never pass
// through the chart's pole, unlike principal logarithms, which jump when an
// eigenphase crosses pi.
class Su2Contraction {
 public:
  explicit Su2Contraction(const std::vector<CMatrix>& targets) {
    std::vector<Quat> pts;
    pts.reserve(targets.size() + 1);
    pts.emplace_back(1, 0, 0, 0);
    for (const auto& x : targets) pts.push_back(to_quat(x));
    double best = -1.0;
    for (const Quat& cand : candidate_poles()) {
      double dmin = 4.0;
      for (const Quat& p : pts) dmin = std::min(dmin, (p - cand).norm());
      // Prefer the antipode of the identity (geodesic-like paths) when it is clear.
      if (cand(0) == -1.0 && dmin > 0.6) {
        pole_ = cand;
        best = dmin;
        break;
      }
      if (dmin > best + 1e-12) {
        best = dmin;
        pole_ = cand;
      }
    }
    if (best < 0.05) throw Error(ErrorCode::ConvergenceFailure, "closing unitaries cover SU(2); no contraction chart");
    start_ = project(Quat(1, 0, 0, 0));
  }

  CMatrix at(const CMatrix& target, double s) const {
    Eigen::Vector4d y = (1 - s) * start_ + s * project(to_quat(target));
    double y2 = y.squaredNorm();
    Quat x = (2 * y + (y2 - 1) * pole_) / (y2 + 1);
    return from_quat(x.normalized());
  }

 private:
  Eigen::Vector4d project(const Quat& x) const {
    double c = x.dot(pole_);
    return (x - c * pole_) / (1 - c);
  }

  Quat pole_{-1, 0, 0, 0};
  Eigen::Vector4d start_;
};

// Continuous phase of z over a periodic grid of dimension 0-2 (the transverse
// torus of a sweep). Returns the phase and reports a nonzero winding through
// `winding_axis` / `winding`.
struct TorusPhase {
  std::vector<double> phase;
  int winding_axis = -1;
  long winding = 0;
  bool undersampled = false;
};

TorusPhase continuous_phase(const std::vector<int>& dims, const std::vector<cplx>& z) {
  TorusPhase out;
  out.phase.assign(z.size(), 0.0);
  if (z.empty()) return out;
  const int d = static_cast<int>(dims.size());
  std::vector<std::size_t> stride(static_cast<std::size_t>(d), 1);
  for (int a = d - 2; a >= 0; --a) stride[static_cast<std::size_t>(a)] = stride[static_cast<std::size_t>(a) + 1] * static_cast<std::size_t>(dims[static_cast<std::size_t>(a) + 1]);
  auto coord = [&](std::size_t idx, int a) { return static_cast<int>((idx / stride[static_cast<std::size_t>(a)]) % static_cast<std::size_t>(dims[static_cast<std::size_t>(a)])); };
  auto step = [&](std::size_t from, std::size_t to) {
    double s = std::arg(z[to] / z[from]);
    if (std::abs(s) >= pi / 2) out.undersampled = true;
    return s;
  };

  out.phase[0] = std::arg(z[0]);
  // Spanning tree: walk axis a from the already-visited set n_b = 0 (b >= a).
  for (std::size_t idx = 1; idx < z.size(); ++idx) {
    int a = d - 1;
    while (a >= 0 && coord(idx, a) == 0) --a;
    std::size_t parent = idx - stride[static_cast<std::size_t>(a)];
    out.phase[idx] = out.phase[parent] + step(parent, idx);
  }
  // Every link must agree with the tree; otherwise the phase winds.
  for (std::size_t idx = 0; idx < z.size(); ++idx) {
    for (int a = 0; a < d; ++a) {
      std::size_t nb = coord(idx, a) + 1 == dims[static_cast<std::size_t>(a)] ? idx - stride[static_cast<std::size_t>(a)] * static_cast<std::size_t>(dims[static_cast<std::size_t>(a)] - 1)
                                                                               : idx + stride[static_cast<std::size_t>(a)];
      double mismatch = out.phase[idx] + step(idx, nb) - out.phase[nb];
      long w = std::lround(mismatch / (2 * pi));
      if (w != 0 && out.winding == 0) {
        out.winding = w;
        out.winding_axis = a;
      }
    }
  }
  return out;
}

// Family of paths G_j(s), s in [0, 1], from 1 to X_j (unitary m x m), smooth in j.
class Contraction {
 public:
  Contraction(const std::vector<int>& dims, const std::vector<CMatrix>& targets, int sweep_axis,
              const std::vector<int>& transverse_axes)
      : m_(targets.empty() ? 0 : targets[0].rows()) {
    std::vector<cplx> dets(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) dets[j] = targets[j].determinant();
    TorusPhase tp = continuous_phase(dims, dets);
    if (tp.undersampled) {
      throw Error(ErrorCode::ConvergenceFailure, "Wilson-loop determinant varies too fast across the grid");
    }
    if (tp.winding != 0) {
      int ta = transverse_axes[static_cast<std::size_t>(tp.winding_axis)];
      throw Error(ErrorCode::ChernObstruction, "plane (" + std::to_string(std::min(ta, sweep_axis)) + "," +
                                                   std::to_string(std::max(ta, sweep_axis)) + ") carries Chern number " +
                                                   std::to_string(tp.winding));
    }
    phase_ = tp.phase;
    special_.resize(targets.size());
    for (std::size_t j = 0; j < targets.size(); ++j) {
      special_[j] = std::exp(cplx(0.0, -phase_[j] / static_cast<double>(m_))) * targets[j];
    }
    if (m_ == 2) {
      su2_.emplace(special_);
    } else if (m_ > 2) {
      logs_.resize(targets.size());
      for (std::size_t j = 0; j < targets.size(); ++j) {
        RVector ph = unitary_phases(special_[j]);
        if (ph.cwiseAbs().maxCoeff() > pi - 0.3) {
          throw Error(ErrorCode::ConvergenceFailure, "rank > 2 closing unitary has eigenphases near pi");
        }
        logs_[j] = log_unitary(special_[j]);
      }
    }
  }

  CMatrix at(std::size_t j, double s) const {
    cplx u1 = std::exp(cplx(0.0, s * phase_[j] / static_cast<double>(m_)));
    if (m_ == 1) return CMatrix::Constant(1, 1, u1);
    if (m_ == 2) return u1 * su2_->at(special_[j], s);
    return u1 * exp_anti_hermitian(s * logs_[j]);
  }

 private:
  Eigen::Index m_;
  std::vector<double> phase_;
  std::vector<CMatrix> special_;
  std::optional<Su2Contraction> su2_;
  std::vector<CMatrix> logs_;
};

double link_functional(const BZGrid& grid, const std::vector<CMatrix>& u) {
  double f = 0.0;
  for (NodeIndex i = 0; i < u.size(); ++i)
    for (int a = 0; a < grid.dim(); ++a) f += (u[i].adjoint() * u[grid.shift(i, a, 1)]).trace().real();
  return f;
}

// Red-black Gauss-Seidel on the link functional with over-relaxation
// g -> polar(1 + omega (g - 1)). Even grids are bipartite, so each colour
// updates independently and the result does not depend on the thread count.
void relax(const BZGrid& grid, std::vector<CMatrix>& u, const GaugeOptions& options) {
  const int d = grid.dim();
  std::vector<std::vector<NodeIndex>> colour(2);
  for (NodeIndex i = 0; i < u.size(); ++i) {
    Coords c = grid.coords(i);
    colour[static_cast<std::size_t>((c[0] + c[1] + c[2]) % 2)].push_back(i);
  }
  double f = link_functional(grid, u);
  const double scale = static_cast<double>(u.size() * static_cast<std::size_t>(d) * static_cast<std::size_t>(u[0].cols()));
  for (int it = 0; it < options.relax_sweeps; ++it) {
    for (const auto& nodes : colour) {
      parallel_for(nodes.size(), [&](std::size_t j) {
        NodeIndex i = nodes[j];
        const Eigen::Index m = u[i].cols();
        CMatrix acc = CMatrix::Zero(u[i].rows(), m);
        for (int a = 0; a < d; ++a) {
          acc += u[grid.shift(i, a, 1)];
          acc += u[grid.shift(i, a, -1)];
        }
        acc = u[i].adjoint() * acc;
        CMatrix g;
        try {
          g = polar_unitary(acc);
          g = polar_unitary((1.0 - options.overrelax) * identity(m) + options.overrelax * g);
        } catch (const Error&) {
          return;  // degenerate neighbourhood; leave the node for the next sweep
        }
        u[i] = u[i] * g;
      });
    }
    double next = link_functional(grid, u);
    bool done = std::abs(next - f) < options.relax_tolerance * scale;
    f = next;
    if (done) break;
  }
}

std::vector<CMatrix> gauge_block(const BZGrid& grid, const std::vector<CMatrix>& raw, const GaugeOptions& options) {
  const int d = grid.dim();
  std::vector<CMatrix> u(raw.size());
  u[0] = raw[0];
  for (int a = 0; a < d; ++a) {
    // Base nodes: n_b = 0 for all b >= a, enumerated lexicographically over axes < a.
    std::vector<int> dims;
    std::vector<int> transverse;
    for (int b = 0; b < a; ++b) {
      dims.push_back(grid.size(b));
      transverse.push_back(b);
    }
    std::size_t nbase = 1;
    for (int n : dims) nbase *= static_cast<std::size_t>(n);
    auto base_node = [&](std::size_t j) {
      Coords c{0, 0, 0};
      for (int b = a - 1; b >= 0; --b) {
        c[static_cast<std::size_t>(b)] = static_cast<int>(j % static_cast<std::size_t>(grid.size(b)));
        j /= static_cast<std::size_t>(grid.size(b));
      }
      return grid.index(c);
    };
    const int len = grid.size(a);
    std::vector<std::vector<CMatrix>> lines(nbase);
    std::vector<CMatrix> closing(nbase);
    parallel_for(nbase, [&](std::size_t j) {
      NodeIndex b = base_node(j);
      auto& line = lines[j];
      line.resize(static_cast<std::size_t>(len));
      line[0] = u[b];
      NodeIndex node = b;
      for (int t = 1; t < len; ++t) {
        node = grid.shift(node, a, 1);
        line[static_cast<std::size_t>(t)] = transport(line[static_cast<std::size_t>(t) - 1], raw[node]);
      }
      CMatrix back = transport(line.back(), raw[b]);
      // back = u(b) W; the correction must end at W^{-1}.
      closing[j] = polar_unitary(back.adjoint() * u[b]);
    });
    Contraction contraction(dims, closing, a, transverse);
    parallel_for(nbase, [&](std::size_t j) {
      NodeIndex node = base_node(j);
      for (int t = 0; t < len; ++t) {
        if (t > 0) node = grid.shift(node, a, 1);
        double s = static_cast<double>(t) / len;
        u[node] = lines[j][static_cast<std::size_t>(t)] * contraction.at(j, s);
      }
    });
  }
  relax(grid, u, options);
  return u;
}

}  // namespace

FrameField smooth_gauge(const FrameField& raw, const GaugeOptions& options) {
  FrameField out = raw;
  for (const auto& b : raw.blocks) {
    std::vector<CMatrix> sub(raw.frames.size());
    for (std::size_t i = 0; i < sub.size(); ++i) sub[i] = block_rows(raw.frames[i], b);
    std::vector<CMatrix> smooth = gauge_block(raw.grid, sub, options);
    for (std::size_t i = 0; i < sub.size(); ++i) store_block_rows(out.frames[i], b, smooth[i]);
  }
  out.smoothness = measure_smoothness(out.grid, out.frames);
  return out;
}

FrameField apply_gauge(const FrameField& frames, const std::vector<CMatrix>& a) {
  if (a.size() != frames.frames.size()) throw Error(ErrorCode::GaugeMismatch, "gauge field size differs from frame field");
  FrameField out = frames;
  for (std::size_t i = 0; i < a.size(); ++i) out.frames[i] = frames.frames[i] * a[i];
  out.smoothness = measure_smoothness(out.grid, out.frames);
  return out;
}

// ---------------------------------------------------------------------------
// Sewing field

SewingField sewing_field_unchecked(const FrameField& frames, const TimeReversalOperator& theta) {
  SewingField out;
  out.grid = frames.grid;
  out.smoothness = frames.smoothness;
  out.w.resize(frames.frames.size());
  parallel_for(frames.frames.size(), [&](std::size_t i) {
    const CMatrix& u = frames.frames[i];
    const CMatrix& um = frames.frames[frames.grid.involution(i)];
    out.w[i] = um.adjoint() * theta.apply(u);
  });
  out.det_phase.assign(out.w.size(), 0.0);
  return out;
}

SewingField sewing_field(const FrameField& frames, const TimeReversalOperator& theta) {
  if (frames.smoothness > 0.5) {
    throw Error(ErrorCode::RoughGauge, "frame smoothness " + std::to_string(frames.smoothness) + " exceeds 0.5");
  }
  return sewing_field_unchecked(frames, theta);
}

SewingField su_reduce(const SewingField& wfield) {
  const BZGrid& grid = wfield.grid;
  std::vector<cplx> dets(wfield.w.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    dets[i] = wfield.w[i].determinant();
    if (std::abs(dets[i]) < 1e-8) throw Error(ErrorCode::DetWinding, "det w vanishes at node " + std::to_string(i));
  }
  TorusPhase tp = continuous_phase(grid.sizes(), dets);
  if (tp.undersampled) throw Error(ErrorCode::DetWinding, "det w undersampled (phase step above pi/2)");
  if (tp.winding != 0) {
    throw Error(ErrorCode::DetWinding, "cycle along axis " + std::to_string(tp.winding_axis) + " winds " +
                                           std::to_string(tp.winding) + " times");
  }
  SewingField out = wfield;
  const double m = static_cast<double>(wfield.w.empty() ? 1 : wfield.w[0].rows());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    std::size_t j = grid.involution(i);
    double gap = tp.phase[i] - tp.phase[j];
    if (std::abs(gap) > 1e-6) {
      throw Error(ErrorCode::DetWinding, "det phase not involution-even at node " + std::to_string(i));
    }
    // Symmetrized so that the reduced field keeps w(-k) = -w(k)^T exactly.
    double phi = 0.5 * (tp.phase[i] + tp.phase[j]);
    out.det_phase[i] = phi;
    out.w[i] = std::exp(cplx(0.0, -phi / m)) * wfield.w[i];
  }
  out.su_reduced = true;
  return out;
}

SewingDiagnostics sewing_diagnostics(const SewingField& wfield) {
  SewingDiagnostics d;
  const BZGrid& grid = wfield.grid;
  for (std::size_t i = 0; i < wfield.w.size(); ++i) {
    const CMatrix& w = wfield.w[i];
    d.unitarity = std::max(d.unitarity, max_abs(w.adjoint() * w - identity(w.rows())));
    d.involution = std::max(d.involution, max_abs(wfield.w[grid.involution(i)] + w.transpose()));
    if (grid.is_trim(i)) d.trim_skew = std::max(d.trim_skew, max_abs(w + w.transpose()));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Connections

ConnectionField berry_connection(const FrameField& frames) {
  if (frames.smoothness > 0.5) {
    throw Error(ErrorCode::RoughGauge, "frame smoothness " + std::to_string(frames.smoothness) + " exceeds 0.5");
  }
  const BZGrid& grid = frames.grid;
  ConnectionField out;
  out.grid = grid;
  out.A.assign(static_cast<std::size_t>(grid.dim()), std::vector<CMatrix>(grid.node_count()));
  for (int a = 0; a < grid.dim(); ++a) {
    const double h = grid.spacing(a);
    auto& Aa = out.A[static_cast<std::size_t>(a)];
    parallel_for(grid.node_count(), [&](std::size_t i) {
      const CMatrix& u = frames.frames[i];
      Aa[i] = anti_hermitian_part(u.adjoint() * frames.frames[grid.shift(i, a, 1)]) / h;
    });
  }
  return out;
}

namespace {

void require_compatible(const ConnectionField& conn, const SewingField& wfield) {
  if (!(conn.grid == wfield.grid) || conn.A.empty() || conn.A[0].size() != wfield.w.size() ||
      conn.A[0][0].rows() != wfield.w[0].rows()) {
    throw Error(ErrorCode::GaugeMismatch, "connection and sewing field live on different grids or ranks");
  }
}

// Phi(A) on the link anchored at i along axis a.
CMatrix reflected_link(const ConnectionField& conn, const SewingField& wfield, int a, std::size_t i) {
  const BZGrid& grid = conn.grid;
  const double h = grid.spacing(a);
  std::size_t ip = grid.shift(i, a, 1);
  std::size_t mirror = grid.shift(grid.involution(i), a, -1);
  const CMatrix& w0 = wfield.w[i];
  const CMatrix& w1 = wfield.w[ip];
  CMatrix wl = polar_unitary(w0 + w1);
  CMatrix theta = anti_hermitian_part(wl.adjoint() * (w1 - w0) / h);
  CMatrix img = wl.adjoint() * conn.A[static_cast<std::size_t>(a)][mirror] * wl - theta;
  return img.transpose();
}

}  // namespace

double quaternionic_residual(const ConnectionField& conn, const SewingField& wfield) {
  require_compatible(conn, wfield);
  double r = 0.0;
  for (int a = 0; a < conn.grid.dim(); ++a)
    for (std::size_t i = 0; i < wfield.w.size(); ++i)
      r = std::max(r, max_abs(conn.A[static_cast<std::size_t>(a)][i] - reflected_link(conn, wfield, a, i)));
  return r;
}

ConnectionField quaternionic_average(const ConnectionField& conn, const SewingField& wfield) {
  require_compatible(conn, wfield);
  ConnectionField out = conn;
  for (int a = 0; a < conn.grid.dim(); ++a) {
    auto& Aa = out.A[static_cast<std::size_t>(a)];
    parallel_for(wfield.w.size(), [&](std::size_t i) {
      Aa[i] = anti_hermitian_part(0.5 * (conn.A[static_cast<std::size_t>(a)][i] + reflected_link(conn, wfield, a, i)));
    });
  }
  out.quaternionic_residual = quaternionic_residual(out, wfield);
  return out;
}

// ---------------------------------------------------------------------------
// Plane fluxes

namespace {

cplx link_det(const CMatrix& a, const CMatrix& b) {
  cplx z = (a.adjoint() * b).determinant();
  return z / std::abs(z);
}

double plane_flux(const BZGrid& grid, const std::vector<CMatrix>& frames, int pa, int pb, int fixed_axis, int fixed_node) {
  double total = 0.0;
  Coords c{0, 0, 0};
  if (fixed_axis >= 0) c[static_cast<std::size_t>(fixed_axis)] = fixed_node;
  for (int i = 0; i < grid.size(pa); ++i)
    for (int j = 0; j < grid.size(pb); ++j) {
      c[static_cast<std::size_t>(pa)] = i;
      c[static_cast<std::size_t>(pb)] = j;
      NodeIndex n00 = grid.index(c);
      NodeIndex n10 = grid.shift(n00, pa, 1);
      NodeIndex n11 = grid.shift(n10, pb, 1);
      NodeIndex n01 = grid.shift(n00, pb, 1);
      cplx loop = link_det(frames[n00], frames[n10]) * link_det(frames[n10], frames[n11]) *
                  link_det(frames[n11], frames[n01]) * link_det(frames[n01], frames[n00]);
      total += std::arg(loop);
    }
  return total / (2 * pi);
}

}  // namespace

std::vector<PlaneChern> plane_chern_numbers(const FrameField& frames) {
  const BZGrid& grid = frames.grid;
  std::vector<PlaneChern> out;
  if (grid.dim() == 2) {
    out.push_back({0, 1, -1, 0, plane_flux(grid, frames.frames, 0, 1, -1, 0)});
    return out;
  }
  if (grid.dim() != 3) return out;
  for (int fixed = 2; fixed >= 0; --fixed) {
    int pa = fixed == 0 ? 1 : 0;
    int pb = fixed == 2 ? 1 : 2;
    std::vector<PlaneChern> slab(static_cast<std::size_t>(grid.size(fixed)));
    parallel_for(slab.size(), [&](std::size_t n) {
      slab[n] = {pa, pb, fixed, static_cast<int>(n), plane_flux(grid, frames.frames, pa, pb, fixed, static_cast<int>(n))};
    });
    out.insert(out.end(), slab.begin(), slab.end());
  }
  return out;
}

FrameField restrict_to_plane(const FrameField& frames3, int axis, int node) {
  const BZGrid& g3 = frames3.grid;
  if (g3.dim() != 3) throw Error(ErrorCode::IncompatibleGrid, "restrict_to_plane needs a 3D field");
  std::vector<int> keep;
  for (int a = 0; a < 3; ++a)
    if (a != axis) keep.push_back(a);
  FrameField out;
  out.grid = BZGrid({g3.size(keep[0]), g3.size(keep[1])});
  out.n_bands = frames3.n_bands;
  out.n_occ = frames3.n_occ;
  out.blocks = frames3.blocks;
  out.frames.resize(out.grid.node_count());
  out.energies.resize(out.grid.node_count());
  for (NodeIndex i = 0; i < out.grid.node_count(); ++i) {
    Coords c2 = out.grid.coords(i);
    Coords c3{0, 0, 0};
    c3[static_cast<std::size_t>(axis)] = node;
    c3[static_cast<std::size_t>(keep[0])] = c2[0];
    c3[static_cast<std::size_t>(keep[1])] = c2[1];
    NodeIndex j = g3.index(c3);
    out.frames[i] = frames3.frames[j];
    out.energies[i] = frames3.energies[j];
  }
  out.smoothness = measure_smoothness(out.grid, out.frames);
  return out;
}

}  // namespace tki
