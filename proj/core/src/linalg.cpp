#include "tki/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "tki/error.hpp"

namespace tki {

namespace {

void require_square(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::NonSquare, std::string(what) + " got " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()));
  }
}

bool all_finite(const CMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

}  // namespace

double max_abs(const CMatrix& m) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) r = std::max(r, std::abs(m(i, j)));
  return r;
}

double op_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues()(0);
}

EigResult hermitian_eig(const CMatrix& h) {
  require_square(h, "hermitian_eig");
  if (!all_finite(h)) throw Error(ErrorCode::NonHermitian, "matrix has non-finite entries");
  double scale = max_abs(h);
  double defect = max_abs(h - h.adjoint());
  if (defect > 1e-10 * (1.0 + scale)) {
    throw Error(ErrorCode::NonHermitian, "|H - H^dagger|_max = " + std::to_string(defect));
  }
  CMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::EigFailure, "eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

cplx pfaffian(const CMatrix& a_in) {
  require_square(a_in, "pfaffian");
  const Eigen::Index n = a_in.rows();
  if (n % 2 != 0) throw Error(ErrorCode::OddDimension, "dimension " + std::to_string(n));
  if (n == 0) return 1.0;
  double scale = max_abs(a_in);
  double defect = max_abs(a_in + a_in.transpose());
  if (defect > 1e-9 * (1.0 + scale)) {
    throw Error(ErrorCode::NotSkew, "|A + A^T|_max = " + std::to_string(defect));
  }

  CMatrix a = 0.5 * (a_in - a_in.transpose());
  cplx pf = 1.0;
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    Eigen::Index pivot = k + 1;
    double best = std::abs(a(k + 1, k));
    for (Eigen::Index i = k + 2; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        pivot = i;
      }
    }
    if (pivot != k + 1) {
      a.row(k + 1).swap(a.row(pivot));
      a.col(k + 1).swap(a.col(pivot));
      pf = -pf;
    }
    if (a(k, k + 1) == cplx(0.0)) return 0.0;
    pf *= a(k, k + 1);
    if (k + 2 < n) {
      const Eigen::Index rest = n - k - 2;
      CVector tau = a.row(k).segment(k + 2, rest).transpose() / a(k, k + 1);
      CVector col = a.col(k + 1).segment(k + 2, rest);
      // Rank-2 skew update of the trailing block.
      a.block(k + 2, k + 2, rest, rest) += tau * col.transpose() - col * tau.transpose();
    }
  }
  return pf;
}

CMatrix polar_unitary(const CMatrix& m) {
  if (m.size() == 0) return m;
  Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  double smax = s(0);
  double smin = s(s.size() - 1);
  if (!(smax > 0.0) || smin <= 1e-10 * smax) {
    throw Error(ErrorCode::NearSingular, "sigma_min/sigma_max = " + std::to_string(smax > 0 ? smin / smax : 0.0));
  }
  return svd.matrixU() * svd.matrixV().adjoint();
}

PhaseTrack phase_continue(std::span<const cplx> z) {
  PhaseTrack out;
  if (z.empty()) return out;
  out.phases.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (std::abs(z[i]) == 0.0 || !std::isfinite(std::abs(z[i]))) {
      throw Error(ErrorCode::ZeroEntry, "sample " + std::to_string(i));
    }
  }
  out.phases.push_back(std::arg(z[0]));
  for (std::size_t i = 1; i < z.size(); ++i) {
    double step = std::arg(z[i] / z[i - 1]);
    if (std::abs(step) >= std::numbers::pi / 2) {
      throw Error(ErrorCode::UndersampledPath,
                  "phase step " + std::to_string(step) + " at sample " + std::to_string(i));
    }
    out.phases.push_back(out.phases.back() + step);
  }
  out.raw_winding = (out.phases.back() - out.phases.front()) / (2 * std::numbers::pi);
  out.winding = std::lround(out.raw_winding);
  return out;
}

CMatrix anti_hermitian_part(const CMatrix& m) { return 0.5 * (m - m.adjoint()); }

namespace {

// Unitary matrices are normal, so their Schur form is diagonal.
void unitary_schur(const CMatrix& u, CMatrix& q, CVector& diag) {
  Eigen::ComplexSchur<CMatrix> schur(u);
  q = schur.matrixU();
  diag = schur.matrixT().diagonal();
}

}  // namespace

RVector unitary_phases(const CMatrix& u) {
  CMatrix q;
  CVector d;
  unitary_schur(u, q, d);
  RVector out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) out(i) = std::arg(d(i));
  return out;
}

CMatrix log_unitary(const CMatrix& u) {
  if (u.rows() == 1) {
    CMatrix r(1, 1);
    r(0, 0) = cplx(0.0, std::arg(u(0, 0)));
    return r;
  }
  CMatrix q;
  CVector d;
  unitary_schur(u, q, d);
  CVector l(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) l(i) = cplx(0.0, std::arg(d(i)));
  CMatrix r = q * l.asDiagonal() * q.adjoint();
  return anti_hermitian_part(r);
}

CMatrix exp_anti_hermitian(const CMatrix& a) {
  if (a.rows() == 1) {
    CMatrix r(1, 1);
    r(0, 0) = std::exp(cplx(0.0, a(0, 0).imag()));
    return r;
  }
  // a = i h with h Hermitian.
  CMatrix h = cplx(0.0, -1.0) * anti_hermitian_part(a);
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(0.5 * (h + h.adjoint()));
  const RVector& lam = solver.eigenvalues();
  CVector e(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) e(i) = std::exp(cplx(0.0, lam(i)));
  return solver.eigenvectors() * e.asDiagonal() * solver.eigenvectors().adjoint();
}

double kramers_defect(const CMatrix& u) {
  const Eigen::Index n = u.rows();
  CMatrix id = CMatrix::Identity(n, n);
  double unit = max_abs(u * u.adjoint() - id);
  double square = max_abs(u * u.conjugate() + id);
  return std::max(unit, square);
}

}  // namespace tki
