#pragma once

// Solver kernels: sparse SPD direct solve with many right-hand sides,
// symmetric-definite generalized eigendecomposition (Cholesky reduction +
// LAPACK dsyevd), and conjugate gradients on regularized normal equations
// in a weighted inner product.

#include <lapacke.h>

#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>

#include "fdot/types.hpp"

namespace fdot {

namespace detail {

// LAPACK dsyevd, eigenvalues ascending on return; reordered descending here.
// jobz: 'V' for vectors, 'N' for values only.
inline void dsyevd_descending(Mat& A, Vec& d, bool vectors) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  if (A.cols() != n) throw ValidationError("dsyevd: matrix must be square");
  d.resize(n);
  if (n == 0) return;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'L', n,
                                          A.data(), n, d.data());
  if (info != 0)
    throw NumericalError("dsyevd failed with info=" + std::to_string(info));
  d.reverseInPlace();
  if (vectors) {
    A = A.rowwise().reverse().eval();
    // deterministic sign: largest-magnitude entry of each column positive
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index imax = 0;
      A.col(j).cwiseAbs().maxCoeff(&imax);
      if (A(imax, j) < 0) A.col(j) = -A.col(j);
    }
  }
}

}  // namespace detail

/// Dense symmetric eigendecomposition, eigenvalues descending.
/// Input is symmetrized defensively; eigenvectors are orthonormal columns.
inline void sym_eig_descending(const Mat& C, Vec& d, Mat& Q) {
  Q = 0.5 * (C + C.transpose());
  detail::dsyevd_descending(Q, d, true);
}

/// Eigenvalues only, descending.
inline Vec sym_eigvals_descending(const Mat& C) {
  Mat W = 0.5 * (C + C.transpose());
  Vec d;
  detail::dsyevd_descending(W, d, false);
  return d;
}

/// Sparse SPD factorization reused across many right-hand sides.
/// One iterative-refinement pass enforces a 1e-10 relative residual per column.
class SpdSolver {
 public:
  explicit SpdSolver(const SpMat& A) : A_(A) {
    if (A.rows() != A.cols()) throw ValidationError("SpdSolver: matrix must be square");
    ldlt_.compute(A_);
    if (ldlt_.info() != Eigen::Success)
      throw NumericalError("SpdSolver: factorization failed (structure or numerics)");
    const Vec& D = ldlt_.vectorD();
    for (Eigen::Index i = 0; i < D.size(); ++i)
      if (!(D[i] > 0))
        throw NumericalError("SpdSolver: nonpositive pivot " + std::to_string(D[i]) +
                             " at elimination index " + std::to_string(i) +
                             " (matrix not positive definite)");
  }

  Mat solve(const Mat& RHS) const {
    if (RHS.rows() != A_.rows()) throw ValidationError("SpdSolver::solve: dimension mismatch");
    Mat X = ldlt_.solve(RHS);
    Mat R = RHS - A_ * X;
    if (!residual_ok(R, RHS)) {
      X += ldlt_.solve(R);
      R = RHS - A_ * X;
      if (!residual_ok(R, RHS))
        throw NumericalError("SpdSolver::solve: residual above 1e-10 after refinement");
    }
    return X;
  }

  Vec solve(const Vec& rhs) const { return solve(Mat(rhs)).col(0); }

  const SpMat& matrix() const { return A_; }

 private:
  static bool residual_ok(const Mat& R, const Mat& RHS) {
    for (Eigen::Index j = 0; j < R.cols(); ++j) {
      const double rn = RHS.col(j).norm();
      if (R.col(j).norm() > 1e-10 * (rn > 0 ? rn : 1.0)) return false;
    }
    return true;
  }

  SpMat A_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

inline Mat spd_solve_multi(const SpMat& A, const Mat& RHS) { return SpdSolver(A).solve(RHS); }

struct GeneralizedEigenResult {
  Vec eigenvalues;   // descending, nonnegative after PSD clamp
  Mat eigenvectors;  // columns B-orthonormal
};

/// Solve C a = d B a for symmetric PSD C and SPD B via Cholesky reduction:
/// B = L L', eigendecompose L^-1 C L^-T, back-transform A = L^-T Q.
inline GeneralizedEigenResult sym_generalized_eig(const Mat& C, const Mat& B) {
  if (C.rows() != C.cols() || B.rows() != B.cols() || C.rows() != B.rows())
    throw ValidationError("sym_generalized_eig: dimension mismatch");
  const double cnorm = C.norm();
  Eigen::LLT<Mat> llt(B);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sym_generalized_eig: B is not positive definite (Cholesky failed)");
  Mat W = 0.5 * (C + C.transpose());
  // W <- L^-1 W L^-T
  llt.matrixL().solveInPlace(W);
  llt.matrixL().solveInPlace(W.transpose());
  GeneralizedEigenResult r;
  detail::dsyevd_descending(W, r.eigenvalues, true);
  const double floor_tol = 1e-10 * (cnorm > 0 ? cnorm : 1.0);
  for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) {
    if (r.eigenvalues[i] < -floor_tol)
      throw NumericalError("sym_generalized_eig: eigenvalue " + std::to_string(r.eigenvalues[i]) +
                           " below PSD tolerance (C must be positive semidefinite)");
    if (r.eigenvalues[i] < 0) r.eigenvalues[i] = 0;
  }
  r.eigenvectors = llt.matrixU().solve(W);
  return r;
}

inline GeneralizedEigenResult sym_generalized_eig(const Mat& C, const SpMat& B) {
  return sym_generalized_eig(C, Mat(B));
}

struct CgResult {
  Vec c;
  int iterations = 0;
  bool converged = false;
  double relres = 0.0;
};

/// Conjugate gradients for (T*T + alpha I) c = T* Mdelta in the weighted
/// inner product <u,v> = sum_p u_p w_p v_p. applyT maps an m-vector to a
/// data matrix, applyTt is its adjoint; the pair is verified at setup.
/// Stops on relative residual <= tol, stagnation, or maxit (flagged).
template <class ApplyT, class ApplyTt>
CgResult cg_normal_equations(ApplyT&& applyT, ApplyTt&& applyTt, const Mat& Mdelta,
                             double alpha, double tol, int maxit, const Vec& xw,
                             const std::function<void(int, const Vec&)>& on_iterate = {}) {
  if (!(alpha > 0)) throw ValidationError("cg_normal_equations: alpha must be > 0");
  if (maxit < 0) throw ValidationError("cg_normal_equations: maxit must be >= 0");
  const Eigen::Index m = xw.size();
  const auto xdot = [&xw](const Vec& u, const Vec& v) { return (u.array() * xw.array() * v.array()).sum(); };

  {  // randomized adjoint check
    std::mt19937_64 gen(0x5eed5eedULL);
    auto unit = [&gen]() {
      // fixed-width uniform; avoids distribution implementation differences
      return 2.0 * (double((gen() >> 11)) * 0x1p-53) - 1.0;
    };
    for (int rep = 0; rep < 3; ++rep) {
      Vec c(m);
      for (Eigen::Index i = 0; i < m; ++i) c[i] = unit();
      const Mat Tc = applyT(c);
      Mat M(Tc.rows(), Tc.cols());
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = unit();
      const double lhs = (Tc.array() * M.array()).sum();
      const double rhs = xdot(c, applyTt(M));
      const double scale = Tc.norm() * M.norm();
      if (std::abs(lhs - rhs) > 1e-10 * (scale > 0 ? scale : 1.0))
        throw NumericalError("cg_normal_equations: applyT/applyTt fail the adjoint test");
    }
  }

  const auto applyA = [&](const Vec& v) -> Vec { return applyTt(applyT(v)) + alpha * v; };

  CgResult res;
  res.c = Vec::Zero(m);
  const Vec b = applyTt(Mdelta);
  const double bnorm = std::sqrt(xdot(b, b));
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Vec r = b;
  Vec p = r;
  double rs = xdot(r, r);
  const double eps = std::numeric_limits<double>::epsilon();
  for (int it = 1; it <= maxit; ++it) {
    const Vec Ap = applyA(p);
    const double pAp = xdot(p, Ap);
    if (!(pAp > 0)) {
      res.relres = std::sqrt(rs) / bnorm;
      return res;  // curvature lost to roundoff; iterate returned as-is
    }
    const double gamma = rs / pAp;
    const double step = gamma * std::sqrt(xdot(p, p));
    res.c += gamma * p;
    r -= gamma * Ap;
    res.iterations = it;
    if (on_iterate) on_iterate(it, res.c);
    const double rs_next = xdot(r, r);
    res.relres = std::sqrt(rs_next) / bnorm;
    if (res.relres <= tol) {
      res.converged = true;
      return res;
    }
    if (step <= eps * std::sqrt(xdot(res.c, res.c))) return res;  // stagnated
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return res;
}

}  // namespace fdot
