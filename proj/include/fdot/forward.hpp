#pragma once

// Truth approximation of the measurement operator. Excitation and adjoint
// emission fields are solved for every boundary source, then sources and
// detectors are rotated into bases that diagonalize the solution operators
// (generalized eigenbases of the range Gram against the boundary Gram).
// The operator acts as T(c) = V' diag(DD .* c) U with singular factors
// exposed for truncation.

#include <cmath>
#include <string>

#include "fdot/fem.hpp"
#include "fdot/linalg.hpp"
#include "fdot/mesh.hpp"
#include "fdot/types.hpp"

namespace fdot {

struct TruthOperator {
  Mat U;   // m x k excitation solutions, columns scaled to the eigenbasis
  Mat V;   // m x k adjoint emission solutions, likewise
  Mat Qx;  // k x k source coefficients, columns SY-orthonormal
  Mat Qm;  // k x k detector coefficients, columns SZ-orthonormal
  Vec sx;  // descending singular values of the excitation operator
  Vec sm;  // descending singular values of the emission operator
  SpMat SX, GU, SY, SZ;
  Vec DD;  // lumped quadrature weights of the parameter space (all > 0)
  double gain = 1.0;  // illumination times detector strength, multiplies T
  int mesh_level = 0;

  int m() const { return static_cast<int>(U.rows()); }
  int k() const { return static_cast<int>(U.cols()); }
};

namespace detail {

inline constexpr int kSolveBlock = 256;

// A^-1 (E Qcols), solved in column blocks to bound transient memory
inline Mat solve_sources(const SpdSolver& solver, const SpMat& E, const Mat& Q) {
  const Eigen::Index m = E.rows(), k = Q.cols();
  Mat X(m, k);
  for (Eigen::Index j0 = 0; j0 < k; j0 += kSolveBlock) {
    const Eigen::Index nb = std::min<Eigen::Index>(kSolveBlock, k - j0);
    const Mat rhs = E * Q.middleCols(j0, nb);
    X.middleCols(j0, nb) = solver.solve(rhs);
  }
  return X;
}

// W' G W accumulated in column blocks (G sparse symmetric)
inline Mat gram_project(const SpMat& G, const Mat& W) {
  const Eigen::Index k = W.cols();
  Mat out(k, k);
  for (Eigen::Index j0 = 0; j0 < k; j0 += kSolveBlock) {
    const Eigen::Index nb = std::min<Eigen::Index>(kSolveBlock, k - j0);
    const Mat Gblk = G * W.middleCols(j0, nb);
    out.middleCols(j0, nb).noalias() = W.transpose() * Gblk;
  }
  return out;
}

// W <- W * A without a full-size temporary
inline void inplace_right_multiply(Mat& W, const Mat& A) {
  constexpr Eigen::Index chunk = 8192;
  for (Eigen::Index r0 = 0; r0 < W.rows(); r0 += chunk) {
    const Eigen::Index nr = std::min(chunk, W.rows() - r0);
    W.middleRows(r0, nr) = (W.middleRows(r0, nr) * A).eval();
  }
}

}  // namespace detail

inline Mat solve_excitation(const FemSystem& system_x, const Mat& Qx) {
  SpdSolver solver(system_x.A_sys);
  return detail::solve_sources(solver, system_x.E, Qx);
}

inline Mat solve_emission_adjoint(const FemSystem& system_m, const Mat& Qm) {
  SpdSolver solver(system_m.A_sys);
  return detail::solve_sources(solver, system_m.E, Qm);
}

/// Rotate (U, Qx) into the generalized eigenbasis of (U' GU U, SY) and
/// (V, Qm) into that of (V' GU V, SZ); singular values are the square roots
/// of the eigenvalues. Mutates the passed factors to avoid copies.
inline TruthOperator orthonormalize(Mat U, Mat V, Mat Qx, Mat Qm, const SpMat& GU,
                                    const SpMat& SY, const SpMat& SZ) {
  TruthOperator op;
  GeneralizedEigenResult ex = sym_generalized_eig(detail::gram_project(GU, U), SY);
  detail::inplace_right_multiply(U, ex.eigenvectors);
  detail::inplace_right_multiply(Qx, ex.eigenvectors);
  op.sx = ex.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  GeneralizedEigenResult em = sym_generalized_eig(detail::gram_project(GU, V), SZ);
  detail::inplace_right_multiply(V, em.eigenvectors);
  detail::inplace_right_multiply(Qm, em.eigenvectors);
  op.sm = em.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  op.U = std::move(U);
  op.V = std::move(V);
  op.Qx = std::move(Qx);
  op.Qm = std::move(Qm);
  op.GU = GU;
  op.SY = SY;
  op.SZ = SZ;
  return op;
}

/// Full truth operator for one mesh: assemble both parameter sets, solve all
/// boundary sources, orthonormalize against the range Gram.
inline TruthOperator build_truth_operator(const Mesh& mesh, const OpticalParameters& excitation,
                                          const OpticalParameters& emission,
                                          GramVariant gram = GramVariant::L2) {
  const FemSystem sys_x = assemble_system(mesh, excitation, gram);
  const FemSystem sys_m = assemble_system(mesh, emission, gram);
  const int k = mesh.n_boundary();
  Mat U = solve_excitation(sys_x, Mat::Identity(k, k));
  Mat V = solve_emission_adjoint(sys_m, Mat::Identity(k, k));
  TruthOperator op = orthonormalize(std::move(U), std::move(V), Mat::Identity(k, k),
                                    Mat::Identity(k, k), sys_x.GU, sys_x.SY, sys_x.SY);
  op.SX = sys_x.SX;
  op.DD = sys_x.DD;
  // Sources enter through the Robin condition kappa du/dn + rho (u - q) = 0 at
  // unit pattern strength; the measured data carries the impedance of both the
  // illumination and the detector coupling as a scalar factor on T.
  op.gain = excitation.rho * emission.rho;
  op.mesh_level = mesh.level;
  return op;
}

/// M_ij = gain * sum_p V_pi U_pj DD_p c_p
inline Mat apply_T(const TruthOperator& op, const Vec& c) {
  if (c.size() != op.U.rows()) throw ValidationError("apply_T: dimension mismatch");
  const Vec wc = op.DD.cwiseProduct(c);
  return op.gain * (op.V.transpose() * wc.asDiagonal() * op.U);
}

/// c_p = gain * sum_ij V_pi M_ij U_pj (adjoint in the lumped X inner product)
inline Vec apply_Tt(const TruthOperator& op, const Mat& M) {
  if (M.rows() != op.V.cols() || M.cols() != op.U.cols())
    throw ValidationError("apply_Tt: dimension mismatch");
  return op.gain * ((op.V * M).array() * op.U.array()).rowwise().sum();
}

/// Largest singular value of T, estimated by power iteration on T*T in the
/// lumped X inner product. Relative change below rtol terminates.
inline double operator_norm(const TruthOperator& op, int maxit = 200, double rtol = 1e-10) {
  Vec v = Vec::Ones(op.m());
  v /= std::sqrt((v.array() * op.DD.array() * v.array()).sum());
  double lambda = 0.0;
  for (int it = 0; it < maxit; ++it) {
    Vec w = apply_Tt(op, apply_T(op, v));
    const double next = (v.array() * op.DD.array() * w.array()).sum();
    const double wn = std::sqrt((w.array() * op.DD.array() * w.array()).sum());
    if (wn == 0.0) return 0.0;
    w /= wn;
    v.swap(w);
    if (it > 0 && std::abs(next - lambda) <= rtol * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(lambda);
}

}  // namespace fdot
