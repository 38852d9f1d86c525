#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fdot/linalg.hpp"
#include "fdot/rng.hpp"

using namespace fdot;

namespace {

Mat random_matrix(int rows, int cols, std::uint64_t seed) {
  GaussianSampler g(seed);
  Mat M(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) M(i, j) = g.next();
  return M;
}

Mat random_spd(int n, std::uint64_t seed) {
  const Mat M = random_matrix(n, n, seed);
  return M.transpose() * M + Mat::Identity(n, n);
}

SpMat sparse_identity(int n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

}  // namespace

TEST(SymEig, ReconstructsRandomSymmetric) {
  Mat A = random_matrix(40, 40, 11);
  A = Mat(0.5 * (A + A.transpose()));
  Vec d;
  Mat Q;
  sym_eig_descending(A, d, Q);
  for (int i = 0; i + 1 < 40; ++i) EXPECT_GE(d[i], d[i + 1]);
  EXPECT_LE((Q * d.asDiagonal() * Q.transpose() - A).norm(), 1e-12 * A.norm());
  EXPECT_LE((Q.transpose() * Q - Mat::Identity(40, 40)).norm(), 1e-12);
}

TEST(SymEig, SignNormalizationIsDeterministic) {
  const Mat A = random_spd(12, 5);
  Vec d1, d2;
  Mat Q1, Q2;
  sym_eig_descending(A, d1, Q1);
  sym_eig_descending(A, d2, Q2);
  EXPECT_EQ((Q1 - Q2).norm(), 0.0);
  for (int j = 0; j < Q1.cols(); ++j) {
    Eigen::Index imax;
    Q1.col(j).cwiseAbs().maxCoeff(&imax);
    EXPECT_GT(Q1(imax, j), 0.0);
  }
}

TEST(SpdSolve, IdentityAndDiagonal) {
  const Mat RHS = random_matrix(3, 2, 7);
  EXPECT_LE((spd_solve_multi(sparse_identity(3), RHS) - RHS).norm(), 1e-14);

  SpMat D(3, 3);
  D.insert(0, 0) = 1.0;
  D.insert(1, 1) = 2.0;
  D.insert(2, 2) = 4.0;
  D.makeCompressed();
  const Vec x = spd_solve_multi(D, Mat::Ones(3, 1)).col(0);
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 0.5, 1e-15);
  EXPECT_NEAR(x[2], 0.25, 1e-15);
}

TEST(SpdSolve, ResidualBoundColumnwise) {
  const Mat A = random_spd(50, 3);
  const SpMat As = A.sparseView();
  const Mat RHS = random_matrix(50, 8, 4);
  const Mat X = spd_solve_multi(As, RHS);
  for (int j = 0; j < RHS.cols(); ++j) {
    const double res = (A * X.col(j) - RHS.col(j)).norm();
    EXPECT_LE(res, 1e-10 * RHS.col(j).norm()) << "column " << j;
  }
}

TEST(SpdSolve, NamesPivotOnIndefiniteInput) {
  SpMat A(2, 2);
  A.insert(0, 0) = 1.0;
  A.insert(1, 1) = -1.0;
  A.makeCompressed();
  try {
    SpdSolver solver(A);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("pivot"), std::string::npos);
  }
}

TEST(GeneralizedEig, EqualMatricesGiveUnitSpectrum) {
  const Mat B = random_spd(15, 21);
  const GeneralizedEigenResult r = sym_generalized_eig(B, B);
  const Mat BtB = r.eigenvectors.transpose() * B * r.eigenvectors;
  EXPECT_LE((BtB - Mat::Identity(15, 15)).norm(), 1e-10);
  for (int i = 0; i < 15; ++i) EXPECT_NEAR(r.eigenvalues[i], 1.0, 1e-10);
}

TEST(GeneralizedEig, DiagonalCase) {
  Mat C = Mat::Zero(2, 2);
  C(0, 0) = 4.0;
  C(1, 1) = 1.0;
  const GeneralizedEigenResult r = sym_generalized_eig(C, Mat::Identity(2, 2));
  EXPECT_NEAR(r.eigenvalues[0], 4.0, 1e-14);
  EXPECT_NEAR(r.eigenvalues[1], 1.0, 1e-14);
  EXPECT_LE((r.eigenvectors - Mat::Identity(2, 2)).norm(), 1e-13);
}

TEST(GeneralizedEig, SquaredSingularValuesOracle) {
  const Mat M = random_matrix(5, 3, 33);
  const Mat C = M.transpose() * M;
  const GeneralizedEigenResult r = sym_generalized_eig(C, Mat::Identity(3, 3));
  const Eigen::JacobiSVD<Mat> svd(M);
  for (int i = 0; i < 3; ++i) {
    const double want = svd.singularValues()[i] * svd.singularValues()[i];
    EXPECT_NEAR(r.eigenvalues[i], want, 1e-12 * C.norm());
  }
}

TEST(GeneralizedEig, InvariantsOnRandomPencil) {
  const int n = 30;
  const Mat M = random_matrix(n, n, 44);
  const Mat C = M * M.transpose();
  const Mat B = random_spd(n, 45);
  const GeneralizedEigenResult r = sym_generalized_eig(C, B);
  for (int i = 0; i + 1 < n; ++i) EXPECT_GE(r.eigenvalues[i], r.eigenvalues[i + 1]);
  EXPECT_GE(r.eigenvalues[n - 1], 0.0);
  const Mat& A = r.eigenvectors;
  EXPECT_LE((A.transpose() * B * A - Mat::Identity(n, n)).norm(), 1e-10);
  const Mat resid = C * A - B * A * r.eigenvalues.asDiagonal();
  for (int j = 0; j < n; ++j) EXPECT_LE(resid.col(j).norm(), 1e-8 * C.norm());
  EXPECT_LE((B * A * r.eigenvalues.asDiagonal() * A.transpose() * B - C).norm(), 1e-8 * C.norm());
}

TEST(GeneralizedEig, SparseBOverloadAgrees) {
  const int n = 18;
  const Mat M = random_matrix(n, n, 50);
  const Mat C = M * M.transpose();
  const Mat B = random_spd(n, 51);
  const SpMat Bs = B.sparseView();
  const GeneralizedEigenResult dense = sym_generalized_eig(C, B);
  const GeneralizedEigenResult sparse = sym_generalized_eig(C, Bs);
  EXPECT_LE((dense.eigenvalues - sparse.eigenvalues).cwiseAbs().maxCoeff(),
            1e-10 * dense.eigenvalues[0]);
}

TEST(GeneralizedEig, RejectsIndefiniteC) {
  Mat C = Mat::Zero(2, 2);
  C(0, 0) = 1.0;
  C(1, 1) = -1.0;
  EXPECT_THROW(sym_generalized_eig(C, Mat::Identity(2, 2)), NumericalError);
}

TEST(GeneralizedEig, RejectsNonSpdB) {
  const Mat C = Mat::Identity(2, 2);
  Mat B = Mat::Zero(2, 2);
  B(0, 0) = 1.0;
  B(1, 1) = -2.0;
  EXPECT_THROW(sym_generalized_eig(C, B), NumericalError);
}

namespace {

struct DenseOp {
  Mat Tmat;  // k*k x m
  Vec DD;
  int k;

  Mat apply(const Vec& c) const {
    const Vec v = Tmat * c;
    return Eigen::Map<const Mat>(v.data(), k, k);
  }
  Vec applyAdjoint(const Mat& M) const {
    const Eigen::Map<const Vec> v(M.data(), M.size());
    return (Tmat.transpose() * v).cwiseQuotient(DD);
  }
};

}  // namespace

TEST(Cg, IdentityOperatorExample) {
  const int n = 3;
  auto applyT = [](const Vec& c) { return Mat(c); };
  auto applyTt = [](const Mat& M) { return Vec(M.col(0)); };
  const Mat Mdelta = Mat::Ones(3, 1);
  const CgResult r =
      cg_normal_equations(applyT, applyTt, Mdelta, 1.0, 1e-12, 100, Vec::Ones(n));
  EXPECT_TRUE(r.converged);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(r.c[i], 0.5, 1e-12);
}

TEST(Cg, ZeroDataZeroIterations) {
  auto applyT = [](const Vec& c) { return Mat(c); };
  auto applyTt = [](const Mat& M) { return Vec(M.col(0)); };
  const CgResult r =
      cg_normal_equations(applyT, applyTt, Mat::Zero(3, 1), 0.5, 1e-12, 100, Vec::Ones(3));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.c.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cg, RejectsNonAdjointPair) {
  DenseOp op;
  op.k = 4;
  op.Tmat = random_matrix(16, 20, 60);
  op.DD = Vec::Ones(20) + 0.5 * Vec::Random(20).cwiseAbs();
  auto applyT = [&](const Vec& c) { return op.apply(c); };
  auto wrongTt = [&](const Mat& M) {
    const Eigen::Map<const Vec> v(M.data(), M.size());
    return Vec(op.Tmat.transpose() * v);  // missing the DD weight
  };
  const Mat Mdelta = Mat::Ones(4, 4);
  EXPECT_THROW(cg_normal_equations(applyT, wrongTt, Mdelta, 1e-3, 1e-10, 50, op.DD),
               NumericalError);
}

TEST(Cg, MatchesDirectSolveAndIsMonotone) {
  DenseOp op;
  op.k = 5;
  const int m = 40;
  op.Tmat = random_matrix(25, m, 61);
  GaussianSampler g(62);
  op.DD = Vec(m);
  for (int i = 0; i < m; ++i) op.DD[i] = 1.0 + 0.3 * std::abs(g.next());
  const double alpha = 1e-2;
  const Mat Mdelta = random_matrix(5, 5, 63);

  const Mat G = op.Tmat.transpose() * op.Tmat + alpha * Mat(op.DD.asDiagonal());
  const Eigen::Map<const Vec> mvec(Mdelta.data(), Mdelta.size());
  const Vec direct = G.ldlt().solve(op.Tmat.transpose() * mvec);

  std::vector<double> energy;
  auto applyT = [&](const Vec& c) { return op.apply(c); };
  auto applyTt = [&](const Mat& M) { return op.applyAdjoint(M); };
  auto track = [&](int, const Vec& c) {
    const Vec e = c - direct;
    energy.push_back(e.dot(G * e));
  };
  const CgResult r =
      cg_normal_equations(applyT, applyTt, Mdelta, alpha, 1e-13, 2000, op.DD, track);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.c - direct).norm(), 1e-8 * direct.norm());
  for (size_t i = 1; i < energy.size(); ++i) EXPECT_LE(energy[i], energy[i - 1] * (1 + 1e-10));
}

TEST(Cg, UnconvergedFlagAtMaxit) {
  DenseOp op;
  op.k = 6;
  op.Tmat = random_matrix(36, 80, 64);
  op.DD = Vec::Ones(80);
  auto applyT = [&](const Vec& c) { return op.apply(c); };
  auto applyTt = [&](const Mat& M) { return op.applyAdjoint(M); };
  const CgResult r =
      cg_normal_equations(applyT, applyTt, random_matrix(6, 6, 65), 1e-8, 1e-16, 3, op.DD);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
}
