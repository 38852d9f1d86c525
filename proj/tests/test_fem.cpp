#include <gtest/gtest.h>

#include <cmath>

#include "fdot/fem.hpp"
#include "fdot/linalg.hpp"
#include "fdot/mesh.hpp"

using namespace fdot;

namespace {

Mesh reference_triangle() {
  Mesh m;
  m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.triangles = {{0, 1, 2}};
  m.boundary_cycle = {0, 1, 2};
  return m;
}

double sym_gap(const SpMat& A) {
  const SpMat At = SpMat(A.transpose());
  return (A - At).norm();
}

}  // namespace

TEST(OpticalParams, Validation) {
  EXPECT_NO_THROW((OpticalParameters{1.0, 0.0, 1.0}).validate());
  EXPECT_THROW((OpticalParameters{0.0, 0.0, 1.0}).validate(), ValidationError);
  EXPECT_THROW((OpticalParameters{1.0, -0.1, 1.0}).validate(), ValidationError);
  EXPECT_THROW((OpticalParameters{1.0, 0.0, 0.0}).validate(), ValidationError);
}

TEST(Stiffness, ReferenceTriangleElementMatrix) {
  const Mat K = Mat(assemble_stiffness(reference_triangle(), 1.0));
  Mat want(3, 3);
  want << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  EXPECT_LE((K - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stiffness, ConstantsInKernel) {
  const Mesh m = refine(unit_disk_mesh(16));
  const SpMat K = assemble_stiffness(m, 1.0);
  const Vec r = K * Vec::Ones(m.n_vertices());
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stiffness, LinearInKappa) {
  const Mesh m = unit_disk_mesh(12);
  const SpMat K1 = assemble_stiffness(m, 1.0);
  const SpMat K2 = assemble_stiffness(m, 2.0);
  EXPECT_LE((K2 - SpMat(2.0 * K1)).norm(), 1e-14 * K1.norm());
}

TEST(Mass, ReferenceTriangleElementMatrix) {
  const Mat M = Mat(assemble_mass(reference_triangle(), 1.0));
  Mat want(3, 3);
  want << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  want /= 24.0;
  EXPECT_LE((M - want).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(Mass, PartitionOfUnity) {
  const Mesh m = refine(unit_disk_mesh(88));
  const double mu = 0.7;
  const SpMat M = assemble_mass(m, mu);
  double area = 0.0;
  for (int t = 0; t < m.n_triangles(); ++t) area += signed_area(m, t);
  const Vec ones = Vec::Ones(m.n_vertices());
  EXPECT_NEAR(ones.dot(M * ones), mu * area, 1e-12);
  EXPECT_NEAR(ones.dot(M * ones) / mu, M_PI, 5e-3);
}

TEST(Mass, ZeroCoefficient) {
  const SpMat M = assemble_mass(unit_disk_mesh(8), 0.0);
  EXPECT_EQ(M.nonZeros(), 0);
}

TEST(Robin, SegmentElementMatrix) {
  const SpMat R = assemble_robin(reference_triangle(), 1.0);
  const double s = std::sqrt(2.0);
  Mat want = Mat::Zero(3, 3);
  want(0, 0) = 1.0 / 3 + 1.0 / 3;
  want(1, 1) = 1.0 / 3 + s / 3;
  want(2, 2) = s / 3 + 1.0 / 3;
  want(0, 1) = want(1, 0) = 1.0 / 6;
  want(1, 2) = want(2, 1) = s / 6;
  want(0, 2) = want(2, 0) = 1.0 / 6;
  EXPECT_LE((Mat(R) - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Robin, PerimeterAndInteriorRows) {
  const Mesh m = unit_disk_mesh(32);
  const double rho = 10.0;
  const SpMat R = assemble_robin(m, rho);
  const double h = 2.0 * std::sin(M_PI / 32);
  const Vec ones = Vec::Ones(m.n_vertices());
  EXPECT_NEAR(ones.dot(R * ones), rho * 32 * h, 1e-12);
  const Vec rowsums = R * ones;
  for (int p = 0; p < m.n_vertices(); ++p) {
    const double r = std::hypot(m.vertices[p][0], m.vertices[p][1]);
    if (r < 1.0 - 1e-9) EXPECT_EQ(rowsums[p], 0.0);
  }
}

TEST(SourceCoupling, MatchesRobinRestriction) {
  const Mesh m = refine(unit_disk_mesh(16));
  const SpMat E = assemble_source_coupling(m);
  const Mat R1 = Mat(assemble_robin(m, 1.0));
  ASSERT_EQ(E.cols(), m.n_boundary());
  for (int j = 0; j < m.n_boundary(); ++j) {
    const Vec col = Mat(E).col(j);
    EXPECT_LE((col - R1.col(m.boundary_cycle[j])).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(SourceCoupling, ColumnSumsAreSegmentAverages) {
  const int k = 24;
  const Mesh m = unit_disk_mesh(k);
  const SpMat E = assemble_source_coupling(m);
  const double h = 2.0 * std::sin(M_PI / k);
  const Vec sums = (Vec::Ones(m.n_vertices()).transpose() * E).transpose();
  for (int j = 0; j < k; ++j) EXPECT_NEAR(sums[j], h, 1e-13);
}

TEST(BoundaryGram, ConstantsSeeOnlyMass) {
  const int k = 40;
  const Mesh m = unit_disk_mesh(k);
  const SpMat SY = assemble_boundary_gram(m);
  const double h = 2.0 * std::sin(M_PI / k);
  const Vec ones = Vec::Ones(k);
  EXPECT_NEAR(ones.dot(SY * ones), k * h, 1e-11);
}

TEST(BoundaryGram, CirculantEigenvalues) {
  for (int k : {16, 88}) {
    const Mesh m = unit_disk_mesh(k);
    const Mat SY = Mat(assemble_boundary_gram(m));
    Vec got = sym_eigvals_descending(SY);
    const double h = 2.0 * std::sin(M_PI / k);
    Vec want(k);
    for (int j = 0; j < k; ++j) want[j] = h + (2.0 / h) * (1.0 - std::cos(2.0 * M_PI * j / k));
    std::sort(want.data(), want.data() + k, std::greater<double>());
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-10 * want[0]) << "k=" << k;
  }
}

TEST(BoundaryGram, SymmetricPositiveDefinite) {
  const SpMat SY = assemble_boundary_gram(refine(unit_disk_mesh(16)));
  EXPECT_LE(sym_gap(SY), 1e-12 * SY.norm());
  EXPECT_NO_THROW(SpdSolver{SY});
}

TEST(LumpedQuadrature, ReferenceTriangle) {
  const Vec DD = lumped_quadrature(reference_triangle());
  ASSERT_EQ(DD.size(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(DD[i], 1.0 / 6, 1e-16);
}

TEST(LumpedQuadrature, MatchesMassRowSums) {
  const Mesh m = refine(unit_disk_mesh(20));
  const Vec DD = lumped_quadrature(m);
  const Vec rowsums = assemble_mass(m, 1.0) * Vec::Ones(m.n_vertices());
  EXPECT_LE((DD - rowsums).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_GT(DD.minCoeff(), 0.0);
  const int k = m.n_boundary();
  const double polygon_area = 0.5 * k * std::sin(2.0 * M_PI / k);
  EXPECT_NEAR(DD.sum(), polygon_area, 1e-12);
  EXPECT_NEAR(DD.sum(), M_PI, M_PI - polygon_area + 1e-12);
}

TEST(System, PatchTest) {
  const Mesh m = unit_disk_mesh(88);
  const OpticalParameters p{1.0, 0.2, 10.0};
  const FemSystem sys = assemble_system(m, p);
  const Vec ones = Vec::Ones(m.n_vertices());
  const Vec lhs = sys.A_sys * ones;
  const Vec rhs = assemble_mass(m, p.mu) * ones + assemble_robin(m, p.rho) * ones;
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(System, SymmetricAndSpd) {
  const Mesh m = unit_disk_mesh(88);
  for (auto p : {OpticalParameters{1.0, 0.2, 10.0}, OpticalParameters{2.0, 0.1, 10.0}}) {
    const FemSystem sys = assemble_system(m, p);
    EXPECT_LE(sym_gap(sys.A_sys), 1e-12 * sys.A_sys.norm());
    EXPECT_NO_THROW(SpdSolver{sys.A_sys});
    EXPECT_GT(sys.DD.minCoeff(), 0.0);
    EXPECT_EQ(sys.E.rows(), m.n_vertices());
    EXPECT_EQ(sys.E.cols(), m.n_boundary());
  }
}

TEST(System, GramVariants) {
  const Mesh m = unit_disk_mesh(16);
  const OpticalParameters p{1.0, 0.2, 10.0};
  const FemSystem l2 = assemble_system(m, p, GramVariant::L2);
  const FemSystem h1 = assemble_system(m, p, GramVariant::H1);
  EXPECT_LE((l2.GU - l2.SX).norm(), 0.0);
  const SpMat want = SpMat(assemble_stiffness(m, 1.0) + assemble_mass(m, 1.0));
  EXPECT_LE((h1.GU - want).norm(), 1e-14 * want.norm());
}

TEST(System, MuZeroKeepsSpd) {
  const Mesh m = unit_disk_mesh(12);
  const FemSystem sys = assemble_system(m, OpticalParameters{1.0, 0.0, 5.0});
  EXPECT_NO_THROW(SpdSolver{sys.A_sys});
}
