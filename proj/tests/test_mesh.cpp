#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fdot/mesh.hpp"

using namespace fdot;

TEST(UnitDisk, RejectsBadBoundaryCounts) {
  EXPECT_THROW(unit_disk_mesh(7), ValidationError);
  EXPECT_THROW(unit_disk_mesh(4), ValidationError);
  EXPECT_THROW(unit_disk_mesh(10), ValidationError);
  EXPECT_THROW(unit_disk_mesh(0), ValidationError);
  EXPECT_THROW(unit_disk_mesh(-8), ValidationError);
}

TEST(UnitDisk, SmallestMesh) {
  const Mesh m = unit_disk_mesh(8);
  EXPECT_EQ(m.n_boundary(), 8);
  const MeshScan s = scan_mesh(m);
  EXPECT_EQ(s.euler, 1);
  EXPECT_TRUE(s.conforming());
}

TEST(UnitDisk, ReferenceBoundaryCount) {
  const Mesh m = unit_disk_mesh(88);
  EXPECT_EQ(m.n_boundary(), 88);
  EXPECT_GE(m.n_vertices(), 900);
  EXPECT_LE(m.n_vertices(), 1100);
  EXPECT_EQ(m.level, 0);
}

TEST(UnitDisk, ConformityScan) {
  for (int nb : {8, 16, 44, 88}) {
    const MeshScan s = scan_mesh(unit_disk_mesh(nb));
    EXPECT_TRUE(s.conforming()) << "n_boundary=" << nb;
    EXPECT_EQ(s.boundary_edges, nb);
    EXPECT_EQ(s.bad_incidence, 0);
    EXPECT_EQ(s.nonpositive_areas, 0);
    EXPECT_GT(s.min_area, 0.0);
    EXPECT_LE(s.max_boundary_radius_err, 1e-12);
  }
}

TEST(UnitDisk, QuasiUniform) {
  EXPECT_LE(scan_mesh(unit_disk_mesh(16)).edge_ratio(), 3.0);
  EXPECT_LE(scan_mesh(unit_disk_mesh(88)).edge_ratio(), 3.0);
}

TEST(UnitDisk, PositiveOrientation) {
  const Mesh m = unit_disk_mesh(16);
  for (int t = 0; t < m.n_triangles(); ++t) EXPECT_GT(signed_area(m, t), 0.0);
}

TEST(Refine, BoundaryDoublesTrianglesQuadruple) {
  Mesh m = unit_disk_mesh(88);
  const int t0 = m.n_triangles();
  m = refine(m);
  EXPECT_EQ(m.n_boundary(), 176);
  EXPECT_EQ(m.n_triangles(), 4 * t0);
  EXPECT_EQ(m.level, 1);
  m = refine(m);
  EXPECT_EQ(m.n_boundary(), 352);
  EXPECT_EQ(m.n_triangles(), 16 * t0);
  EXPECT_EQ(m.level, 2);
}

TEST(Refine, ConformingAfterTwoLevels) {
  Mesh m = unit_disk_mesh(88);
  m = refine(refine(m));
  const MeshScan s = scan_mesh(m);
  EXPECT_TRUE(s.conforming());
  EXPECT_EQ(s.euler, 1);
  EXPECT_LE(s.edge_ratio(), 6.0);
  EXPECT_LE(s.max_boundary_radius_err, 1e-12);
}

TEST(Refine, ParentVerticesKeepIndices) {
  const Mesh coarse = unit_disk_mesh(24);
  const Mesh fine = refine(coarse);
  ASSERT_GE(fine.n_vertices(), coarse.n_vertices());
  for (int p = 0; p < coarse.n_vertices(); ++p) {
    EXPECT_EQ(fine.vertices[p][0], coarse.vertices[p][0]);
    EXPECT_EQ(fine.vertices[p][1], coarse.vertices[p][1]);
  }
}

TEST(Refine, BoundaryMidpointsProjected) {
  const Mesh fine = refine(unit_disk_mesh(16));
  for (int idx : fine.boundary_cycle) {
    const double r = std::hypot(fine.vertices[idx][0], fine.vertices[idx][1]);
    EXPECT_NEAR(r, 1.0, 1e-12);
  }
}

TEST(Refine, AreaApproachesDiskArea) {
  Mesh m = unit_disk_mesh(16);
  double prev_gap = -1.0;
  for (int level = 0; level < 3; ++level) {
    double area = 0.0;
    for (int t = 0; t < m.n_triangles(); ++t) area += signed_area(m, t);
    const double gap = M_PI - area;
    EXPECT_GT(gap, 0.0);
    if (prev_gap > 0) EXPECT_GE(prev_gap / gap, 3.5);
    prev_gap = gap;
    m = refine(m);
  }
}

TEST(MeshText, RoundTripIsExact) {
  const Mesh m = refine(unit_disk_mesh(12));
  const std::string text = mesh_to_text(m);
  const Mesh back = mesh_from_text(text, m.level);
  EXPECT_EQ(mesh_to_text(back), text);
  EXPECT_EQ(back.n_vertices(), m.n_vertices());
  EXPECT_EQ(back.boundary_cycle, m.boundary_cycle);
  EXPECT_EQ(back.triangles, m.triangles);
}

TEST(MeshText, FileRoundTrip) {
  const Mesh m = unit_disk_mesh(20);
  const std::string path = std::filesystem::temp_directory_path() / "fdot_mesh_rt.txt";
  save_mesh(m, path);
  const Mesh back = load_mesh(path, 0);
  EXPECT_EQ(mesh_to_text(back), mesh_to_text(m));
  std::filesystem::remove(path);
}

TEST(MeshText, RejectsMalformedInput) {
  EXPECT_THROW(mesh_from_text(""), ValidationError);
  EXPECT_THROW(mesh_from_text("3 1 3\n0 0\n1 0\n"), ValidationError);   // truncated
  EXPECT_THROW(mesh_from_text("bogus header\n"), ValidationError);
  const Mesh m = unit_disk_mesh(8);
  std::string text = mesh_to_text(m);
  text.resize(text.size() / 2);
  EXPECT_THROW(mesh_from_text(text), ValidationError);
}
