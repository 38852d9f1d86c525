#pragma once

// P1 finite element assembly on disk meshes: interior stiffness/mass, Robin
// boundary mass, boundary source coupling, Gram matrices, and the lumped
// quadrature weights. All element integrals are closed-form, exact for
// P1 x P1 products.

#include <cmath>
#include <string>
#include <vector>

#include "fdot/mesh.hpp"
#include "fdot/types.hpp"

namespace fdot {

struct OpticalParameters {
  double kappa = 1.0;  // diffusion
  double mu = 0.0;     // absorption
  double rho = 1.0;    // Robin coefficient

  void validate() const {
    if (!(kappa > 0)) throw ValidationError("OpticalParameters: kappa must be > 0");
    if (!(mu >= 0)) throw ValidationError("OpticalParameters: mu must be >= 0");
    if (!(rho > 0)) throw ValidationError("OpticalParameters: rho must be > 0");
  }
};

enum class GramVariant { L2, H1 };

inline const char* gram_name(GramVariant g) { return g == GramVariant::H1 ? "H1" : "L2"; }

inline GramVariant parse_gram(const std::string& s) {
  if (s == "L2") return GramVariant::L2;
  if (s == "H1") return GramVariant::H1;
  throw ValidationError("gram variant must be L2 or H1 (got '" + s + "')");
}

namespace detail {

inline void drop_zeros(SpMat& m) {
  m.prune([](int, int, double v) { return v != 0.0; });
  m.makeCompressed();
}

// b_i = y_j - y_k, c_i = x_k - x_j for CCW triangle (i,j,k)
inline void triangle_geometry(const Mesh& mesh, const std::array<int, 3>& t, double b[3],
                              double c[3], double& area) {
  const auto& p0 = mesh.vertices[t[0]];
  const auto& p1 = mesh.vertices[t[1]];
  const auto& p2 = mesh.vertices[t[2]];
  b[0] = p1[1] - p2[1];
  b[1] = p2[1] - p0[1];
  b[2] = p0[1] - p1[1];
  c[0] = p2[0] - p1[0];
  c[1] = p0[0] - p2[0];
  c[2] = p1[0] - p0[0];
  area = 0.5 * (p0[0] * b[0] + p1[0] * b[1] + p2[0] * b[2]);
  if (!(area > 0)) throw ValidationError("assembly: nonpositive triangle area");
}

inline double segment_length(const Mesh& mesh, int u, int v) {
  const double dx = mesh.vertices[u][0] - mesh.vertices[v][0];
  const double dy = mesh.vertices[u][1] - mesh.vertices[v][1];
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// (K)_{pq} = kappa * integral of grad(phi_p) . grad(phi_q)
inline SpMat assemble_stiffness(const Mesh& mesh, double kappa) {
  if (!(kappa > 0)) throw ValidationError("assemble_stiffness: kappa must be > 0");
  const int m = mesh.n_vertices();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  for (const auto& t : mesh.triangles) {
    double b[3], c[3], area;
    detail::triangle_geometry(mesh, t, b, c, area);
    const double s = kappa / (4.0 * area);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(t[i], t[j], s * (b[i] * b[j] + c[i] * c[j]));
  }
  SpMat K(m, m);
  K.setFromTriplets(trips.begin(), trips.end());
  detail::drop_zeros(K);
  return K;
}

/// (M)_{pq} = mu * integral of phi_p phi_q (consistent P1 mass)
inline SpMat assemble_mass(const Mesh& mesh, double mu) {
  if (!(mu >= 0)) throw ValidationError("assemble_mass: mu must be >= 0");
  const int m = mesh.n_vertices();
  SpMat M(m, m);
  if (mu == 0.0) {
    M.makeCompressed();
    return M;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  for (const auto& t : mesh.triangles) {
    double b[3], c[3], area;
    detail::triangle_geometry(mesh, t, b, c, area);
    const double off = mu * area / 12.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trips.emplace_back(t[i], t[j], (i == j ? 2.0 : 1.0) * off);
  }
  M.setFromTriplets(trips.begin(), trips.end());
  M.makeCompressed();
  return M;
}

/// (R)_{pq} = rho * boundary integral of phi_p phi_q over the polygonal boundary
inline SpMat assemble_robin(const Mesh& mesh, double rho) {
  if (!(rho > 0)) throw ValidationError("assemble_robin: rho must be > 0");
  const int m = mesh.n_vertices();
  const int k = mesh.n_boundary();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * k);
  for (int j = 0; j < k; ++j) {
    const int u = mesh.boundary_cycle[j], v = mesh.boundary_cycle[(j + 1) % k];
    const double h = detail::segment_length(mesh, u, v);
    trips.emplace_back(u, u, rho * h / 3.0);
    trips.emplace_back(v, v, rho * h / 3.0);
    trips.emplace_back(u, v, rho * h / 6.0);
    trips.emplace_back(v, u, rho * h / 6.0);
  }
  SpMat R(m, m);
  R.setFromTriplets(trips.begin(), trips.end());
  R.makeCompressed();
  return R;
}

/// (E)_{p,j} = boundary integral of phi_p psi_j, psi_j the j-th boundary hat
/// function in boundary_cycle order. Equals assemble_robin(mesh, 1) with
/// columns renumbered to the boundary indexing.
inline SpMat assemble_source_coupling(const Mesh& mesh) {
  const int m = mesh.n_vertices();
  const int k = mesh.n_boundary();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * k);
  for (int j = 0; j < k; ++j) {
    const int jn = (j + 1) % k;
    const int u = mesh.boundary_cycle[j], v = mesh.boundary_cycle[jn];
    const double h = detail::segment_length(mesh, u, v);
    trips.emplace_back(u, j, h / 3.0);
    trips.emplace_back(v, jn, h / 3.0);
    trips.emplace_back(u, jn, h / 6.0);
    trips.emplace_back(v, j, h / 6.0);
  }
  SpMat E(m, k);
  E.setFromTriplets(trips.begin(), trips.end());
  E.makeCompressed();
  return E;
}

/// H1 inner product on the boundary curve: lumped 1-D mass plus tangential
/// stiffness of the periodic P1 problem over boundary_cycle. With uniform
/// spacing h the eigenvalues are h + (2/h)(1 - cos(2 pi j / k)).
inline SpMat assemble_boundary_gram(const Mesh& mesh) {
  const int k = mesh.n_boundary();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * k);
  for (int j = 0; j < k; ++j) {
    const int jn = (j + 1) % k;
    const double h =
        detail::segment_length(mesh, mesh.boundary_cycle[j], mesh.boundary_cycle[jn]);
    trips.emplace_back(j, j, 0.5 * h + 1.0 / h);
    trips.emplace_back(jn, jn, 0.5 * h + 1.0 / h);
    trips.emplace_back(j, jn, -1.0 / h);
    trips.emplace_back(jn, j, -1.0 / h);
  }
  SpMat SY(k, k);
  SY.setFromTriplets(trips.begin(), trips.end());
  SY.makeCompressed();
  return SY;
}

/// Lumped L2 quadrature weights: DD_p = row sum of the unit mass matrix.
inline Vec lumped_quadrature(const Mesh& mesh) {
  Vec DD = Vec::Zero(mesh.n_vertices());
  for (const auto& t : mesh.triangles) {
    double b[3], c[3], area;
    detail::triangle_geometry(mesh, t, b, c, area);
    for (int i = 0; i < 3; ++i) DD[t[i]] += area / 3.0;
  }
  return DD;
}

struct FemSystem {
  SpMat A_sys;  // K + M + R, SPD
  SpMat E;      // m x k source coupling
  SpMat SX;     // L2(Omega) Gram (unit mass matrix)
  SpMat GU;     // range-space Gram, per GramVariant
  SpMat SY;     // H1(boundary) Gram, k x k
  Vec DD;       // lumped L2 weights
};

inline FemSystem assemble_system(const Mesh& mesh, const OpticalParameters& p,
                                 GramVariant gram = GramVariant::L2) {
  p.validate();
  FemSystem sys;
  sys.A_sys = assemble_stiffness(mesh, p.kappa);
  if (p.mu > 0) sys.A_sys += assemble_mass(mesh, p.mu);
  sys.A_sys += assemble_robin(mesh, p.rho);
  detail::drop_zeros(sys.A_sys);
  sys.E = assemble_source_coupling(mesh);
  sys.SX = assemble_mass(mesh, 1.0);
  if (gram == GramVariant::L2) {
    sys.GU = sys.SX;
  } else {
    sys.GU = assemble_stiffness(mesh, 1.0) + sys.SX;
    detail::drop_zeros(sys.GU);
  }
  sys.SY = assemble_boundary_gram(mesh);
  sys.DD = lumped_quadrature(mesh);
  return sys;
}

}  // namespace fdot
