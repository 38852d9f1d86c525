#pragma once

// Conforming P1 triangulations of the unit disk.
//
// The generator builds concentric rings of vertices (ring i carries 4*i
// points, so a boundary with n vertices uses n/4 rings) and triangulates
// each annulus by an angular sweep. Uniform red refinement splits every
// triangle into four; new boundary vertices are projected radially back
// onto the unit circle. Parent vertices keep their indices, so coarse
// coefficient vectors are index-prefixes of refined ones.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdot/types.hpp"

namespace fdot {

struct Mesh {
  std::vector<std::array<double, 2>> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex triples
  std::vector<int> boundary_cycle;            // CCW trace of the boundary
  int level = 0;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int n_boundary() const { return static_cast<int>(boundary_cycle.size()); }
};

inline double signed_area(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  const auto& a = m.vertices[tri[0]];
  const auto& b = m.vertices[tri[1]];
  const auto& c = m.vertices[tri[2]];
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

inline Mesh unit_disk_mesh(int n_boundary) {
  if (n_boundary < 8 || n_boundary % 4 != 0)
    throw ValidationError("unit_disk_mesh: n_boundary must be >= 8 and a multiple of 4, got " +
                          std::to_string(n_boundary));
  const int R = n_boundary / 4;  // rings; ring i has 4*i vertices
  Mesh m;
  m.level = 0;
  m.vertices.push_back({0.0, 0.0});
  std::vector<int> ring_start(R + 1, 0);
  for (int i = 1; i <= R; ++i) {
    ring_start[i] = m.n_vertices();
    const int ni = 4 * i;
    const double r = double(i) / double(R);
    for (int j = 0; j < ni; ++j) {
      const double th = 2.0 * M_PI * double(j) / double(ni);
      m.vertices.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }

  // innermost fan around the center
  for (int j = 0; j < 4; ++j)
    m.triangles.push_back({0, ring_start[1] + j, ring_start[1] + (j + 1) % 4});

  // annuli: angular sweep between ring i (inner) and ring i+1 (outer)
  for (int i = 1; i < R; ++i) {
    const int ni = 4 * i, no = 4 * (i + 1);
    const int si = ring_start[i], so = ring_start[i + 1];
    int a = 0, b = 0;
    while (a < ni || b < no) {
      const double next_a = a < ni ? double(a + 1) / ni : 2.0;
      const double next_b = b < no ? double(b + 1) / no : 2.0;
      if (next_b <= next_a) {
        m.triangles.push_back({si + a % ni, so + b % no, so + (b + 1) % no});
        ++b;
      } else {
        m.triangles.push_back({si + a % ni, so + b % no, si + (a + 1) % ni});
        ++a;
      }
    }
  }

  for (int j = 0; j < n_boundary; ++j) m.boundary_cycle.push_back(ring_start[R] + j);
  return m;
}

inline Mesh refine(const Mesh& mesh) {
  Mesh out;
  out.level = mesh.level + 1;
  out.vertices = mesh.vertices;

  // boundary edges, keyed by sorted endpoints
  std::map<std::pair<int, int>, bool> on_boundary;
  const int nb = mesh.n_boundary();
  for (int j = 0; j < nb; ++j) {
    int u = mesh.boundary_cycle[j], v = mesh.boundary_cycle[(j + 1) % nb];
    on_boundary[{std::min(u, v), std::max(u, v)}] = true;
  }

  // midpoints allocated in first-encounter order over triangles
  std::map<std::pair<int, int>, int> midpoint;
  auto mid_of = [&](int u, int v) {
    auto key = std::make_pair(std::min(u, v), std::max(u, v));
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    double x = 0.5 * (mesh.vertices[u][0] + mesh.vertices[v][0]);
    double y = 0.5 * (mesh.vertices[u][1] + mesh.vertices[v][1]);
    if (on_boundary.count(key)) {
      const double r = std::sqrt(x * x + y * y);
      x /= r;
      y /= r;
    }
    const int idx = out.n_vertices();
    out.vertices.push_back({x, y});
    midpoint.emplace(key, idx);
    return idx;
  };

  out.triangles.reserve(4 * mesh.n_triangles());
  for (const auto& t : mesh.triangles) {
    const int m01 = mid_of(t[0], t[1]);
    const int m12 = mid_of(t[1], t[2]);
    const int m20 = mid_of(t[2], t[0]);
    out.triangles.push_back({t[0], m01, m20});
    out.triangles.push_back({t[1], m12, m01});
    out.triangles.push_back({t[2], m20, m12});
    out.triangles.push_back({m01, m12, m20});
  }

  out.boundary_cycle.reserve(2 * nb);
  for (int j = 0; j < nb; ++j) {
    int u = mesh.boundary_cycle[j], v = mesh.boundary_cycle[(j + 1) % nb];
    out.boundary_cycle.push_back(u);
    out.boundary_cycle.push_back(midpoint.at({std::min(u, v), std::max(u, v)}));
  }
  return out;
}

/// Validity scan: edge incidence, Euler characteristic, orientation,
/// boundary geometry, and edge-length spread.
struct MeshScan {
  int V = 0, E = 0, F = 0;
  int euler = 0;
  int boundary_edges = 0;
  int bad_incidence = 0;       // edges owned by more than 2 or 0 triangles
  int nonpositive_areas = 0;
  double min_area = 0.0;
  double min_edge = 0.0, max_edge = 0.0;
  double max_boundary_radius_err = 0.0;
  bool cycle_edges_ok = true;  // consecutive cycle entries share a mesh edge
  bool cycle_complete = true;  // cycle covers exactly the boundary vertices

  double edge_ratio() const { return min_edge > 0 ? max_edge / min_edge : 0.0; }
  bool conforming() const {
    return bad_incidence == 0 && nonpositive_areas == 0 && euler == 1 &&
           cycle_edges_ok && cycle_complete;
  }
};

inline MeshScan scan_mesh(const Mesh& m) {
  MeshScan s;
  s.V = m.n_vertices();
  s.F = m.n_triangles();
  std::map<std::pair<int, int>, int> edge_count;
  s.min_edge = 1e300;
  s.max_edge = 0.0;
  s.min_area = 1e300;
  for (int t = 0; t < m.n_triangles(); ++t) {
    const double a = signed_area(m, t);
    s.min_area = std::min(s.min_area, a);
    if (a <= 0) ++s.nonpositive_areas;
    const auto& tri = m.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int u = tri[e], v = tri[(e + 1) % 3];
      ++edge_count[{std::min(u, v), std::max(u, v)}];
      const double dx = m.vertices[u][0] - m.vertices[v][0];
      const double dy = m.vertices[u][1] - m.vertices[v][1];
      const double len = std::sqrt(dx * dx + dy * dy);
      s.min_edge = std::min(s.min_edge, len);
      s.max_edge = std::max(s.max_edge, len);
    }
  }
  s.E = static_cast<int>(edge_count.size());
  s.euler = s.V - s.E + s.F;
  std::vector<char> is_boundary_vertex(m.n_vertices(), 0);
  for (const auto& [e, c] : edge_count) {
    if (c == 1) {
      ++s.boundary_edges;
      is_boundary_vertex[e.first] = 1;
      is_boundary_vertex[e.second] = 1;
    } else if (c != 2) {
      ++s.bad_incidence;
    }
  }
  const int nb = m.n_boundary();
  std::vector<char> in_cycle(m.n_vertices(), 0);
  for (int j = 0; j < nb; ++j) {
    const int u = m.boundary_cycle[j], v = m.boundary_cycle[(j + 1) % nb];
    in_cycle[u] = 1;
    auto it = edge_count.find({std::min(u, v), std::max(u, v)});
    if (it == edge_count.end() || it->second != 1) s.cycle_edges_ok = false;
    const double r = std::hypot(m.vertices[u][0], m.vertices[u][1]);
    s.max_boundary_radius_err = std::max(s.max_boundary_radius_err, std::abs(r - 1.0));
  }
  for (int p = 0; p < m.n_vertices(); ++p)
    if (in_cycle[p] != is_boundary_vertex[p]) s.cycle_complete = false;
  return s;
}

// ---- plain text serialization -------------------------------------------
// line 1: "V T B"; V lines "x y"; T lines "i j k" (0-based); B lines with one
// boundary_cycle index each. Floats carry 17 significant digits.

inline std::string mesh_to_text(const Mesh& m) {
  std::string out;
  out.reserve(64 * m.vertices.size());
  char line[128];
  std::snprintf(line, sizeof line, "%d %d %d\n", m.n_vertices(), m.n_triangles(),
                m.n_boundary());
  out += line;
  for (const auto& v : m.vertices) {
    std::snprintf(line, sizeof line, "%.17g %.17g\n", v[0], v[1]);
    out += line;
  }
  for (const auto& t : m.triangles) {
    std::snprintf(line, sizeof line, "%d %d %d\n", t[0], t[1], t[2]);
    out += line;
  }
  for (int b : m.boundary_cycle) {
    std::snprintf(line, sizeof line, "%d\n", b);
    out += line;
  }
  return out;
}

inline void save_mesh(const Mesh& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("save_mesh: cannot open " + path);
  const std::string text = mesh_to_text(m);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw ValidationError("save_mesh: write failed for " + path);
}

inline Mesh mesh_from_text(const std::string& text, int level = 0) {
  std::istringstream in(text);
  int V = 0, T = 0, B = 0;
  if (!(in >> V >> T >> B) || V <= 0 || T <= 0 || B < 0)
    throw ValidationError("mesh parse: bad header");
  Mesh m;
  m.level = level;
  m.vertices.resize(V);
  for (auto& v : m.vertices)
    if (!(in >> v[0] >> v[1])) throw ValidationError("mesh parse: truncated vertex list");
  m.triangles.resize(T);
  for (auto& t : m.triangles) {
    if (!(in >> t[0] >> t[1] >> t[2])) throw ValidationError("mesh parse: truncated triangle list");
    for (int i : t)
      if (i < 0 || i >= V) throw ValidationError("mesh parse: vertex index out of range");
  }
  m.boundary_cycle.resize(B);
  for (auto& b : m.boundary_cycle) {
    if (!(in >> b)) throw ValidationError("mesh parse: truncated boundary cycle");
    if (b < 0 || b >= V) throw ValidationError("mesh parse: boundary index out of range");
  }
  return m;
}

inline Mesh load_mesh(const std::string& path, int level = 0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("load_mesh: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return mesh_from_text(ss.str(), level);
}

}  // namespace fdot
