#pragma once

// Experiment orchestration: phantom generation, offline/online/oracle runs
// per refinement level, lean structural runs for large meshes (rank counts
// without materializing the cross matrix), and emission of CSV tables and
// PGM images.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fdot/fem.hpp"
#include "fdot/forward.hpp"
#include "fdot/inverse.hpp"
#include "fdot/mesh.hpp"
#include "fdot/model_io.hpp"
#include "fdot/reduce.hpp"
#include "fdot/types.hpp"

namespace fdot {

// ---- problem instance -----------------------------------------------------

struct ProblemParams {
  OpticalParameters excitation{1.0, 0.2, 10.0};
  OpticalParameters emission{2.0, 0.1, 10.0};
  GramVariant gram = GramVariant::L2;
  int base_boundary = 88;  // boundary vertices of the coarsest mesh
};

inline Mesh mesh_at_level(int level, int base_boundary = 88) {
  if (level < 0) throw ValidationError("mesh_at_level: level must be >= 0");
  Mesh mesh = unit_disk_mesh(base_boundary);
  for (int l = 0; l < level; ++l) mesh = refine(mesh);
  return mesh;
}

// ---- phantom ----------------------------------------------------------------

struct PhantomBlob {
  double amplitude;
  double cx, cy;
  double radius;
};

struct PhantomSpec {
  std::vector<PhantomBlob> blobs;
  double support_radius = 0.9;
};

inline PhantomSpec default_phantom_spec() {
  return PhantomSpec{{{1.0, 0.3, 0.2, 0.25}, {0.6, -0.35, -0.25, 0.3}}, 0.9};
}

struct Phantom {
  Vec c_dagger;
  double support_radius = 0.9;
  std::string description;
};

/// Sum of compactly supported bumps a * max(0, 1 - |x-x0|^2/r^2)^2 at vertices.
inline Phantom make_phantom(const Mesh& mesh, const PhantomSpec& spec) {
  for (const auto& b : spec.blobs) {
    if (std::hypot(b.cx, b.cy) + b.radius > spec.support_radius)
      throw ValidationError("make_phantom: blob escapes the support disk");
    if (!(b.radius > 0)) throw ValidationError("make_phantom: blob radius must be > 0");
  }
  Phantom ph;
  ph.support_radius = spec.support_radius;
  ph.c_dagger = Vec::Zero(mesh.n_vertices());
  for (int p = 0; p < mesh.n_vertices(); ++p) {
    const double x = mesh.vertices[p][0], y = mesh.vertices[p][1];
    double v = 0.0;
    for (const auto& b : spec.blobs) {
      const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
      const double t = 1.0 - d2 / (b.radius * b.radius);
      if (t > 0) v += b.amplitude * t * t;
    }
    ph.c_dagger[p] = v;
  }
  char buf[96];
  for (const auto& b : spec.blobs) {
    std::snprintf(buf, sizeof buf, "bump(a=%g,c=(%g,%g),r=%g) ", b.amplitude, b.cx, b.cy,
                  b.radius);
    ph.description += buf;
  }
  return ph;
}

inline double xnorm(const Vec& v, const Vec& w) {
  return std::sqrt((v.array().square() * w.array()).sum());
}

// ---- run records ------------------------------------------------------------

struct LevelRecord {
  int level = 0;
  int m = 0, k = 0;
  int xK = 0, mK = 0, K = 0, NK = 0, N = 0;
  double norm_T = 0.0;
  bool trivial = false;
  // online
  bool has_online = false;
  int alpha_exponent = 0;
  bool alpha_satisfied = false;
  double discrepancy = 0.0;
  double recon_error_rel = 0.0;
  int iterations_full = 0;
  int iterations_tensor = 0;
  // oracle
  bool has_oracle = false;
  int N_svd = 0;
  bool verdict = false;
  double max_qn_err = 0.0;
  double max_sigma_dev = 0.0;
  // timings (seconds; recorded, never asserted)
  double t_offline = 0.0, t_online = 0.0, t_oracle = 0.0;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---- offline / online / oracle ----------------------------------------------

struct OfflineResult {
  Mesh mesh;
  TruthOperator op;
  ReducedModel model;
  LevelRecord record;
};

inline OfflineResult run_offline(int level, double delta, double epsilon,
                                 const ProblemParams& params = {}) {
  Stopwatch watch;
  OfflineResult out;
  out.mesh = mesh_at_level(level, params.base_boundary);
  out.op = build_truth_operator(out.mesh, params.excitation, params.emission, params.gram);
  out.model = reduce_operator(out.op, delta, epsilon, mesh_fingerprint(out.mesh));
  LevelRecord& r = out.record;
  r.level = level;
  r.m = out.mesh.n_vertices();
  r.k = out.mesh.n_boundary();
  r.trivial = out.model.N() == 0;
  r.xK = out.model.selection.xK();
  r.mK = out.model.selection.mK();
  r.K = out.model.cross.K;
  r.NK = out.model.NK();
  r.N = out.model.N();
  r.norm_T = out.model.lambdaK.size() ? std::sqrt(std::max(out.model.lambdaK[0], 0.0)) : 0.0;
  r.t_offline = watch.seconds();
  return out;
}

struct OnlineResult {
  Measurement raw;
  AlphaChoice choice;
  double recon_error_rel = 0.0;
  bool baselines = false;
  Reconstruction full_baseline;
  Reconstruction tensor_baseline;
};

inline OnlineResult run_online(const TruthOperator& op, const ReducedModel& model,
                               const Phantom& phantom, double delta, std::uint64_t seed,
                               double tau, Filter filter = Filter::tikhonov,
                               bool baselines = false, int max_exponent = 16) {
  if (model.N() == 0) throw ValidationError("run_online: trivial model");
  OnlineResult out;
  const Mat M = apply_T(op, phantom.c_dagger);
  out.raw = add_noise(M, delta, seed);
  const Measurement reduced = to_reduced(out.raw, model);
  out.choice = choose_alpha_discrepancy(reduced.vector, model, delta, tau, max_exponent, filter);
  const double ref = xnorm(phantom.c_dagger, op.DD);
  out.recon_error_rel = ref > 0 ? xnorm(out.choice.rec.c - phantom.c_dagger, op.DD) / ref : 0.0;
  if (baselines) {
    out.baselines = true;
    const double alpha = out.choice.rec.alpha;
    out.full_baseline = solve_full_baseline(op, out.raw, alpha);
    out.tensor_baseline = solve_tensor_baseline(op, model.selection, out.raw, alpha);
  }
  return out;
}

inline void fill_online_record(LevelRecord& r, const OnlineResult& online) {
  r.has_online = true;
  r.alpha_exponent = online.choice.exponent;
  r.alpha_satisfied = online.choice.satisfied;
  r.discrepancy = online.choice.rec.discrepancy;
  r.recon_error_rel = online.recon_error_rel;
  r.iterations_full = online.baselines ? online.full_baseline.iterations : 0;
  r.iterations_tensor = online.baselines ? online.tensor_baseline.iterations : 0;
}

inline void fill_oracle_record(LevelRecord& r, const CertificationReport& rep) {
  r.has_oracle = true;
  r.N_svd = rep.N_svd;
  r.verdict = rep.verdict;
  r.max_qn_err = rep.max_qn_err;
  r.max_sigma_dev = rep.max_sigma_dev;
}

/// Self-contained certification run (builds the operator and model).
inline CertificationReport run_oracle(int level, double delta, double epsilon = 0.0,
                                      const ProblemParams& params = {},
                                      const CertifyOptions& opts = {}) {
  OfflineResult off = run_offline(level, delta, epsilon, params);
  return certify(off.model, off.op, opts);
}

// ---- structural runs (large levels, rank counts only) -------------------------

struct StructuralRecord {
  int level = 0;
  int m = 0, k = 0;
  int xK = 0, mK = 0, K = 0, NK = 0, N = 0;
  double norm_T = 0.0;  // sqrt of the top cross-Gram eigenvalue
  double t_total = 0.0;
};

/// Rank counts at levels too large for the full pipeline: solves both field
/// problems, truncates, and eigendecomposes the cross Gram assembled from
/// the truncated factors only. No AK, AN, or model persistence.
inline StructuralRecord structural_offline(int level, double delta, double epsilon,
                                           const ProblemParams& params = {}) {
  Stopwatch watch;
  StructuralRecord rec;
  rec.level = level;
  const Mesh mesh = mesh_at_level(level, params.base_boundary);
  rec.m = mesh.n_vertices();
  rec.k = mesh.n_boundary();
  const double thresh = delta * delta;

  Mat Ut, Vt;
  Vec sx, sm, DD;
  {
    const FemSystem sys_x = assemble_system(mesh, params.excitation, params.gram);
    DD = sys_x.DD;
    Mat U = solve_excitation(sys_x, Mat::Identity(rec.k, rec.k));
    GeneralizedEigenResult ex = sym_generalized_eig(detail::gram_project(sys_x.GU, U), sys_x.SY);
    sx = ex.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    int xK = 0;
    while (xK < ex.eigenvalues.size() && ex.eigenvalues[xK] > thresh) ++xK;
    rec.xK = xK;
    Ut.resize(rec.m, xK);
    constexpr Eigen::Index chunk = 8192;
    for (Eigen::Index r0 = 0; r0 < U.rows(); r0 += chunk) {
      const Eigen::Index nr = std::min(chunk, U.rows() - r0);
      Ut.middleRows(r0, nr).noalias() = U.middleRows(r0, nr) * ex.eigenvectors.leftCols(xK);
    }
  }
  {
    const FemSystem sys_m = assemble_system(mesh, params.emission, params.gram);
    Mat V = solve_emission_adjoint(sys_m, Mat::Identity(rec.k, rec.k));
    GeneralizedEigenResult em = sym_generalized_eig(detail::gram_project(sys_m.GU, V), sys_m.SY);
    sm = em.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    int mK = 0;
    while (mK < em.eigenvalues.size() && em.eigenvalues[mK] > thresh) ++mK;
    rec.mK = mK;
    Vt.resize(rec.m, mK);
    constexpr Eigen::Index chunk = 8192;
    for (Eigen::Index r0 = 0; r0 < V.rows(); r0 += chunk) {
      const Eigen::Index nr = std::min(chunk, V.rows() - r0);
      Vt.middleRows(r0, nr).noalias() = V.middleRows(r0, nr) * em.eigenvectors.leftCols(mK);
    }
  }
  if (rec.xK == 0 || rec.mK == 0) return rec;  // trivial
  TruncationSelection sel;
  sel.delta = delta;
  sel.xKK.resize(rec.xK);
  sel.mKK.resize(rec.mK);
  std::iota(sel.xKK.begin(), sel.xKK.end(), 0);
  std::iota(sel.mKK.begin(), sel.mKK.end(), 0);
  rec.K = choose_cross_parameter(sel, sx, sm);
  const HyperbolicIndexSet cross = hyperbolic_cross(rec.K, rec.xK, rec.mK, epsilon);
  rec.NK = cross.size();
  const double gain = params.excitation.rho * params.emission.rho;
  const Mat B = cross_gram(Ut, Vt, DD, cross, gain);
  const Vec lam = sym_eigvals_descending(B);
  int N = 0;
  while (N < lam.size() && lam[N] > thresh) ++N;
  rec.N = N;
  rec.norm_T = lam.size() ? std::sqrt(std::max(lam[0], 0.0)) : 0.0;
  rec.t_total = watch.seconds();
  return rec;
}

// ---- CSV / PGM emission -------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// table1: problem sizes and operator norm; table4: truncation ranks;
/// table6: cross and reduced ranks. Quantities as rows, levels as columns.
inline void emit_tables(const std::vector<LevelRecord>& records, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir + "/" + name, std::ios::binary);
    if (!f) throw ValidationError(std::string("emit_tables: cannot write ") + name);
    return f;
  };
  auto header = [&](std::ofstream& f) {
    f << "quantity";
    for (const auto& r : records) f << ",L" << r.level;
    f << "\n";
  };
  {
    std::ofstream f = open("table1.csv");
    header(f);
    f << "m";
    for (const auto& r : records) f << "," << r.m;
    f << "\nk";
    for (const auto& r : records) f << "," << r.k;
    f << "\nnorm_T";
    for (const auto& r : records) f << "," << detail::fmt_double(r.norm_T);
    f << "\n";
  }
  {
    std::ofstream f = open("table4.csv");
    header(f);
    f << "xK";
    for (const auto& r : records) f << "," << r.xK;
    f << "\nmK";
    for (const auto& r : records) f << "," << r.mK;
    f << "\nK";
    for (const auto& r : records) f << "," << r.K;
    f << "\n";
  }
  {
    std::ofstream f = open("table6.csv");
    header(f);
    f << "rank_TK";
    for (const auto& r : records) f << "," << r.NK;
    f << "\nrank_TN";
    for (const auto& r : records) f << "," << r.N;
    f << "\n";
  }
}

/// Spectrum and verdict of one certification run, one row per index.
inline void write_oracle_csv(const std::vector<std::pair<int, CertificationReport>>& reports,
                             const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("write_oracle_csv: cannot write " + path);
  f << "level,k,sigma_full,sigma_cross,N,N_svd,verdict,delta,max_qn_err,max_sigma_dev,route,"
       "pivot_rank,lambda_err\n";
  for (const auto& [level, rep] : reports) {
    const Eigen::Index rows =
        std::min<Eigen::Index>(rep.sigma_full.size(),
                               std::max<Eigen::Index>(rep.N_svd + 32, rep.sigma_cross.size()));
    for (Eigen::Index i = 0; i < rows; ++i) {
      f << level << "," << (i + 1) << "," << detail::fmt_double(rep.sigma_full[i]) << ",";
      if (i < rep.sigma_cross.size()) f << detail::fmt_double(rep.sigma_cross[i]);
      f << "," << rep.N << "," << rep.N_svd << "," << (rep.verdict ? "PASS" : "FAIL") << ","
        << detail::fmt_double(rep.delta) << "," << detail::fmt_double(rep.max_qn_err) << ","
        << detail::fmt_double(rep.max_sigma_dev) << "," << rep.route << "," << rep.pivot_rank
        << "," << detail::fmt_double(rep.lambda_err) << "\n";
    }
  }
}

/// Rasterize a vertex field to a 512x512 binary PGM. Linear grayscale maps
/// [0, max(c)] to [255, 0]; points outside the mesh are white.
inline void emit_image(const Vec& c, const Mesh& mesh, const std::string& path) {
  if (c.size() != mesh.n_vertices()) throw ValidationError("emit_image: field size mismatch");
  constexpr int W = 512, H = 512;
  constexpr int G = 64;  // bucket grid
  const double vmax = c.size() ? std::max(c.maxCoeff(), 0.0) : 0.0;

  std::vector<std::vector<int>> buckets(G * G);
  auto cell_of = [&](double x) {
    int i = static_cast<int>((x + 1.0) * 0.5 * G);
    return std::clamp(i, 0, G - 1);
  };
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    double minx = 1e9, maxx = -1e9, miny = 1e9, maxy = -1e9;
    for (int v : tri) {
      minx = std::min(minx, mesh.vertices[v][0]);
      maxx = std::max(maxx, mesh.vertices[v][0]);
      miny = std::min(miny, mesh.vertices[v][1]);
      maxy = std::max(maxy, mesh.vertices[v][1]);
    }
    for (int gy = cell_of(miny); gy <= cell_of(maxy); ++gy)
      for (int gx = cell_of(minx); gx <= cell_of(maxx); ++gx)
        buckets[gy * G + gx].push_back(t);
  }

  std::vector<unsigned char> img(W * H, 255);
  for (int row = 0; row < H; ++row) {
    const double y = 1.0 - (row + 0.5) * (2.0 / H);
    for (int col = 0; col < W; ++col) {
      const double x = -1.0 + (col + 0.5) * (2.0 / W);
      const auto& cand = buckets[cell_of(y) * G + cell_of(x)];
      for (int t : cand) {
        const auto& tri = mesh.triangles[t];
        const auto& a = mesh.vertices[tri[0]];
        const auto& b = mesh.vertices[tri[1]];
        const auto& cc = mesh.vertices[tri[2]];
        const double det = (b[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (b[1] - a[1]);
        const double l1 = ((x - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (y - a[1])) / det;
        const double l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
        const double l0 = 1.0 - l1 - l2;
        const double eps = -1e-12;
        if (l0 >= eps && l1 >= eps && l2 >= eps) {
          double v = l0 * c[tri[0]] + l1 * c[tri[1]] + l2 * c[tri[2]];
          int g = vmax > 0 ? 255 - static_cast<int>(std::lround(255.0 * v / vmax)) : 255;
          img[row * W + col] = static_cast<unsigned char>(std::clamp(g, 0, 255));
          break;
        }
      }
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("emit_image: cannot write " + path);
  f << "P5\n" << W << " " << H << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

// ---- report -------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const LevelRecord& r) {
  nlohmann::ordered_json j;
  j["level"] = r.level;
  j["m"] = r.m;
  j["k"] = r.k;
  j["xK"] = r.xK;
  j["mK"] = r.mK;
  j["K"] = r.K;
  j["NK"] = r.NK;
  j["N"] = r.N;
  j["norm_T"] = r.norm_T;
  j["trivial"] = r.trivial;
  if (r.has_online) {
    j["alpha_exponent"] = r.alpha_exponent;
    j["alpha_satisfied"] = r.alpha_satisfied;
    j["discrepancy"] = r.discrepancy;
    j["recon_error_rel"] = r.recon_error_rel;
    j["iterations_full"] = r.iterations_full;
    j["iterations_tensor"] = r.iterations_tensor;
  }
  if (r.has_oracle) {
    j["N_svd"] = r.N_svd;
    j["verdict"] = r.verdict ? "PASS" : "FAIL";
    j["max_qn_err"] = r.max_qn_err;
    j["max_sigma_dev"] = r.max_sigma_dev;
  }
  j["timings"] = {{"offline_s", r.t_offline}, {"online_s", r.t_online}, {"oracle_s", r.t_oracle}};
  return j;
}

}  // namespace fdot
