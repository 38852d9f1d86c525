#pragma once

// Offline model reduction. The truth factors are truncated at the noise
// level, the operator entries on a hyperbolic cross of source/detector
// indices are assembled into a tall matrix AK, and a spectral recompression
// of AK in the weighted X inner product yields the final low-rank model.
// certify() computes the reference spectrum of the untruncated operator and
// checks the reduced rank against the truncated-SVD rank at the same level.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fdot/forward.hpp"
#include "fdot/linalg.hpp"
#include "fdot/rng.hpp"
#include "fdot/types.hpp"

namespace fdot {

struct TruncationSelection {
  double delta = 0.0;
  std::vector<int> xKK;  // retained source-mode indices, ascending
  std::vector<int> mKK;  // retained detector-mode indices, ascending

  int xK() const { return static_cast<int>(xKK.size()); }
  int mK() const { return static_cast<int>(mKK.size()); }
  bool trivial() const { return xKK.empty() || mKK.empty(); }
};

/// Keep indices with squared singular value strictly above delta^2.
inline TruncationSelection truncate(const Vec& sx, const Vec& sm, double delta) {
  if (!(delta > 0)) throw ValidationError("truncate: delta must be > 0");
  auto check_descending = [](const Vec& s, const char* name) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (!(s[i] >= 0)) throw ValidationError(std::string("truncate: ") + name + " has negative entries");
      if (i > 0 && s[i] > s[i - 1] + 1e-12 * s[0])
        throw ValidationError(std::string("truncate: ") + name + " not descending");
    }
  };
  check_descending(sx, "sx");
  check_descending(sm, "sm");
  TruncationSelection sel;
  sel.delta = delta;
  const double thresh = delta * delta;
  for (Eigen::Index i = 0; i < sx.size(); ++i)
    if (sx[i] * sx[i] > thresh) sel.xKK.push_back(static_cast<int>(i));
  for (Eigen::Index i = 0; i < sm.size(); ++i)
    if (sm[i] * sm[i] > thresh) sel.mKK.push_back(static_cast<int>(i));
  return sel;
}

/// Smallest cross parameter K such that the pairs dropped from the retained
/// block, those with 1-based rank product k*l > K, have singular-value
/// products sx_l sm_k summing to at most delta^2 in squares. The products
/// bound the entry functionals, so the cross stage then removes at most delta
/// from the truncated operator in the Frobenius sense. Pairs sharing a rank
/// product are kept or dropped as a class, matching the hyperbola boundary.
inline int choose_cross_parameter(const TruncationSelection& sel, const Vec& sx, const Vec& sm) {
  if (sel.trivial())
    throw ValidationError("choose_cross_parameter: selection is empty (trivial model)");
  std::map<long long, double> classes;  // k*l -> sum of squared products
  for (int k = 1; k <= sel.mK(); ++k) {
    const double smk = sm[sel.mKK[k - 1]];
    for (int l = 1; l <= sel.xK(); ++l) {
      const double p = sx[sel.xKK[l - 1]] * smk;
      classes[static_cast<long long>(k) * l] += p * p;
    }
  }
  const double budget = sel.delta * sel.delta;
  long long K = static_cast<long long>(sel.xK()) * sel.mK();
  double tail = 0.0;
  for (auto it = classes.rbegin(); it != classes.rend(); ++it) {
    if (tail + it->second > budget) break;
    tail += it->second;
    K = it->first - 1;
  }
  return static_cast<int>(std::max(K, 1LL));
}

struct HyperbolicIndexSet {
  std::vector<std::pair<int, int>> pairs;  // (detector rank, source rank), 0-based
  int K = 0;
  double epsilon = 0.0;

  int size() const { return static_cast<int>(pairs.size()); }
};

/// Pairs (k, l) with 1-based ranks k <= mK, l <= xK, l <= floor(K / k^(1+eps)),
/// in row-major generation order.
inline HyperbolicIndexSet hyperbolic_cross(int K, int xK, int mK, double epsilon = 0.0) {
  if (K < 1 || xK < 1 || mK < 1) throw ValidationError("hyperbolic_cross: empty selection");
  if (epsilon < 0) throw ValidationError("hyperbolic_cross: epsilon must be >= 0");
  HyperbolicIndexSet cross;
  cross.K = K;
  cross.epsilon = epsilon;
  for (int k = 1; k <= std::min(K, mK); ++k) {
    long long Lk;
    if (epsilon == 0.0) {
      Lk = K / k;
    } else {
      Lk = static_cast<long long>(std::floor(double(K) / std::pow(double(k), 1.0 + epsilon)));
    }
    const int lmax = static_cast<int>(std::min<long long>(Lk, xK));
    if (lmax < 1) break;  // bounds shrink monotonically in k
    for (int l = 1; l <= lmax; ++l) cross.pairs.emplace_back(k - 1, l - 1);
  }
  return cross;
}

/// Row (k,l): AK_{(k,l),p} = gain V_{p,mKK[k]} U_{p,xKK[l]} DD_p, so that AK c
/// reproduces the selected entries of T(c) exactly.
inline Mat assemble_hyperbolic_cross_matrix(const TruthOperator& op,
                                            const TruncationSelection& sel,
                                            const HyperbolicIndexSet& cross) {
  if (sel.trivial()) throw ValidationError("assemble_hyperbolic_cross_matrix: empty selection");
  const Eigen::Index m = op.U.rows();
  Mat AK(cross.size(), m);
  for (int r = 0; r < cross.size(); ++r) {
    const int vcol = sel.mKK[cross.pairs[r].first];
    const int ucol = sel.xKK[cross.pairs[r].second];
    AK.row(r) =
        op.gain * (op.V.col(vcol).array() * op.U.col(ucol).array() * op.DD.array()).transpose();
  }
  return AK;
}

namespace detail {

inline constexpr Eigen::Index kGramChunk = 8192;

// B = AK diag(1/DD) AK', accumulated over fixed-width vertex chunks
inline Mat weighted_gram_from_rows(const Mat& AK, const Vec& DD) {
  const Eigen::Index NK = AK.rows(), m = AK.cols();
  const Vec isq = DD.cwiseSqrt().cwiseInverse();
  Mat B = Mat::Zero(NK, NK);
  Mat Z;
  for (Eigen::Index p0 = 0; p0 < m; p0 += kGramChunk) {
    const Eigen::Index np = std::min(kGramChunk, m - p0);
    Z = AK.middleCols(p0, np) * isq.segment(p0, np).asDiagonal();
    B.selfadjointView<Eigen::Lower>().rankUpdate(Z);
  }
  return Mat(B.selfadjointView<Eigen::Lower>());
}

}  // namespace detail

/// Gram of the cross rows in the X inner product, built directly from
/// truncated factors Ut = U(:,xKK), Vt = V(:,mKK) without forming AK.
/// Z_{(k,l),p} = gain Vt_{p,k} Ut_{p,l} sqrt(DD_p); returns Z Z'.
inline Mat cross_gram(const Mat& Ut, const Mat& Vt, const Vec& DD,
                      const HyperbolicIndexSet& cross, double gain = 1.0) {
  const Eigen::Index m = Ut.rows();
  const Eigen::Index NK = cross.size();
  const Vec sq = gain * DD.cwiseSqrt();
  Mat B = Mat::Zero(NK, NK);
  Mat Z(NK, detail::kGramChunk);
  for (Eigen::Index p0 = 0; p0 < m; p0 += detail::kGramChunk) {
    const Eigen::Index np = std::min(detail::kGramChunk, m - p0);
    for (Eigen::Index r = 0; r < NK; ++r) {
      const int vcol = cross.pairs[r].first;
      const int ucol = cross.pairs[r].second;
      Z.row(r).head(np) = (Vt.col(vcol).segment(p0, np).array() *
                           Ut.col(ucol).segment(p0, np).array() * sq.segment(p0, np).array())
                              .transpose();
    }
    B.selfadjointView<Eigen::Lower>().rankUpdate(Z.leftCols(np));
  }
  return Mat(B.selfadjointView<Eigen::Lower>());
}

struct Recompression {
  Mat PN;       // N x NK, rows orthonormal
  Mat AN;       // N x m
  Mat ANt;      // m x N, = diag(1/DD) AN'
  Vec lambdaN;  // descending, all > delta^2
  Vec lambdaK;  // full spectrum of the cross Gram (length NK)
};

/// Spectral truncation of AK in the X inner product: eigendecompose
/// B = AK diag(1/DD) AK', keep eigenvalues above delta^2.
inline Recompression recompress(const Mat& AK, const Vec& DD, double delta) {
  if (AK.rows() == 0) throw ValidationError("recompress: AK is empty");
  if (!(delta > 0)) throw ValidationError("recompress: delta must be > 0");
  const Mat B = detail::weighted_gram_from_rows(AK, DD);
  Vec lam;
  Mat Q;
  sym_eig_descending(B, lam, Q);
  const double clamp = 1e-10 * (lam.size() ? std::max(lam[0], 0.0) : 0.0);
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam[i] < 0) {
      if (lam[i] < -clamp) throw NumericalError("recompress: cross Gram has a negative eigenvalue");
      lam[i] = 0;
    }
  Eigen::Index N = 0;
  while (N < lam.size() && lam[N] > delta * delta) ++N;
  Recompression rec;
  rec.lambdaK = lam;
  rec.lambdaN = lam.head(N);
  rec.PN = Q.leftCols(N).transpose();
  rec.AN = rec.PN * AK;
  rec.ANt = DD.cwiseInverse().asDiagonal() * rec.AN.transpose();
  return rec;
}

struct ReducedModel {
  TruncationSelection selection;
  HyperbolicIndexSet cross;
  Mat QxK;  // k x xK source compression map
  Mat QmK;  // k x mK detector compression map
  Mat AK;   // NK x m cross matrix (may be dropped from persistence)
  Mat PN;
  Mat AN;
  Mat ANt;
  Vec lambdaN;
  Vec lambdaK;
  Vec DD;  // parameter-space quadrature weights used by the reduction
  double delta = 0.0;
  double epsilon = 0.0;
  int mesh_level = 0;
  std::string fingerprint;

  int N() const { return static_cast<int>(lambdaN.size()); }
  int NK() const { return cross.size(); }
};

/// Full offline reduction of a truth operator at noise level delta.
inline ReducedModel reduce_operator(const TruthOperator& op, double delta, double epsilon,
                                    const std::string& fingerprint) {
  ReducedModel model;
  model.delta = delta;
  model.epsilon = epsilon;
  model.mesh_level = op.mesh_level;
  model.fingerprint = fingerprint;
  model.DD = op.DD;
  model.selection = truncate(op.sx, op.sm, delta);
  if (model.selection.trivial()) return model;  // trivial model: N() == 0
  const int K = choose_cross_parameter(model.selection, op.sx, op.sm);
  model.cross = hyperbolic_cross(K, model.selection.xK(), model.selection.mK(), epsilon);
  model.QxK.resize(op.Qx.rows(), model.selection.xK());
  for (int j = 0; j < model.selection.xK(); ++j) model.QxK.col(j) = op.Qx.col(model.selection.xKK[j]);
  model.QmK.resize(op.Qm.rows(), model.selection.mK());
  for (int j = 0; j < model.selection.mK(); ++j) model.QmK.col(j) = op.Qm.col(model.selection.mKK[j]);
  model.AK = assemble_hyperbolic_cross_matrix(op, model.selection, model.cross);
  Recompression rec = recompress(model.AK, op.DD, delta);
  model.PN = std::move(rec.PN);
  model.AN = std::move(rec.AN);
  model.ANt = std::move(rec.ANt);
  model.lambdaN = std::move(rec.lambdaN);
  model.lambdaK = std::move(rec.lambdaK);
  return model;
}

// ---- reference spectrum of the untruncated operator ----------------------
//
// The squared singular values of T : (X, DD) -> HS are the eigenvalues of
// the m x m weighted Gram C = S^(1/2) ((V V') .* (U U')) S^(1/2), S = diag(DD).
// Small problems take the dense eigensolver; larger ones a pivoted Cholesky
// factorization of C with on-demand columns, whose remainder norm is
// measured by power iteration and reported as the spectrum uncertainty.

struct SigmaSpectrum {
  Vec sigma;              // descending estimates of the singular values of T
  std::string route;      // "dense" or "pivoted"
  int pivot_rank = 0;     // columns taken by the pivoted route
  double lambda_err = 0;  // measured spectral norm of the unfactored remainder
};

struct CertifyOptions {
  int max_m = 20000;        // refuse larger problems
  int dense_max_m = 6000;   // dense eigensolve below, pivoted Cholesky above
  double pivot_tol = 0.0;   // stop when remainder norm <= pivot_tol (default 0.02 delta^2)
  int sample_count = 20;
  std::uint64_t seed = 777;
};

namespace detail {

// y = C x for the implicit weighted Gram, via G = V' diag(sqW.*x) U
inline Vec weighted_gram_matvec(const Mat& U, const Mat& V, const Vec& sqW, const Vec& x) {
  const Vec z = sqW.cwiseProduct(x);
  const Mat G = V.transpose() * z.asDiagonal() * U;
  return sqW.cwiseProduct(((V * G).array() * U.array()).rowwise().sum().matrix());
}

inline double remainder_norm_estimate(const Mat& U, const Mat& V, const Vec& sqW, const Mat& L,
                                       Eigen::Index r) {
  GaussianSampler g(4242);
  Vec v(U.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g.next();
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 30; ++it) {
    Vec w = weighted_gram_matvec(U, V, sqW, v);
    if (r > 0) w.noalias() -= L.leftCols(r) * (L.leftCols(r).transpose() * v);
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 2 && std::abs(next - lambda) <= 1e-3 * std::abs(next)) return std::abs(next);
    lambda = next;
  }
  return std::abs(lambda);
}

}  // namespace detail

/// Singular values of the full operator, independent of the reduction path.
inline SigmaSpectrum full_spectrum(const TruthOperator& op, double delta,
                                   const CertifyOptions& opts = {}) {
  const Eigen::Index m = op.U.rows();
  if (m > opts.max_m)
    throw ValidationError("full_spectrum: problem size " + std::to_string(m) +
                          " above the certification cap " + std::to_string(opts.max_m));
  SigmaSpectrum out;
  const Vec sqW = op.gain * op.DD.cwiseSqrt();  // two factors of sqW carry gain^2 into C
  if (m <= opts.dense_max_m) {
    out.route = "dense";
    Mat C = op.V * op.V.transpose();
    C.array() *= (op.U * op.U.transpose()).array();
    C = sqW.asDiagonal() * C * sqW.asDiagonal();
    Vec lam = sym_eigvals_descending(C);
    out.sigma = lam.cwiseMax(0.0).cwiseSqrt();
    return out;
  }

  out.route = "pivoted";
  const double tol = opts.pivot_tol > 0 ? opts.pivot_tol : 0.02 * delta * delta;
  const Vec urow2 = op.U.array().square().rowwise().sum();
  const Vec vrow2 = op.V.array().square().rowwise().sum();
  Vec d = sqW.array().square() * urow2.array() * vrow2.array();  // diag of C
  const Eigen::Index rmax = std::min<Eigen::Index>(m, 6000);
  Mat L;
  Eigen::Index r = 0;
  double measured = -1.0;  // last measured remainder norm, -1 = not yet measured
  double gate = 0.5 * tol;
  while (r < rmax) {
    Eigen::Index q;
    const double dmax = d.maxCoeff(&q);
    if (dmax <= 0) {
      measured = 0.0;
      break;
    }
    if (dmax <= gate) {
      measured = detail::remainder_norm_estimate(op.U, op.V, sqW, L, r);
      if (measured <= tol) break;
      gate = 0.25 * dmax;  // keep pivoting before measuring again
    }
    if (r >= L.cols()) L.conservativeResize(m, std::min(rmax, L.cols() + 512));
    Vec col = sqW.array() * (op.V * op.V.row(q).transpose()).array() *
              (op.U * op.U.row(q).transpose()).array() * sqW[q];
    if (r > 0) col.noalias() -= L.leftCols(r) * L.leftCols(r).row(q).transpose();
    const double piv = std::sqrt(dmax);
    col /= piv;
    col[q] = piv;
    L.col(r) = col;
    d -= col.cwiseAbs2();
    d = d.cwiseMax(0.0);
    d[q] = 0.0;
    ++r;
  }
  if (measured < 0) measured = detail::remainder_norm_estimate(op.U, op.V, sqW, L, r);
  if (measured > tol)
    throw NumericalError("full_spectrum: pivoted factorization reached rank " + std::to_string(r) +
                         " with remainder norm " + std::to_string(measured) + " above tolerance");
  out.pivot_rank = static_cast<int>(r);
  out.lambda_err = measured;
  Mat G(r, r);
  G.setZero();
  G.selfadjointView<Eigen::Lower>().rankUpdate(L.leftCols(r).transpose());
  Vec lam = sym_eigvals_descending(Mat(G.selfadjointView<Eigen::Lower>()));
  out.sigma = lam.cwiseMax(0.0).cwiseSqrt();
  return out;
}

struct CertificationReport {
  double delta = 0.0;
  int N = 0;          // reduced rank
  int N_svd = 0;      // minimal rank with sigma_{N+1} <= delta
  bool verdict = false;  // N <= N_svd
  double sigma1 = 0.0;
  double max_qn_err = 0.0;     // max_c ||T(c) - lift(PN' AN c)||_F over unit-X samples
  double max_sigma_dev = 0.0;  // max_{k<=N} |sigma_k(cross) - sigma_k(full)|
  double cascade_bound = 0.0;  // (C+1) delta with C = 2
  Vec sigma_full;
  Vec sigma_cross;
  std::string route;
  int pivot_rank = 0;
  double lambda_err = 0.0;
};

/// Quasi-optimality check of a reduced model against the full spectrum.
inline CertificationReport certify(const ReducedModel& model, const TruthOperator& op,
                                   const CertifyOptions& opts = {},
                                   const SigmaSpectrum* precomputed = nullptr) {
  CertificationReport rep;
  rep.delta = model.delta;
  rep.cascade_bound = 3.0 * model.delta;
  SigmaSpectrum spec = precomputed ? *precomputed : full_spectrum(op, model.delta, opts);
  rep.sigma_full = spec.sigma;
  rep.route = spec.route;
  rep.pivot_rank = spec.pivot_rank;
  rep.lambda_err = spec.lambda_err;
  rep.sigma1 = spec.sigma.size() ? spec.sigma[0] : 0.0;
  rep.N = model.N();
  while (rep.N_svd < rep.sigma_full.size() && rep.sigma_full[rep.N_svd] > model.delta) ++rep.N_svd;
  rep.verdict = rep.N <= rep.N_svd;
  rep.sigma_cross = model.lambdaK.cwiseMax(0.0).cwiseSqrt();
  for (int i = 0; i < rep.N && i < rep.sigma_cross.size() && i < rep.sigma_full.size(); ++i)
    rep.max_sigma_dev = std::max(rep.max_sigma_dev,
                                 std::abs(rep.sigma_cross[i] - rep.sigma_full[i]));

  GaussianSampler g(opts.seed);
  const Eigen::Index m = op.U.rows();
  for (int s = 0; s < opts.sample_count; ++s) {
    Vec c(m);
    for (Eigen::Index i = 0; i < m; ++i) c[i] = g.next();
    const double xn = std::sqrt((c.array().square() * op.DD.array()).sum());
    c /= xn;
    Mat M = apply_T(op, c);
    if (model.N() > 0) {
      const Vec lifted = model.PN.transpose() * (model.AN * c);
      for (int rI = 0; rI < model.cross.size(); ++rI) {
        const int i = model.selection.mKK[model.cross.pairs[rI].first];
        const int j = model.selection.xKK[model.cross.pairs[rI].second];
        M(i, j) -= lifted[rI];
      }
    }
    rep.max_qn_err = std::max(rep.max_qn_err, M.norm());
  }
  return rep;
}

}  // namespace fdot
