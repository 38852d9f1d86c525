#pragma once

// Online phase: measured data is compressed in two stages (truncated
// source/detector modes, then the spectral projector of the reduced
// operator), the low-dimensional regularized normal equations are solved
// with a spectral filter, and the regularization parameter is chosen by the
// discrepancy principle on a decade grid. Full-operator and tensor-product
// CG reconstructions serve as baselines.

#include <cmath>
#include <string>
#include <utility>

#include "fdot/forward.hpp"
#include "fdot/linalg.hpp"
#include "fdot/reduce.hpp"
#include "fdot/rng.hpp"
#include "fdot/types.hpp"

namespace fdot {

enum class MeasurementStage { raw, precompressed, cross, reduced };

inline const char* stage_name(MeasurementStage s) {
  switch (s) {
    case MeasurementStage::raw: return "raw";
    case MeasurementStage::precompressed: return "precompressed";
    case MeasurementStage::cross: return "cross";
    case MeasurementStage::reduced: return "reduced";
  }
  return "?";
}

struct Measurement {
  MeasurementStage stage = MeasurementStage::raw;
  Mat matrix;               // raw: k x k; precompressed: mK x xK
  Vec vector;               // cross: NK; reduced: N
  double delta = 0.0;       // asserted noise bound
  std::string fingerprint;  // model the data was compressed with; empty while raw
};

/// M + delta * E / ||E||_F with E i.i.d. standard normal: the noise bound
/// holds with equality. Deterministic per seed.
inline Measurement add_noise(const Mat& M, double delta, std::uint64_t seed) {
  if (!(delta >= 0)) throw ValidationError("add_noise: delta must be >= 0");
  Measurement out;
  out.stage = MeasurementStage::raw;
  out.delta = delta;
  if (delta == 0.0) {
    out.matrix = M;
    return out;
  }
  GaussianSampler g(seed);
  Mat E(M.rows(), M.cols());
  for (Eigen::Index j = 0; j < E.cols(); ++j)
    for (Eigen::Index i = 0; i < E.rows(); ++i) E(i, j) = g.next();
  out.matrix = M + (delta / E.norm()) * E;
  return out;
}

namespace detail {

inline void check_fingerprint(const Measurement& meas, const ReducedModel& model,
                              const char* where) {
  if (!meas.fingerprint.empty() && meas.fingerprint != model.fingerprint)
    throw ValidationError(std::string(where) + ": measurement fingerprint does not match model");
}

}  // namespace detail

/// Restrict raw data to the retained detector/source modes. Data in the
/// orthonormalized basis is a row/column selection; data in the physical
/// (boundary hat function) basis is folded through QmK' M QxK. Rows can be
/// folded one detector at a time; precompress() is the one-shot wrapper
/// around the same fold.
class StreamingPrecompress {
 public:
  StreamingPrecompress(const ReducedModel& model, bool physical_basis, double delta)
      : model_(&model), physical_(physical_basis), delta_(delta) {
    out_ = Mat::Zero(model.selection.mK(), model.selection.xK());
    rows_seen_ = 0;
  }

  /// Fold detector row i (length k, basis per construction flag).
  void fold_row(int i, const Eigen::RowVectorXd& row) {
    const int k = static_cast<int>(model_->QxK.rows());
    if (row.size() != k) throw ValidationError("fold_row: row length mismatch");
    if (i < 0 || i >= k) throw ValidationError("fold_row: detector index out of range");
    if (physical_) {
      const Eigen::RowVectorXd t = row * model_->QxK;  // 1 x xK
      out_.noalias() += model_->QmK.row(i).transpose() * t;
    } else {
      for (int r = 0; r < model_->selection.mK(); ++r)
        if (model_->selection.mKK[r] == i)
          for (int c = 0; c < model_->selection.xK(); ++c)
            out_(r, c) = row[model_->selection.xKK[c]];
    }
    ++rows_seen_;
  }

  Measurement finish() const {
    if (rows_seen_ != model_->QxK.rows())
      throw ValidationError("StreamingPrecompress: not all detector rows folded");
    Measurement m;
    m.stage = MeasurementStage::precompressed;
    m.matrix = out_;
    m.delta = delta_;
    m.fingerprint = model_->fingerprint;
    return m;
  }

 private:
  const ReducedModel* model_;
  bool physical_;
  double delta_;
  Mat out_;
  Eigen::Index rows_seen_;
};

inline Measurement precompress(const Measurement& meas, const ReducedModel& model,
                               bool physical_basis = false) {
  if (meas.stage != MeasurementStage::raw)
    throw ValidationError(std::string("precompress: expected raw data, got stage ") +
                          stage_name(meas.stage));
  detail::check_fingerprint(meas, model, "precompress");
  if (meas.matrix.rows() != model.QxK.rows() || meas.matrix.cols() != model.QxK.rows())
    throw ValidationError("precompress: raw data must be k x k");
  StreamingPrecompress s(model, physical_basis, meas.delta);
  for (Eigen::Index i = 0; i < meas.matrix.rows(); ++i)
    s.fold_row(static_cast<int>(i), meas.matrix.row(i));
  return s.finish();
}

/// Hyperbolic-cross entries of the precompressed block, in cross order.
inline Measurement extract_cross(const Measurement& meas, const ReducedModel& model) {
  if (meas.stage != MeasurementStage::precompressed)
    throw ValidationError(std::string("extract_cross: expected precompressed data, got stage ") +
                          stage_name(meas.stage));
  detail::check_fingerprint(meas, model, "extract_cross");
  Measurement out;
  out.stage = MeasurementStage::cross;
  out.delta = meas.delta;
  out.fingerprint = model.fingerprint;
  out.vector.resize(model.NK());
  for (int r = 0; r < model.NK(); ++r)
    out.vector[r] = meas.matrix(model.cross.pairs[r].first, model.cross.pairs[r].second);
  return out;
}

/// Project onto the reduced spectral basis: M_N = PN * (cross entries).
inline Measurement compress(const Measurement& meas, const ReducedModel& model) {
  Measurement cross =
      meas.stage == MeasurementStage::cross ? meas : extract_cross(meas, model);
  detail::check_fingerprint(cross, model, "compress");
  Measurement out;
  out.stage = MeasurementStage::reduced;
  out.delta = meas.delta;
  out.fingerprint = model.fingerprint;
  out.vector = model.PN * cross.vector;
  return out;
}

enum class Filter { tikhonov, tsvd };

inline const char* filter_name(Filter f) { return f == Filter::tikhonov ? "tikhonov" : "tsvd"; }

struct Reconstruction {
  Vec c;
  double alpha = 0.0;
  Filter filter = Filter::tikhonov;
  double discrepancy = 0.0;  // ||AN c - M_N||_2 (reduced) or data-space residual (baselines)
  int iterations = 0;
  bool converged = true;
};

/// Solve the reduced normal equations with a spectral filter.
/// tikhonov: (AN ANt + alpha I) z = M_N, c = ANt z, via Cholesky.
/// tsvd: z_i = M_N,i / lambda_i where lambda_i >= alpha, else 0 (AN ANt is
/// diagonal in the stored eigenbasis by construction).
/// gram, if supplied, must equal AN * ANt (precomputed by scanning callers).
inline Reconstruction solve_reduced(const Vec& M_N, const ReducedModel& model, double alpha,
                                    Filter filter, const Mat* gram = nullptr) {
  const int N = model.N();
  if (N < 1) throw ValidationError("solve_reduced: trivial model (N = 0)");
  if (M_N.size() != N) throw ValidationError("solve_reduced: data length != N");
  Reconstruction rec;
  rec.alpha = alpha;
  rec.filter = filter;
  Vec z(N);
  if (filter == Filter::tikhonov) {
    if (!(alpha > 0)) throw ValidationError("solve_reduced: alpha must be > 0 for tikhonov");
    Mat G = gram ? *gram : Mat(model.AN * model.ANt);
    G.diagonal().array() += alpha;
    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success)
      throw NumericalError("solve_reduced: Cholesky of the regularized Gram failed");
    z = llt.solve(M_N);
  } else {
    for (int i = 0; i < N; ++i) z[i] = model.lambdaN[i] >= alpha ? M_N[i] / model.lambdaN[i] : 0.0;
  }
  rec.c = model.ANt * z;
  rec.discrepancy = (model.AN * rec.c - M_N).norm();
  return rec;
}

inline Measurement to_reduced(const Measurement& meas, const ReducedModel& model,
                              bool physical_basis = false) {
  Measurement m = meas;
  if (m.stage == MeasurementStage::raw) m = precompress(m, model, physical_basis);
  if (m.stage == MeasurementStage::precompressed) m = extract_cross(m, model);
  if (m.stage == MeasurementStage::cross) m = compress(m, model);
  return m;
}

struct AlphaChoice {
  Reconstruction rec;
  int exponent = 0;     // selected alpha = 10^-exponent
  bool satisfied = false;  // discrepancy <= tau * delta reached on the grid
};

/// Largest alpha = 10^-n, n = 0,1,2,..., with ||AN c_alpha - M_N|| <= tau*delta.
/// Falls back to the best discrepancy seen if no grid point qualifies.
inline AlphaChoice choose_alpha_discrepancy(const Vec& M_N, const ReducedModel& model,
                                            double delta, double tau, int max_exponent = 16,
                                            Filter filter = Filter::tikhonov) {
  if (!(tau >= 1)) throw ValidationError("choose_alpha_discrepancy: tau must be >= 1");
  if (max_exponent < 0 || max_exponent > 306)
    throw ValidationError("choose_alpha_discrepancy: max_exponent out of range");
  const Mat gram = model.AN * model.ANt;
  AlphaChoice best;
  bool have_best = false;
  for (int n = 0; n <= max_exponent; ++n) {
    const double alpha = std::pow(10.0, -n);
    Reconstruction rec = solve_reduced(M_N, model, alpha, filter, &gram);
    if (rec.discrepancy <= tau * delta) {
      AlphaChoice out;
      out.rec = std::move(rec);
      out.exponent = n;
      out.satisfied = true;
      return out;
    }
    if (!have_best || rec.discrepancy < best.rec.discrepancy) {
      best.rec = std::move(rec);
      best.exponent = n;
      have_best = true;
    }
  }
  best.satisfied = false;
  return best;
}

/// CG on (T*T + alpha I) c = T* M for the untruncated truth operator.
inline Reconstruction solve_full_baseline(const TruthOperator& op, const Measurement& meas,
                                          double alpha, int maxit = 10000,
                                          const std::function<void(int, const Vec&)>& on_iterate = {}) {
  if (meas.stage != MeasurementStage::raw)
    throw ValidationError("solve_full_baseline: expected raw data");
  const double tol = alpha * meas.delta * meas.delta;
  CgResult cg = cg_normal_equations(
      [&op](const Vec& c) { return apply_T(op, c); },
      [&op](const Mat& M) { return apply_Tt(op, M); }, meas.matrix, alpha, tol, maxit, op.DD,
      on_iterate);
  Reconstruction rec;
  rec.c = std::move(cg.c);
  rec.alpha = alpha;
  rec.iterations = cg.iterations;
  rec.converged = cg.converged;
  rec.discrepancy = (apply_T(op, rec.c) - meas.matrix).norm();
  return rec;
}

/// Same normal-equation CG for the tensor-product operator restricted to the
/// retained modes; the data is restricted to the matching subblock.
inline Reconstruction solve_tensor_baseline(const TruthOperator& op,
                                            const TruncationSelection& sel,
                                            const Measurement& meas, double alpha,
                                            int maxit = 10000) {
  if (meas.stage != MeasurementStage::raw)
    throw ValidationError("solve_tensor_baseline: expected raw data");
  if (sel.trivial()) throw ValidationError("solve_tensor_baseline: empty selection");
  Mat UK(op.U.rows(), sel.xK());
  for (int j = 0; j < sel.xK(); ++j) UK.col(j) = op.U.col(sel.xKK[j]);
  Mat VK(op.V.rows(), sel.mK());
  for (int j = 0; j < sel.mK(); ++j) VK.col(j) = op.V.col(sel.mKK[j]);
  Mat MKK(sel.mK(), sel.xK());
  for (int r = 0; r < sel.mK(); ++r)
    for (int c = 0; c < sel.xK(); ++c) MKK(r, c) = meas.matrix(sel.mKK[r], sel.xKK[c]);

  const Vec& DD = op.DD;
  const double gain = op.gain;
  const auto applyT = [&](const Vec& c) -> Mat {
    const Vec wc = DD.cwiseProduct(c);
    return gain * (VK.transpose() * wc.asDiagonal() * UK);
  };
  const auto applyTt = [&](const Mat& M) -> Vec {
    return gain * ((VK * M).array() * UK.array()).rowwise().sum();
  };
  const double tol = alpha * meas.delta * meas.delta;
  CgResult cg = cg_normal_equations(applyT, applyTt, MKK, alpha, tol, maxit, DD);
  Reconstruction rec;
  rec.c = std::move(cg.c);
  rec.alpha = alpha;
  rec.iterations = cg.iterations;
  rec.converged = cg.converged;
  rec.discrepancy = (applyT(rec.c) - MKK).norm();
  return rec;
}

}  // namespace fdot
