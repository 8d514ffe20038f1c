#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sparlow/errors.hpp"
#include "sparlow/manifold.hpp"

namespace sparlow {

/// Elastic net regularizer lambda1 ||phi||_1 + lambda2 ||phi||_2^2.
/// lambda2 > 0 is required: it makes the per-sample regression strictly
/// convex and keeps the on-support system D_L^T D_L + 2 lambda2 I invertible
/// without any spark condition on the dictionary.
struct ElasticNetPrior {
  double lambda1 = 0.2;
  double lambda2 = 1e-3;

  void validate() const {
    if (lambda1 < 0.0) throw ValidationError("ElasticNetPrior: lambda1 must be >= 0");
    if (!(lambda2 > 0.0)) throw ValidationError("ElasticNetPrior: lambda2 must be > 0");
  }
};

/// One coefficient vector with its support (indices of nonzero entries,
/// ascending). values[i] != 0 exactly when i is in the support.
struct SparseCode {
  Vector values;
  std::vector<int> support;
};

/// Column-per-sample batch of codes.
struct CodeBatch {
  Matrix codes; // r x n
  std::vector<std::vector<int>> supports;

  Eigen::Index samples() const { return codes.cols(); }
};

struct EncodeOptions {
  int max_cd_iters = 10000;  // full coordinate sweeps
  double kkt_tol = 1e-9;
  double snap_tol = 1e-12;   // |phi_i| below this is set to exact zero
};

/// Maximum violation of the subdifferential optimality conditions:
///   d_i^T (x - D phi) = lambda1 sign(phi_i) + 2 lambda2 phi_i   (phi_i != 0)
///   |d_i^T (x - D phi)| <= lambda1                              (phi_i == 0)
/// Zero at the exact optimum.
inline double kkt_residual(const Vector& x, const Matrix& d, const Vector& phi,
                           const ElasticNetPrior& prior) {
  Vector corr = d.transpose() * (x - d * phi);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    double v;
    if (phi[j] != 0.0) {
      const double sign = phi[j] > 0.0 ? 1.0 : -1.0;
      v = std::abs(corr[j] - prior.lambda1 * sign - 2.0 * prior.lambda2 * phi[j]);
    } else {
      v = std::max(0.0, std::abs(corr[j]) - prior.lambda1);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

inline double kkt_residual(const Vector& x, const Dictionary& d, const Vector& phi,
                           const ElasticNetPrior& prior) {
  return kkt_residual(x, d.matrix(), phi, prior);
}

namespace detail {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// Active-set polish: once coordinate descent has identified the support and
/// the signs, the minimizer solves K phi_L = q_L - lambda1 sign_L exactly.
/// The polished iterate replaces phi only when it keeps the support and
/// signs and does not worsen the KKT residual.
inline void polish_on_support(const Matrix& gram, const Vector& q,
                              const ElasticNetPrior& prior, const EncodeOptions& opts,
                              double residual, Vector& phi) {
  const Eigen::Index r = phi.size();
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < r; ++j) {
    if (phi[j] != 0.0) support.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(support.size());
  if (k == 0) return;

  Matrix kk(k, k);
  Vector rhs(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) kk(a, b) = gram(support[a], support[b]);
    kk(a, a) += 2.0 * prior.lambda2;
    rhs[a] = q[support[a]] - prior.lambda1 * (phi[support[a]] > 0.0 ? 1.0 : -1.0);
  }
  Vector sol = kk.llt().solve(rhs);
  Vector candidate = Vector::Zero(r);
  for (Eigen::Index a = 0; a < k; ++a) {
    if (std::abs(sol[a]) < opts.snap_tol) return; // support would shrink
    if ((sol[a] > 0.0) != (phi[support[a]] > 0.0)) return; // sign flipped
    candidate[support[a]] = sol[a];
  }
  Vector s = gram * candidate;
  double cand_residual = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double corr = q[j] - s[j];
    double v;
    if (candidate[j] != 0.0) {
      const double sign = candidate[j] > 0.0 ? 1.0 : -1.0;
      v = std::abs(corr - prior.lambda1 * sign - 2.0 * prior.lambda2 * candidate[j]);
    } else {
      v = std::max(0.0, std::abs(corr) - prior.lambda1);
    }
    cand_residual = std::max(cand_residual, v);
  }
  if (cand_residual <= residual) phi = candidate;
}

/// Cyclic coordinate descent with covariance updates. gram = D^T D and
/// q = D^T x are precomputed by the caller; a shared gram makes batch
/// encoding cheap. Coordinates are visited in ascending index order.
inline Vector coordinate_descent(const Matrix& gram, const Vector& q,
                                 const ElasticNetPrior& prior,
                                 const EncodeOptions& opts) {
  const Eigen::Index r = gram.rows();
  Vector phi = Vector::Zero(r);
  Vector s = Vector::Zero(r); // s = gram * phi, maintained incrementally
  double residual = std::numeric_limits<double>::infinity();

  for (int sweep = 0; sweep < opts.max_cd_iters; ++sweep) {
    for (Eigen::Index j = 0; j < r; ++j) {
      const double rho = q[j] - s[j] + gram(j, j) * phi[j];
      const double next = soft_threshold(rho, prior.lambda1) /
                          (gram(j, j) + 2.0 * prior.lambda2);
      const double delta = next - phi[j];
      if (delta != 0.0) {
        s += gram.col(j) * delta;
        phi[j] = next;
      }
    }
    // refresh s exactly before testing optimality; the incremental updates
    // drift at the 1e-15 level, which matters at tight tolerances
    s.noalias() = gram * phi;
    residual = 0.0;
    for (Eigen::Index j = 0; j < r; ++j) {
      const double corr = q[j] - s[j];
      double v;
      if (phi[j] != 0.0) {
        const double sign = phi[j] > 0.0 ? 1.0 : -1.0;
        v = std::abs(corr - prior.lambda1 * sign - 2.0 * prior.lambda2 * phi[j]);
      } else {
        v = std::max(0.0, std::abs(corr) - prior.lambda1);
      }
      residual = std::max(residual, v);
    }
    if (residual <= opts.kkt_tol) {
      for (Eigen::Index j = 0; j < r; ++j) {
        if (std::abs(phi[j]) < opts.snap_tol) phi[j] = 0.0;
      }
      polish_on_support(gram, q, prior, opts, residual, phi);
      return phi;
    }
  }
  throw NumericalError("sparse_encode: no convergence after " +
                       std::to_string(opts.max_cd_iters) +
                       " sweeps, KKT residual " + std::to_string(residual));
}

inline std::vector<int> extract_support(const Vector& phi) {
  std::vector<int> support;
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    if (phi[j] != 0.0) support.push_back(static_cast<int>(j));
  }
  return support;
}

} // namespace detail

/// Solves the per-sample elastic-net regression
///   min_phi 1/2 ||x - D phi||^2 + lambda1 ||phi||_1 + lambda2 ||phi||^2.
/// Accepts a raw matrix so callers may probe slightly off-manifold
/// dictionaries (finite differences); the atom norms enter through the Gram
/// matrix either way.
inline SparseCode sparse_encode(const Vector& x, const Matrix& d,
                                const ElasticNetPrior& prior,
                                const EncodeOptions& opts = {}) {
  prior.validate();
  if (x.size() != d.rows()) throw ValidationError("sparse_encode: dimension mismatch");
  if (!x.allFinite() || !d.allFinite()) {
    throw ValidationError("sparse_encode: non-finite input");
  }
  Matrix gram = d.transpose() * d;
  Vector q = d.transpose() * x;
  Vector phi = detail::coordinate_descent(gram, q, prior, opts);
  std::vector<int> support = detail::extract_support(phi);
  return {std::move(phi), std::move(support)};
}

inline SparseCode sparse_encode(const Vector& x, const Dictionary& d,
                                const ElasticNetPrior& prior,
                                const EncodeOptions& opts = {}) {
  return sparse_encode(x, d.matrix(), prior, opts);
}

/// Encodes every column of X. Per-sample problems are independent; the Gram
/// matrix is shared. Convergence failures are aggregated with their sample
/// indices.
inline CodeBatch batch_encode(const Matrix& x, const Matrix& d,
                              const ElasticNetPrior& prior,
                              const EncodeOptions& opts = {}) {
  prior.validate();
  if (x.rows() != d.rows()) throw ValidationError("batch_encode: dimension mismatch");
  const Eigen::Index n = x.cols();
  const Eigen::Index r = d.cols();
  CodeBatch batch;
  batch.codes.resize(r, n);
  batch.supports.resize(static_cast<size_t>(n));
  Matrix gram = d.transpose() * d;
  std::string failures;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector q = d.transpose() * x.col(i);
    try {
      Vector phi = detail::coordinate_descent(gram, q, prior, opts);
      batch.supports[static_cast<size_t>(i)] = detail::extract_support(phi);
      batch.codes.col(i) = phi;
    } catch (const NumericalError& e) {
      if (!failures.empty()) failures += "; ";
      failures += "sample " + std::to_string(i) + ": " + e.what();
    }
  }
  if (!failures.empty()) throw NumericalError("batch_encode: " + failures);
  return batch;
}

inline CodeBatch batch_encode(const Matrix& x, const Dictionary& d,
                              const ElasticNetPrior& prior,
                              const EncodeOptions& opts = {}) {
  return batch_encode(x, d.matrix(), prior, opts);
}

/// Hessian of the elastic net restricted to the support: 2 lambda2 I.
inline Matrix hessian_on_support(const ElasticNetPrior& prior, const Vector& phi_support) {
  if (phi_support.size() == 0) {
    throw ValidationError("hessian_on_support: empty support");
  }
  return 2.0 * prior.lambda2 *
         Matrix::Identity(phi_support.size(), phi_support.size());
}

/// Directional derivative of the code with respect to the dictionary, in
/// direction H (m x r). With K = D_L^T D_L + 2 lambda2 I,
///   (D phi)_L = K^{-1} (H_L^T x - (H_L^T D_L + D_L^T H_L) phi_L),
/// and zero off the support. Valid while the support of the certified
/// optimum is locally stable.
inline Vector code_jacobian_apply(const Vector& x, const Matrix& d,
                                  const SparseCode& code, const Matrix& h,
                                  const ElasticNetPrior& prior) {
  if (h.rows() != d.rows() || h.cols() != d.cols()) {
    throw ValidationError("code_jacobian_apply: direction shape mismatch");
  }
  const Eigen::Index r = d.cols();
  Vector out = Vector::Zero(r);
  const auto k = static_cast<Eigen::Index>(code.support.size());
  if (k == 0) return out;

  Matrix dl(d.rows(), k), hl(d.rows(), k);
  Vector phil(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const int idx = code.support[static_cast<size_t>(a)];
    dl.col(a) = d.col(idx);
    hl.col(a) = h.col(idx);
    phil[a] = code.values[idx];
  }
  Matrix kk = dl.transpose() * dl +
              2.0 * prior.lambda2 * Matrix::Identity(k, k);
  Matrix cross = hl.transpose() * dl;
  Vector rhs = hl.transpose() * x - (cross + cross.transpose()) * phil;
  Vector y = kk.llt().solve(rhs);
  for (Eigen::Index a = 0; a < k; ++a) {
    out[code.support[static_cast<size_t>(a)]] = y[a];
  }
  return out;
}

inline Vector code_jacobian_apply(const Vector& x, const Dictionary& d,
                                  const SparseCode& code, const Matrix& h,
                                  const ElasticNetPrior& prior) {
  return code_jacobian_apply(x, d.matrix(), code, h, prior);
}

} // namespace sparlow
