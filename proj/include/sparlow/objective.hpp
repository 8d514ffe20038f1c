#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>

#include "sparlow/errors.hpp"
#include "sparlow/graphs.hpp"
#include "sparlow/manifold.hpp"
#include "sparlow/sparse.hpp"

namespace sparlow {

/// Scalar weights of the objective J = f - mu1 g_c - mu2 g_d plus the anchor
/// dictionary for g_d. sigma keeps the trace-quotient denominator away from
/// zero.
struct SparLowParams {
  double sigma = 1e-3;
  double mu1 = 2.5e-4;
  double mu2 = 5e-3;
  std::optional<Dictionary> anchor;

  void validate() const {
    if (!(sigma > 0.0)) throw ValidationError("SparLowParams: sigma must be > 0");
    if (mu1 < 0.0 || mu2 < 0.0) throw ValidationError("SparLowParams: mu1, mu2 must be >= 0");
    if (mu2 > 0.0 && !anchor.has_value()) {
      throw ValidationError("SparLowParams: mu2 > 0 requires an anchor dictionary");
    }
  }
};

struct ObjectiveReport {
  double f_value = 0.0;
  double gc_value = 0.0;
  double gd_value = 0.0;
  double J_value = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
};

/// Trace quotient tr(P A) / (tr(P B) + sigma). Throws when the guarded
/// denominator is not positive, which indicates an invalid B construction.
inline double trace_quotient_f(const Matrix& a, const Matrix& b, const Matrix& p,
                               double sigma) {
  const double den = (p * b).trace() + sigma;
  if (!(den > 0.0)) {
    throw NumericalError("trace_quotient_f: nonpositive denominator " +
                         std::to_string(den));
  }
  return (p * a).trace() / den;
}

inline double trace_quotient_f(const Matrix& a, const Matrix& b, const Projector& p,
                               double sigma) {
  return trace_quotient_f(a, b, p.matrix(), sigma);
}

/// Log-barrier on pairwise atom coherence:
///   g_c(D) = -sum_{i<j} 1/2 log(1 - (d_i^T d_j)^2) >= 0.
inline double coherence_barrier(const Matrix& d) {
  Matrix gram = d.transpose() * d;
  double value = 0.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
      const double c = gram(i, j);
      if (std::abs(c) >= 1.0 - 1e-12) {
        throw NumericalError("coherence_barrier: atoms " + std::to_string(i) + " and " +
                             std::to_string(j) + " are collapsed (|<d_i,d_j>| = " +
                             std::to_string(std::abs(c)) + ")");
      }
      value -= 0.5 * std::log1p(-c * c);
    }
  }
  return value;
}

inline double coherence_barrier(const Dictionary& d) { return coherence_barrier(d.matrix()); }

/// Gradient of the coherence barrier: D S with S_ij = c_ij / (1 - c_ij^2)
/// off the diagonal, c = D^T D.
inline Matrix coherence_barrier_grad(const Matrix& d) {
  Matrix gram = d.transpose() * d;
  const Eigen::Index r = gram.rows();
  Matrix s = Matrix::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      if (i == j) continue;
      const double c = gram(i, j);
      if (std::abs(c) >= 1.0 - 1e-12) {
        throw NumericalError("coherence_barrier_grad: collapsed atom pair");
      }
      s(i, j) = c / (1.0 - c * c);
    }
  }
  return d * s;
}

inline Matrix coherence_barrier_grad(const Dictionary& d) {
  return coherence_barrier_grad(d.matrix());
}

/// Frobenius anchor g_d(D) = 1/2 ||D - D*||_F^2.
inline double data_regularizer(const Matrix& d, const Matrix& anchor) {
  if (d.rows() != anchor.rows() || d.cols() != anchor.cols()) {
    throw ValidationError("data_regularizer: shape mismatch");
  }
  return 0.5 * (d - anchor).squaredNorm();
}

inline Matrix data_regularizer_grad(const Matrix& d, const Matrix& anchor) {
  if (d.rows() != anchor.rows() || d.cols() != anchor.cols()) {
    throw ValidationError("data_regularizer_grad: shape mismatch");
  }
  return d - anchor;
}

/// Euclidean gradient of the trace quotient in P: (A - f B) / (tr(P B) + sigma),
/// symmetrized against rounding.
inline Matrix euclidean_grad_P(const Matrix& a, const Matrix& b, const Matrix& p,
                               double sigma, double f_value) {
  const double den = (p * b).trace() + sigma;
  if (!(den > 0.0)) {
    throw NumericalError("euclidean_grad_P: nonpositive denominator");
  }
  Matrix g = (a - f_value * b) / den;
  return 0.5 * (g + g.transpose());
}

namespace detail {

/// Chain matrix M (n x r) of one structure term: the derivative of
/// tr(P term(Phi)) along a code perturbation Delta (r x n) is tr(M Delta).
inline Matrix chain_matrix(const StructureTerm& term, const Matrix& phi, const Matrix& p) {
  Matrix zsym = term.z + term.z.transpose();
  switch (term.kind) {
    case TermKind::Quadratic:
    case TermKind::Ridge:
      return zsym * phi.transpose() * p;
    case TermKind::ScaledIdentity:
      return p.trace() * (zsym * phi.transpose());
  }
  throw ValidationError("chain_matrix: bad kind");
}

} // namespace detail

/// Euclidean gradient of the data term f with respect to the dictionary.
/// Assembled per sample: the chain matrix row is restricted to the support,
/// pushed through K^{-1} (the on-support system of the code Jacobian), and
/// scattered back into the support columns. Samples with empty supports and
/// atoms outside every support contribute nothing.
inline Matrix euclidean_grad_f_D(const Matrix& x, const Matrix& d, const CodeBatch& codes,
                                 const StructurePair& pair, const Matrix& p,
                                 const ElasticNetPrior& prior, double f_value,
                                 double denominator) {
  const Eigen::Index n = x.cols();
  Matrix chain = (detail::chain_matrix(pair.a, codes.codes, p) -
                  f_value * detail::chain_matrix(pair.b, codes.codes, p)) /
                 denominator;
  Matrix grad = Matrix::Zero(d.rows(), d.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& support = codes.supports[static_cast<size_t>(i)];
    const auto k = static_cast<Eigen::Index>(support.size());
    if (k == 0) continue;
    Matrix dl(d.rows(), k);
    Vector phil(k), ml(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const int idx = support[static_cast<size_t>(a)];
      dl.col(a) = d.col(idx);
      phil[a] = codes.codes(idx, i);
      ml[a] = chain(i, idx);
    }
    Matrix kk = dl.transpose() * dl + 2.0 * prior.lambda2 * Matrix::Identity(k, k);
    Vector w = kk.llt().solve(ml);
    Vector residual = x.col(i) - dl * phil;
    Vector dw = dl * w;
    for (Eigen::Index a = 0; a < k; ++a) {
      const int idx = support[static_cast<size_t>(a)];
      grad.col(idx) += residual * w[a] - dw * phil[a];
    }
  }
  return grad;
}

/// Everything the optimizer needs at one point: codes, materialized (A, B),
/// and the objective report.
struct EvalState {
  CodeBatch codes;
  Matrix a;
  Matrix b;
  ObjectiveReport report;
};

/// Evaluates J(D, P), recomputing sparse codes unless a frozen batch is
/// supplied (used when the dictionary is held fixed).
inline EvalState evaluate_state(const Matrix& x, const Matrix& d, const Matrix& p,
                                const StructurePair& pair, const ElasticNetPrior& prior,
                                const SparLowParams& params,
                                const EncodeOptions& opts = {},
                                const CodeBatch* frozen_codes = nullptr) {
  params.validate();
  EvalState state;
  state.codes = frozen_codes != nullptr ? *frozen_codes : batch_encode(x, d, prior, opts);
  auto [a, b] = evaluate_pair(pair, state.codes.codes);
  state.a = std::move(a);
  state.b = std::move(b);
  ObjectiveReport& rep = state.report;
  rep.numerator = (p * state.a).trace();
  rep.denominator = (p * state.b).trace() + params.sigma;
  if (!(rep.denominator > 0.0)) {
    throw NumericalError("evaluate_state: nonpositive trace-quotient denominator " +
                         std::to_string(rep.denominator));
  }
  rep.f_value = rep.numerator / rep.denominator;
  rep.gc_value = params.mu1 != 0.0 ? coherence_barrier(d) : 0.0;
  rep.gd_value = params.anchor.has_value()
                     ? data_regularizer(d, params.anchor->matrix())
                     : 0.0;
  rep.J_value = rep.f_value - params.mu1 * rep.gc_value - params.mu2 * rep.gd_value;
  return state;
}

inline ObjectiveReport evaluate_J(const Matrix& x, const Matrix& d, const Matrix& p,
                                  const StructurePair& pair, const ElasticNetPrior& prior,
                                  const SparLowParams& params,
                                  const EncodeOptions& opts = {}) {
  return evaluate_state(x, d, p, pair, prior, params, opts).report;
}

inline ObjectiveReport evaluate_J(const Matrix& x, const Dictionary& d, const Projector& p,
                                  const StructurePair& pair, const ElasticNetPrior& prior,
                                  const SparLowParams& params,
                                  const EncodeOptions& opts = {}) {
  return evaluate_J(x, d.matrix(), p.matrix(), pair, prior, params, opts);
}

/// Full Euclidean gradient of J in the dictionary:
/// grad f - mu1 grad g_c - mu2 grad g_d.
inline Matrix euclidean_grad_D(const Matrix& x, const Matrix& d, const StructurePair& pair,
                               const Matrix& p, const ElasticNetPrior& prior,
                               const SparLowParams& params, const EvalState& state) {
  Matrix grad = euclidean_grad_f_D(x, d, state.codes, pair, p, prior,
                                   state.report.f_value, state.report.denominator);
  if (params.mu1 != 0.0) grad -= params.mu1 * coherence_barrier_grad(d);
  if (params.mu2 != 0.0) grad -= params.mu2 * data_regularizer_grad(d, params.anchor->matrix());
  return grad;
}

/// Riemannian gradient on the product manifold from the Euclidean gradients.
inline TangentPair riemannian_grad(const Dictionary& d, const Projector& p,
                                   const Matrix& grad_d_eucl, const Matrix& grad_p_eucl) {
  return {project_tangent_sphere(d, grad_d_eucl),
          project_tangent_grassmann(p, grad_p_eucl)};
}

} // namespace sparlow
