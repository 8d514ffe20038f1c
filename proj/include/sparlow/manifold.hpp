#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sparlow/errors.hpp"

namespace sparlow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace tol {
inline constexpr double kUnitNorm = 1e-12;
inline constexpr double kSymmetry = 1e-12;
inline constexpr double kIdempotency = 1e-10;
inline constexpr double kTrace = 1e-10;
inline constexpr double kSingularStep = 1e-14;
} // namespace tol

/// (M + M^T)/2 evaluated into a fresh matrix; safe to assign back to M.
inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

struct SymmetricEig {
  Vector values; // ascending
  Matrix vectors;
};

/// Eigendecomposition of a symmetric matrix. The QL iteration inside
/// SelfAdjointEigenSolver occasionally reports no convergence on exactly
/// clustered spectra (projectors have eigenvalues {0, 1}); a Jacobi SVD with
/// Rayleigh-quotient signs covers that case.
inline SymmetricEig symmetric_eig(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() == Eigen::Success) {
    return {eig.eigenvalues(), eig.eigenvectors()};
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  const Eigen::Index n = m.rows();
  Vector vals(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals[i] = svd.matrixU().col(i).dot(m * svd.matrixU().col(i));
  }
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return vals[a] < vals[b]; });
  SymmetricEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = vals[order[static_cast<size_t>(i)]];
    out.vectors.col(i) = svd.matrixU().col(order[static_cast<size_t>(i)]);
  }
  return out;
}

/// An m-by-r matrix whose columns are unit-norm atoms; a point on the
/// product-of-spheres (oblique) manifold.
class Dictionary {
public:
  explicit Dictionary(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 2 || entries_.cols() < 1) {
      throw ValidationError("Dictionary: need m >= 2 and r >= 1, got " +
                            std::to_string(entries_.rows()) + "x" +
                            std::to_string(entries_.cols()));
    }
    if (!entries_.allFinite()) throw ValidationError("Dictionary: non-finite entries");
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      const double n = entries_.col(j).norm();
      if (std::abs(n - 1.0) > tol::kUnitNorm) {
        throw ValidationError("Dictionary: column " + std::to_string(j) +
                              " has norm " + std::to_string(n));
      }
    }
  }

  /// Column-normalizes an arbitrary matrix into a dictionary.
  static Dictionary normalized(Matrix entries) {
    for (Eigen::Index j = 0; j < entries.cols(); ++j) {
      const double n = entries.col(j).norm();
      if (n < tol::kSingularStep) {
        throw ValidationError("Dictionary::normalized: column " +
                              std::to_string(j) + " has zero norm");
      }
      entries.col(j) /= n;
    }
    return Dictionary(std::move(entries));
  }

  const Matrix& matrix() const { return entries_; }
  Eigen::Index dim() const { return entries_.rows(); }
  Eigen::Index atoms() const { return entries_.cols(); }

private:
  Matrix entries_;
};

/// An r-by-r rank-l orthogonal projector P = U U^T; a point on the Grassmann
/// manifold of l-dimensional subspaces of R^r.
class Projector {
public:
  Projector(Matrix entries, int rank) : entries_(std::move(entries)), rank_(rank) {
    const Eigen::Index r = entries_.rows();
    if (r != entries_.cols()) throw ValidationError("Projector: matrix not square");
    if (!entries_.allFinite()) throw ValidationError("Projector: non-finite entries");
    if (rank_ < 1 || rank_ >= r) {
      throw ValidationError("Projector: need 1 <= l < r, got l=" +
                            std::to_string(rank_) + ", r=" + std::to_string(r));
    }
    if ((entries_ - entries_.transpose()).norm() > tol::kSymmetry) {
      throw ValidationError("Projector: not symmetric");
    }
    if ((entries_ * entries_ - entries_).norm() > tol::kIdempotency) {
      throw ValidationError("Projector: not idempotent");
    }
    if (std::abs(entries_.trace() - rank_) > tol::kTrace) {
      throw ValidationError("Projector: trace " + std::to_string(entries_.trace()) +
                            " != rank " + std::to_string(rank_));
    }
  }

  /// Builds U U^T from an orthonormal r-by-l basis U.
  static Projector fromBasis(const Matrix& basis) {
    Matrix p = basis * basis.transpose();
    p = symmetrized(p);
    return Projector(std::move(p), static_cast<int>(basis.cols()));
  }

  const Matrix& matrix() const { return entries_; }
  int rank() const { return rank_; }
  Eigen::Index size() const { return entries_.rows(); }

  /// Snaps back to an exact rank-l projector through the top-l eigenvectors.
  /// Counteracts idempotency drift accumulated by repeated retractions.
  Projector reprojected() const {
    SymmetricEig eig = symmetric_eig(entries_);
    Matrix basis = eig.vectors.rightCols(rank_);
    Matrix p = basis * basis.transpose();
    p = symmetrized(p);
    return Projector(std::move(p), rank_);
  }

private:
  Matrix entries_;
  int rank_;
};

/// A direction on the product manifold: an m-by-r block for the dictionary
/// part and an r-by-r block for the projector part. Tangency is a property
/// of how the pair was produced, not enforced here; CG search directions
/// combine transported vectors that need not stay exactly tangent.
struct TangentPair {
  Matrix dict_dir;
  Matrix proj_dir;

  static TangentPair zero(Eigen::Index m, Eigen::Index r) {
    return {Matrix::Zero(m, r), Matrix::Zero(r, r)};
  }
};

inline TangentPair operator+(const TangentPair& a, const TangentPair& b) {
  return {a.dict_dir + b.dict_dir, a.proj_dir + b.proj_dir};
}

inline TangentPair operator*(double s, const TangentPair& h) {
  return {s * h.dict_dir, s * h.proj_dir};
}

/// Riemannian metric inherited from the ambient Euclidean space:
/// <(D1,P1),(D2,P2)> = tr(D1 D2^T) + tr(P1 P2^T).
inline double product_metric(const TangentPair& a, const TangentPair& b) {
  if (a.dict_dir.rows() != b.dict_dir.rows() || a.dict_dir.cols() != b.dict_dir.cols() ||
      a.proj_dir.rows() != b.proj_dir.rows() || a.proj_dir.cols() != b.proj_dir.cols()) {
    throw ValidationError("product_metric: shape mismatch");
  }
  return a.dict_dir.cwiseProduct(b.dict_dir).sum() +
         a.proj_dir.cwiseProduct(b.proj_dir).sum();
}

inline double product_norm(const TangentPair& h) {
  return std::sqrt(product_metric(h, h));
}

/// Retraction on the unit sphere: (d + t xi) / ||d + t xi||.
inline Vector sphere_retract(const Vector& d, const Vector& xi, double t) {
  Vector v = d + t * xi;
  const double n = v.norm();
  if (n < tol::kSingularStep) {
    throw NumericalError("sphere_retract: step lands at the origin (||d + t*xi|| = " +
                         std::to_string(n) + ")");
  }
  return v / n;
}

/// QR factorization made unique by forcing positive diagonal entries of R.
/// Throws on (numerically) rank-deficient input.
inline std::pair<Matrix, Matrix> unique_qr(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("unique_qr: matrix not square");
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double a = std::abs(r(i, i));
    dmax = std::max(dmax, a);
    dmin = std::min(dmin, a);
  }
  if (dmin <= 0.0 || dmax / dmin >= 1e12) {
    throw NumericalError("unique_qr: input is rank deficient or ill conditioned");
  }
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) = -r.row(i);
      q.col(i) = -q.col(i);
    }
  }
  return {std::move(q), std::move(r)};
}

namespace detail {
/// zeta(t) = qf(I + t(Psi P - P Psi)), the orthogonal factor driving both the
/// Grassmann retraction and its vector transport.
inline Matrix grassmann_curve_factor(const Matrix& p, const Matrix& psi, double t) {
  const Eigen::Index r = p.rows();
  Matrix commutator = psi * p - p * psi;
  return unique_qr(Matrix::Identity(r, r) + t * commutator).first;
}
} // namespace detail

/// Retraction on the Grassmannian: zeta(t) P zeta(t)^T.
inline Projector grassmann_retract(const Projector& p, const Matrix& psi, double t) {
  Matrix zeta = detail::grassmann_curve_factor(p.matrix(), psi, t);
  Matrix out = zeta * p.matrix() * zeta.transpose();
  out = symmetrized(out);
  return Projector(std::move(out), p.rank());
}

/// Projects an ambient m-by-r matrix onto the tangent space of the oblique
/// manifold at D: G - D ddiag(D^T G).
inline Matrix project_tangent_sphere(const Dictionary& d, const Matrix& g) {
  if (g.rows() != d.dim() || g.cols() != d.atoms()) {
    throw ValidationError("project_tangent_sphere: shape mismatch");
  }
  const Matrix& dm = d.matrix();
  Vector diag = (dm.cwiseProduct(g)).colwise().sum();
  return g - dm * diag.asDiagonal();
}

/// Projects an ambient r-by-r matrix onto the tangent space of the Grassmann
/// manifold at P: P G + G P - 2 P G P. Non-symmetric inputs are symmetrized
/// first; analytic gradients are symmetric but rounding accumulates skew.
inline Matrix project_tangent_grassmann(const Projector& p, const Matrix& g) {
  if (g.rows() != p.size() || g.cols() != p.size()) {
    throw ValidationError("project_tangent_grassmann: shape mismatch");
  }
  Matrix sym = symmetrized(g);
  const Matrix& pm = p.matrix();
  Matrix ps = pm * sym;
  return ps + ps.transpose() - 2.0 * (pm * sym * pm);
}

/// Vector transport on the sphere along the retraction curve:
///   (1/||v||) (I + v v^T / ||v||^2) xi_move,  v = d + t xi.
inline Vector sphere_transport(const Vector& d, const Vector& xi, double t,
                               const Vector& xi_move) {
  Vector v = d + t * xi;
  const double n2 = v.squaredNorm();
  const double n = std::sqrt(n2);
  if (n < tol::kSingularStep) {
    throw NumericalError("sphere_transport: step lands at the origin");
  }
  return (xi_move + v * (v.dot(xi_move) / n2)) / n;
}

/// Vector transport on the Grassmannian: zeta(t) Psi_move zeta(t)^T.
inline Matrix grassmann_transport(const Projector& p, const Matrix& psi, double t,
                                  const Matrix& psi_move) {
  Matrix zeta = detail::grassmann_curve_factor(p.matrix(), psi, t);
  return zeta * psi_move * zeta.transpose();
}

/// Retraction on the product manifold, column-wise on the dictionary part.
inline std::pair<Dictionary, Projector> product_retract(const Dictionary& d,
                                                        const Projector& p,
                                                        const TangentPair& h,
                                                        double t) {
  Matrix dm = d.matrix();
  for (Eigen::Index j = 0; j < dm.cols(); ++j) {
    dm.col(j) = sphere_retract(dm.col(j), h.dict_dir.col(j), t);
  }
  return {Dictionary(std::move(dm)), grassmann_retract(p, h.proj_dir, t)};
}

/// Vector transport on the product manifold along step t*h.
inline TangentPair product_transport(const Dictionary& d, const Projector& p,
                                     const TangentPair& h, double t,
                                     const TangentPair& moved) {
  Matrix dict_out(d.dim(), d.atoms());
  for (Eigen::Index j = 0; j < d.atoms(); ++j) {
    dict_out.col(j) =
        sphere_transport(d.matrix().col(j), h.dict_dir.col(j), t, moved.dict_dir.col(j));
  }
  return {std::move(dict_out), grassmann_transport(p, h.proj_dir, t, moved.proj_dir)};
}

} // namespace sparlow
