#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sparlow/errors.hpp"
#include "sparlow/manifold.hpp"
#include "sparlow/sparse.hpp"

namespace sparlow {

enum class Variant { pca, lle, laplacian, lda, mfa, mvr, sda, slap, smvr };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::pca: return "pca";
    case Variant::lle: return "lle";
    case Variant::laplacian: return "lap";
    case Variant::lda: return "lda";
    case Variant::mfa: return "mfa";
    case Variant::mvr: return "mvr";
    case Variant::sda: return "sda";
    case Variant::slap: return "slap";
    case Variant::smvr: return "smvr";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "pca") return Variant::pca;
  if (name == "lle") return Variant::lle;
  if (name == "lap" || name == "laplacian") return Variant::laplacian;
  if (name == "lda") return Variant::lda;
  if (name == "mfa") return Variant::mfa;
  if (name == "mvr") return Variant::mvr;
  if (name == "sda") return Variant::sda;
  if (name == "slap") return Variant::slap;
  if (name == "smvr") return Variant::smvr;
  throw ValidationError("unknown variant '" + name + "'");
}

inline bool variant_needs_labels(Variant v) {
  return v != Variant::pca && v != Variant::lle && v != Variant::laplacian;
}

inline bool variant_semisupervised(Variant v) {
  return v == Variant::sda || v == Variant::slap || v == Variant::smvr;
}

/// Neighborhoods for MFA and SLap are measured between initial sparse codes;
/// LLE/Laplacian neighborhoods live in the raw data space.
inline bool variant_graphs_on_codes(Variant v) {
  return v == Variant::mfa || v == Variant::slap;
}

/// Per-sample class labels, -1 marking unlabeled, labeled entries in 1..c.
struct LabelSet {
  std::vector<int> labels;
  int num_classes = 0;

  static LabelSet fromLabels(std::vector<int> labels) {
    int c = 0;
    for (int v : labels) {
      if (v == 0 || v < -1) {
        throw ValidationError("LabelSet: labels must be -1 (unlabeled) or in 1..c, got " +
                              std::to_string(v));
      }
      c = std::max(c, v);
    }
    std::vector<bool> seen(static_cast<size_t>(c) + 1, false);
    for (int v : labels) {
      if (v > 0) seen[static_cast<size_t>(v)] = true;
    }
    for (int k = 1; k <= c; ++k) {
      if (!seen[static_cast<size_t>(k)]) {
        throw ValidationError("LabelSet: class " + std::to_string(k) +
                              " is empty; labels must cover 1..c");
      }
    }
    return {std::move(labels), c};
  }

  std::vector<int> labeled_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] > 0) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  bool fully_labeled() const {
    return std::all_of(labels.begin(), labels.end(), [](int v) { return v > 0; });
  }
};

/// Variant selector plus every graph/label hyperparameter. Unused fields are
/// ignored by variants that do not read them.
struct GraphSpec {
  Variant variant = Variant::pca;
  int knn = 5;
  double heat_t = 0.0; // <= 0 selects the scale-free default
  int k1 = 3;
  int k2 = 5;
  double alpha = 0.1;
  double alpha1 = 0.1;
  double alpha2 = 0.01;
  double mu_mvr = 1.0;
  double rho1 = 1.0;
  double rho2 = 0.1;
  std::optional<Matrix> targets; // MVR: d x n; SMVR: d x n_l (labeled order)
};

/// One side of a structure pair. Evaluation at a code batch Phi (r x n):
///   Quadratic:      Phi Z Phi^T
///   ScaledIdentity: tr(Phi Z Phi^T) I_r
///   Ridge:          Phi Z Phi^T + ridge_const I_r
enum class TermKind { Quadratic, ScaledIdentity, Ridge };

struct StructureTerm {
  TermKind kind = TermKind::Quadratic;
  Matrix z;
  double ridge_const = 0.0;
};

/// Generators for the numerator/denominator matrices of the trace quotient.
/// The stored Z matrices are frozen at construction; the optimizer never
/// rebuilds neighborhoods.
struct StructurePair {
  StructureTerm a;
  StructureTerm b;
  Eigen::Index n = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void check_denominator_psd(const Matrix& z, const char* who) {
  Matrix sym = symmetrized(z);
  if (!sym.allFinite()) throw ValidationError(std::string(who) + ": non-finite structure matrix");
  SymmetricEig eig = symmetric_eig(sym);
  if (eig.values.minCoeff() < -1e-10) {
    throw ValidationError(std::string(who) +
                          ": denominator structure matrix is not positive semidefinite (min eig " +
                          std::to_string(eig.values.minCoeff()) + ")");
  }
}

inline StructurePair make_pair(StructureTerm a, StructureTerm b, Eigen::Index n,
                               const char* who) {
  if (!a.z.allFinite()) throw ValidationError(std::string(who) + ": non-finite numerator matrix");
  check_denominator_psd(b.z, who);
  if (b.ridge_const < 0.0) throw ValidationError(std::string(who) + ": negative ridge constant");
  StructurePair pair;
  pair.a = std::move(a);
  pair.b = std::move(b);
  pair.n = n;
  return pair;
}

inline Matrix pairwise_sq_dists(const Matrix& pts) {
  const Eigen::Index n = pts.cols();
  Vector sq = pts.colwise().squaredNorm();
  Matrix d = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
             2.0 * (pts.transpose() * pts);
  return d.cwiseMax(0.0);
}

/// Indices of the k nearest pool members to point `i` (self excluded by the
/// caller keeping i out of the pool); distance ties break by ascending index.
inline std::vector<int> k_nearest(const Matrix& sq_dists, int i,
                                  const std::vector<int>& pool, int k) {
  std::vector<int> order = pool;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = sq_dists(i, a), db = sq_dists(i, b);
    if (da != db) return da < db;
    return a < b;
  });
  order.resize(static_cast<size_t>(std::min<int>(k, static_cast<int>(order.size()))));
  return order;
}

/// Per-class lists of positions into `subset` (ascending class id, stable).
inline std::vector<std::vector<int>> class_partition(const LabelSet& labels,
                                                     const std::vector<int>& subset) {
  int c = 0;
  for (int i : subset) c = std::max(c, labels.labels[static_cast<size_t>(i)]);
  std::vector<std::vector<int>> classes(static_cast<size_t>(c));
  for (size_t pos = 0; pos < subset.size(); ++pos) {
    const int lab = labels.labels[static_cast<size_t>(subset[pos])];
    if (lab <= 0) throw ValidationError("class_partition: unlabeled sample in labeled subset");
    classes[static_cast<size_t>(lab - 1)].push_back(static_cast<int>(pos));
  }
  return classes;
}

/// Within-class scatter generator: block-diagonal centering matrices, laid
/// out on the given index sets of an nl x nl matrix.
inline Matrix lda_within(const std::vector<std::vector<int>>& classes, Eigen::Index nl) {
  Matrix lw = Matrix::Zero(nl, nl);
  for (const auto& cls : classes) {
    const double ni = static_cast<double>(cls.size());
    if (cls.empty()) continue;
    for (int a : cls) {
      for (int b : cls) lw(a, b) -= 1.0 / ni;
      lw(a, a) += 1.0;
    }
  }
  return lw;
}

/// Between-class scatter generator L^b = C^b Pi_c (C^b)^T with
/// C^b = Bdiag(1_{n_i}/sqrt(n_i)).
inline Matrix lda_between(const std::vector<std::vector<int>>& classes, Eigen::Index nl) {
  const double c = static_cast<double>(classes.size());
  Matrix lb = Matrix::Zero(nl, nl);
  for (size_t ci = 0; ci < classes.size(); ++ci) {
    for (size_t cj = 0; cj < classes.size(); ++cj) {
      if (classes[ci].empty() || classes[cj].empty()) continue;
      const double val = ((ci == cj ? 1.0 : 0.0) - 1.0 / c) /
                         std::sqrt(static_cast<double>(classes[ci].size()) *
                                   static_cast<double>(classes[cj].size()));
      for (int a : classes[ci]) {
        for (int b : classes[cj]) lb(a, b) = val;
      }
    }
  }
  return lb;
}

/// MFA Laplacians on a set of points (code columns): L = Y - Z with the
/// or-symmetrized 0/1 kNN adjacency over same-label (k1) and different-label
/// (k2) pools. k1 is clamped per class to class size - 1.
inline std::pair<Matrix, Matrix> mfa_laplacians(const Matrix& pts, const LabelSet& labels,
                                                const std::vector<int>& subset, int k1,
                                                int k2, std::vector<std::string>* warnings) {
  const auto nl = static_cast<Eigen::Index>(subset.size());
  Matrix pts_l(pts.rows(), nl);
  for (Eigen::Index a = 0; a < nl; ++a) pts_l.col(a) = pts.col(subset[static_cast<size_t>(a)]);
  Matrix sq = pairwise_sq_dists(pts_l);

  Matrix zp = Matrix::Zero(nl, nl), zm = Matrix::Zero(nl, nl);
  bool clamped = false;
  for (Eigen::Index i = 0; i < nl; ++i) {
    const int lab_i = labels.labels[static_cast<size_t>(subset[static_cast<size_t>(i)])];
    std::vector<int> same, diff;
    for (Eigen::Index j = 0; j < nl; ++j) {
      if (j == i) continue;
      const int lab_j = labels.labels[static_cast<size_t>(subset[static_cast<size_t>(j)])];
      (lab_j == lab_i ? same : diff).push_back(static_cast<int>(j));
    }
    if (static_cast<int>(same.size()) < k1) clamped = true;
    for (int j : k_nearest(sq, static_cast<int>(i), same, k1)) {
      zp(i, j) = 1.0;
      zp(j, i) = 1.0;
    }
    for (int j : k_nearest(sq, static_cast<int>(i), diff, k2)) {
      zm(i, j) = 1.0;
      zm(j, i) = 1.0;
    }
  }
  if (clamped && warnings != nullptr) {
    warnings->push_back("mfa: k1 clamped to class size - 1 for at least one class");
  }
  Matrix lp = Matrix(zp.rowwise().sum().asDiagonal()) - zp;
  Matrix lm = Matrix(zm.rowwise().sum().asDiagonal()) - zm;
  return {std::move(lm), std::move(lp)};
}

/// Zero-padded embedding of an nl x nl block into n x n at positions `idx`.
inline Matrix scatter_block(const Matrix& block, const std::vector<int>& idx,
                            Eigen::Index n) {
  Matrix out = Matrix::Zero(n, n);
  for (size_t a = 0; a < idx.size(); ++a) {
    for (size_t b = 0; b < idx.size(); ++b) {
      out(idx[a], idx[b]) = block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

/// One-hot c x n label coding: row j marks membership of class j.
inline Matrix one_hot_targets(const LabelSet& labels, const std::vector<int>& subset) {
  Matrix z = Matrix::Zero(labels.num_classes, static_cast<Eigen::Index>(subset.size()));
  for (size_t a = 0; a < subset.size(); ++a) {
    const int lab = labels.labels[static_cast<size_t>(subset[a])];
    if (lab <= 0) throw ValidationError("one_hot_targets: unlabeled sample");
    z(lab - 1, static_cast<Eigen::Index>(a)) = 1.0;
  }
  return z;
}

} // namespace detail

/// Centering matrix I_k - (1/k) 1 1^T.
inline Matrix centering_matrix(int k) {
  if (k < 1) throw ValidationError("centering_matrix: k must be >= 1");
  return Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
}

/// Heat-kernel kNN graph: symmetric weights on the or-symmetrized kNN
/// adjacency, zero diagonal. heat_t <= 0 picks the mean squared distance
/// over adjacent pairs.
struct HeatGraph {
  Matrix z;       // n x n symmetric weights, zero diagonal
  Vector degrees; // row sums
  double heat_t = 0.0;

  Matrix laplacian() const { return Matrix(degrees.asDiagonal()) - z; }
};

namespace detail {

/// Or-symmetrized 0/1 kNN adjacency with zero diagonal.
inline Matrix knn_adjacency(const Matrix& sq, int knn) {
  const Eigen::Index n = sq.rows();
  Matrix adj = Matrix::Zero(n, n);
  std::vector<int> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    pool.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) pool.push_back(static_cast<int>(j));
    }
    for (int j : k_nearest(sq, static_cast<int>(i), pool, knn)) {
      adj(i, j) = 1.0;
      adj(j, i) = 1.0;
    }
  }
  return adj;
}

/// Scale-free heat default: mean squared distance over adjacent pairs.
inline double default_heat_scale(const Matrix& adj, const Matrix& sq) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < adj.cols(); ++j) {
      if (adj(i, j) > 0.0) {
        sum += sq(i, j);
        ++count;
      }
    }
  }
  return count > 0 && sum > 0.0 ? sum / count : 1.0;
}

inline HeatGraph heat_graph_impl(const Matrix& pts, int knn, double heat_t,
                                 bool nonlocal, const char* who) {
  const Eigen::Index n = pts.cols();
  if (knn < 1 || knn >= n) throw ValidationError(std::string(who) + ": need 1 <= knn < n");
  Matrix sq = pairwise_sq_dists(pts);
  Matrix adj = knn_adjacency(sq, knn);
  if (heat_t <= 0.0) heat_t = default_heat_scale(adj, sq);
  HeatGraph g;
  g.heat_t = heat_t;
  Eigen::ArrayXXd mask = adj.array();
  if (nonlocal) mask = 1.0 - mask;
  g.z = (mask * (-sq.array() / heat_t).exp()).matrix();
  g.z.diagonal().setZero();
  g.degrees = g.z.rowwise().sum();
  return g;
}

} // namespace detail

inline HeatGraph heat_knn_graph(const Matrix& pts, int knn, double heat_t) {
  return detail::heat_graph_impl(pts, knn, heat_t, false, "heat_knn_graph");
}

/// Nonlocal companion of heat_knn_graph: heat weights on the complement of
/// the kNN adjacency (the non-adjacent pairs), zero on adjacent pairs and the
/// diagonal. The heat scale defaults to the same local mean as the adjacency.
inline HeatGraph nonlocal_heat_graph(const Matrix& pts, int knn, double heat_t) {
  return detail::heat_graph_impl(pts, knn, heat_t, true, "nonlocal_heat_graph");
}

/// PCA pair: A = Phi Pi_n Phi^T, B = tr(Phi Pi_n Phi^T) I_r.
inline StructurePair build_pca(int n) {
  if (n < 2) throw ValidationError("build_pca: need n >= 2");
  Matrix pi = centering_matrix(n);
  return detail::make_pair({TermKind::Quadratic, pi, 0.0},
                           {TermKind::ScaledIdentity, pi, 0.0}, n, "build_pca");
}

/// Barycentric reconstruction weights: row i carries the constrained
/// least-squares fit of x_i from its knn nearest neighbors, rows sum to 1.
inline Matrix lle_weights(const Matrix& x, int knn) {
  const Eigen::Index n = x.cols();
  if (knn < 1 || knn >= n) throw ValidationError("lle_weights: need 1 <= knn < n");
  Matrix sq = detail::pairwise_sq_dists(x);
  Matrix w = Matrix::Zero(n, n);
  std::vector<int> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    pool.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) pool.push_back(static_cast<int>(j));
    }
    std::vector<int> nbrs = detail::k_nearest(sq, static_cast<int>(i), pool, knn);
    const auto k = static_cast<Eigen::Index>(nbrs.size());
    Matrix diffs(x.rows(), k);
    for (Eigen::Index a = 0; a < k; ++a) {
      diffs.col(a) = x.col(i) - x.col(nbrs[static_cast<size_t>(a)]);
    }
    Matrix gram = diffs.transpose() * diffs;
    // knn above the intrinsic dimension makes the local Gram singular
    gram += (1e-6 * gram.trace() + 1e-12) * Matrix::Identity(k, k);
    Vector wi = gram.ldlt().solve(Vector::Ones(k));
    const double total = wi.sum();
    if (std::abs(total) < 1e-12) {
      wi = Vector::Constant(k, 1.0 / static_cast<double>(k));
    } else {
      wi /= total;
    }
    for (Eigen::Index a = 0; a < k; ++a) w(i, nbrs[static_cast<size_t>(a)]) = wi[a];
  }
  return w;
}

/// LLE pair: Z = (I - W)^T (I - W); A quadratic, B its trace form.
inline StructurePair build_lle(const Matrix& x, int knn) {
  const Eigen::Index n = x.cols();
  Matrix w = lle_weights(x, knn);
  Matrix iw = Matrix::Identity(n, n) - w;
  Matrix z = iw.transpose() * iw;
  return detail::make_pair({TermKind::Quadratic, z, 0.0},
                           {TermKind::ScaledIdentity, z, 0.0}, n, "build_lle");
}

/// Laplacian pair: A uses the heat weights Z, B the degree diagonal Y.
inline StructurePair build_laplacian(const Matrix& x, int knn, double heat_t) {
  HeatGraph g = heat_knn_graph(x, knn, heat_t);
  Matrix y = Matrix(g.degrees.asDiagonal());
  return detail::make_pair({TermKind::Quadratic, g.z, 0.0},
                           {TermKind::Quadratic, std::move(y), 0.0}, x.cols(),
                           "build_laplacian");
}

/// LDA pair: A carries the between-class generator, B the within-class one.
inline StructurePair build_lda(const LabelSet& labels) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (!labels.fully_labeled()) throw ValidationError("build_lda: all samples must be labeled");
  if (labels.num_classes < 2) throw ValidationError("build_lda: need at least 2 classes");
  std::vector<int> all(labels.labels.size());
  std::iota(all.begin(), all.end(), 0);
  auto classes = detail::class_partition(labels, all);
  return detail::make_pair({TermKind::Quadratic, detail::lda_between(classes, n), 0.0},
                           {TermKind::Quadratic, detail::lda_within(classes, n), 0.0}, n,
                           "build_lda");
}

/// MFA pair from initial codes: A = Phi L^- Phi^T (different-label margins),
/// B = Phi L^+ Phi^T (same-label locality).
inline StructurePair build_mfa(const Matrix& codes0, const LabelSet& labels, int k1,
                               int k2) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (codes0.cols() != n) throw ValidationError("build_mfa: codes/labels size mismatch");
  if (!labels.fully_labeled()) throw ValidationError("build_mfa: all samples must be labeled");
  if (labels.num_classes < 2) throw ValidationError("build_mfa: need at least 2 classes");
  if (k1 < 1 || k2 < 1) throw ValidationError("build_mfa: need k1, k2 >= 1");
  if (k2 >= n) throw ValidationError("build_mfa: need k2 < n");
  std::vector<int> all(labels.labels.size());
  std::iota(all.begin(), all.end(), 0);
  size_t max_class = 0;
  for (const auto& cls : detail::class_partition(labels, all)) {
    max_class = std::max(max_class, cls.size());
  }
  if (k1 >= static_cast<int>(max_class)) {
    throw ValidationError("build_mfa: k1 must be below the largest class size");
  }
  std::vector<std::string> warnings;
  auto [lm, lp] = detail::mfa_laplacians(codes0, labels, all, k1, k2, &warnings);
  StructurePair pair = detail::make_pair({TermKind::Quadratic, std::move(lm), 0.0},
                                         {TermKind::Quadratic, std::move(lp), 0.0}, n,
                                         "build_mfa");
  pair.warnings = std::move(warnings);
  return pair;
}

/// MVR pair: A = -Phi Z^T Z Phi^T against the ridge B = Phi Phi^T + mu I.
inline StructurePair build_mvr(const LabelSet& labels,
                               const std::optional<Matrix>& targets, double mu) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (mu < 0.0) throw ValidationError("build_mvr: mu must be >= 0");
  Matrix z;
  if (targets.has_value()) {
    if (targets->cols() != n) throw ValidationError("build_mvr: targets/labels size mismatch");
    z = *targets;
  } else {
    if (!labels.fully_labeled()) throw ValidationError("build_mvr: all samples must be labeled");
    std::vector<int> all(labels.labels.size());
    std::iota(all.begin(), all.end(), 0);
    z = detail::one_hot_targets(labels, all);
  }
  Matrix neg = -(z.transpose() * z);
  return detail::make_pair({TermKind::Quadratic, std::move(neg), 0.0},
                           {TermKind::Ridge, Matrix::Identity(n, n), mu}, n, "build_mvr");
}

/// Semi-supervised LDA pair: zero-padded LDA blocks over the labeled samples
/// plus alpha times the global graph Laplacian in the denominator.
inline StructurePair build_sda(const LabelSet& labels, const HeatGraph& graph,
                               double alpha) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (graph.z.rows() != n) throw ValidationError("build_sda: graph/labels size mismatch");
  if (alpha < 0.0) throw ValidationError("build_sda: alpha must be >= 0");
  std::vector<int> lab = labels.labeled_indices();
  if (lab.empty()) throw ValidationError("build_sda: no labeled samples");
  auto classes = detail::class_partition(labels, lab);
  int nonempty = 0;
  for (const auto& cls : classes) nonempty += cls.empty() ? 0 : 1;
  if (nonempty < 2) throw ValidationError("build_sda: need at least 2 labeled classes");
  const auto nl = static_cast<Eigen::Index>(lab.size());
  Matrix lb = detail::lda_between(classes, nl);
  Matrix lt = detail::lda_within(classes, nl) + lb;
  Matrix a = detail::scatter_block(lb, lab, n);
  Matrix b = detail::scatter_block(lt, lab, n) + alpha * graph.laplacian();
  return detail::make_pair({TermKind::Quadratic, std::move(a), 0.0},
                           {TermKind::Quadratic, std::move(b), 0.0}, n, "build_sda");
}

/// Semi-supervised Laplacian pair: zero-padded MFA Laplacians over the
/// labeled codes plus the nonlocal graph Laplacian on all codes.
inline StructurePair build_slap(const Matrix& codes0, const LabelSet& labels, int k1,
                                int k2, int knn, double heat_t, double alpha1,
                                double alpha2) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (codes0.cols() != n) throw ValidationError("build_slap: codes/labels size mismatch");
  if (alpha1 < 0.0 || alpha2 < 0.0) throw ValidationError("build_slap: alphas must be >= 0");
  std::vector<int> lab = labels.labeled_indices();
  if (lab.empty()) throw ValidationError("build_slap: no labeled samples");
  if (k1 < 1 || k2 < 1) throw ValidationError("build_slap: need k1, k2 >= 1");
  if (k2 >= static_cast<int>(lab.size())) {
    throw ValidationError("build_slap: need k2 below the labeled sample count");
  }
  std::vector<std::string> warnings;
  auto [lm, lp] = detail::mfa_laplacians(codes0, labels, lab, k1, k2, &warnings);
  Matrix ln = nonlocal_heat_graph(codes0, knn, heat_t).laplacian();
  Matrix a = detail::scatter_block(lm, lab, n) + alpha1 * ln;
  Matrix b = detail::scatter_block(lp, lab, n) + alpha2 * ln;
  StructurePair pair = detail::make_pair({TermKind::Quadratic, std::move(a), 0.0},
                                         {TermKind::Quadratic, std::move(b), 0.0}, n,
                                         "build_slap");
  pair.warnings = std::move(warnings);
  return pair;
}

/// Semi-supervised MVR pair: ridge regression on the labeled block with a
/// manifold penalty rho2 Phi L Phi^T from the global graph.
inline StructurePair build_smvr(const LabelSet& labels,
                                const std::optional<Matrix>& targets_l,
                                const HeatGraph& graph, double rho1, double rho2) {
  const auto n = static_cast<Eigen::Index>(labels.labels.size());
  if (graph.z.rows() != n) throw ValidationError("build_smvr: graph/labels size mismatch");
  if (rho1 < 0.0 || rho2 < 0.0) throw ValidationError("build_smvr: rhos must be >= 0");
  std::vector<int> lab = labels.labeled_indices();
  if (lab.empty()) throw ValidationError("build_smvr: no labeled samples");
  Matrix zl;
  if (targets_l.has_value()) {
    if (targets_l->cols() != static_cast<Eigen::Index>(lab.size())) {
      throw ValidationError("build_smvr: targets must have one column per labeled sample");
    }
    zl = *targets_l;
  } else {
    zl = detail::one_hot_targets(labels, lab);
  }
  Matrix a = detail::scatter_block(Matrix(-(zl.transpose() * zl)), lab, n);
  Matrix selector = Matrix::Zero(n, n);
  for (int i : lab) selector(i, i) = 1.0;
  Matrix bz = selector + rho2 * graph.laplacian();
  return detail::make_pair({TermKind::Quadratic, std::move(a), 0.0},
                           {TermKind::Ridge, std::move(bz), rho1}, n, "build_smvr");
}

namespace detail {

inline Matrix evaluate_term(const StructureTerm& term, const Matrix& phi) {
  const Eigen::Index r = phi.rows();
  switch (term.kind) {
    case TermKind::Quadratic: {
      Matrix a = phi * term.z * phi.transpose();
      return 0.5 * (a + a.transpose());
    }
    case TermKind::ScaledIdentity:
      return (phi * term.z * phi.transpose()).trace() * Matrix::Identity(r, r);
    case TermKind::Ridge: {
      Matrix a = phi * term.z * phi.transpose();
      a = symmetrized(a);
      a += term.ridge_const * Matrix::Identity(r, r);
      return a;
    }
  }
  throw ValidationError("evaluate_term: bad kind");
}

} // namespace detail

/// Materializes (A, B) = (A(Phi), B(Phi)), symmetrized on output.
inline std::pair<Matrix, Matrix> evaluate_pair(const StructurePair& pair,
                                               const Matrix& phi) {
  if (phi.cols() != pair.n) {
    throw ValidationError("evaluate_pair: Phi has " + std::to_string(phi.cols()) +
                          " columns, structure pair expects " + std::to_string(pair.n));
  }
  return {detail::evaluate_term(pair.a, phi), detail::evaluate_term(pair.b, phi)};
}

/// Builds the structure pair for a variant from frozen inputs: raw data for
/// LLE/Laplacian neighborhoods and the global graph, initial codes for
/// MFA/SLap neighborhoods, labels and targets where the variant uses them.
inline StructurePair build_structure_pair(const GraphSpec& spec, const Matrix& x,
                                          const Matrix& codes0, const LabelSet* labels) {
  if (variant_needs_labels(spec.variant) && labels == nullptr) {
    throw ValidationError(std::string("variant ") + variant_name(spec.variant) +
                          " requires labels");
  }
  switch (spec.variant) {
    case Variant::pca:
      return build_pca(static_cast<int>(x.cols()));
    case Variant::lle:
      return build_lle(x, spec.knn);
    case Variant::laplacian:
      return build_laplacian(x, spec.knn, spec.heat_t);
    case Variant::lda:
      return build_lda(*labels);
    case Variant::mfa:
      return build_mfa(codes0, *labels, spec.k1, spec.k2);
    case Variant::mvr:
      return build_mvr(*labels, spec.targets, spec.mu_mvr);
    case Variant::sda:
      return build_sda(*labels, heat_knn_graph(x, spec.knn, spec.heat_t), spec.alpha);
    case Variant::slap:
      return build_slap(codes0, *labels, spec.k1, spec.k2, spec.knn, spec.heat_t,
                        spec.alpha1, spec.alpha2);
    case Variant::smvr:
      return build_smvr(*labels, spec.targets, heat_knn_graph(x, spec.knn, spec.heat_t),
                        spec.rho1, spec.rho2);
  }
  throw ValidationError("build_structure_pair: bad variant");
}

} // namespace sparlow
