#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sparlow/errors.hpp"
#include "sparlow/graphs.hpp"
#include "sparlow/io.hpp"
#include "sparlow/manifold.hpp"
#include "sparlow/objective.hpp"
#include "sparlow/optimizer.hpp"
#include "sparlow/sparse.hpp"

namespace sparlow {

/// Everything train() needs beyond the dataset.
struct TrainConfig {
  GraphSpec graph;
  ElasticNetPrior prior;
  double sigma = 1e-3;
  double mu1 = 2.5e-4;
  double mu2 = 5e-3;
  int atoms = 0;      // r
  int dim = 0;        // l
  int dict_iters = 10;
  std::uint64_t seed = 0;
  CGConfig cg;
};

/// A trained model: dictionary, projector, and the orthonormal basis U of
/// range(P) used for embedding.
struct Model {
  Dictionary d;
  Projector p;
  Matrix u; // r x l
  ElasticNetPrior prior;
  SparLowParams params;
  GraphSpec graph;

  void validate() const {
    if (u.rows() != p.size() || u.cols() != p.rank()) {
      throw ValidationError("Model: U shape does not match the projector");
    }
    if ((u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm() > 1e-10) {
      throw ValidationError("Model: U is not orthonormal");
    }
    if ((u * u.transpose() - p.matrix()).norm() > 1e-8) {
      throw ValidationError("Model: U U^T does not reproduce P");
    }
  }
};

/// Orthonormal basis of range(P), columns ordered by descending eigenvalue.
/// Sign convention: the entry of largest magnitude in each column is made
/// positive, which pins the representative among the sign choices.
inline Matrix basis_from_projector(const Projector& p) {
  SymmetricEig eig = symmetric_eig(p.matrix());
  const int l = p.rank();
  const Eigen::Index r = p.size();
  Matrix u(r, l);
  for (int j = 0; j < l; ++j) {
    const Eigen::Index src = r - 1 - j; // ascending order
    const double ev = eig.values[src];
    if (std::abs(ev - 1.0) > 1e-6) {
      throw NumericalError("basis_from_projector: eigenvalue " + std::to_string(ev) +
                           " is not close to 1; projector has drifted");
    }
    Vector col = eig.vectors.col(src);
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0.0) col = -col;
    u.col(j) = col;
  }
  return u;
}

/// MOD-style dictionary initialization: seed with r distinct data columns,
/// then alternate sparse coding with the ridge-regularized least-squares
/// update D <- X Phi^T (Phi Phi^T + 1e-8 I)^{-1} and column normalization.
/// Atoms whose update collapses keep their previous value. Reconstruction
/// errors ||X - D Phi||_F, one per alternation, land in `recon_errors`.
inline Dictionary init_dictionary(const Matrix& x, int r, const ElasticNetPrior& prior,
                                  int iters, std::uint64_t seed,
                                  std::vector<double>* recon_errors = nullptr,
                                  const EncodeOptions& opts = {}) {
  prior.validate();
  const Eigen::Index n = x.cols();
  if (r < 1) throw ValidationError("init_dictionary: need r >= 1");
  if (iters < 1) throw ValidationError("init_dictionary: need iters >= 1");

  // representatives of distinct columns, in first-occurrence order
  std::vector<int> distinct;
  for (Eigen::Index j = 0; j < n; ++j) {
    bool dup = false;
    for (int i : distinct) {
      if (x.col(j) == x.col(i)) {
        dup = true;
        break;
      }
    }
    if (!dup) distinct.push_back(static_cast<int>(j));
  }
  if (static_cast<int>(distinct.size()) < r) {
    throw ValidationError("init_dictionary: only " + std::to_string(distinct.size()) +
                          " distinct samples for " + std::to_string(r) + " atoms");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(distinct.begin(), distinct.end(), rng);

  Matrix d(x.rows(), r);
  for (int j = 0; j < r; ++j) d.col(j) = x.col(distinct[static_cast<size_t>(j)]);
  d = Dictionary::normalized(std::move(d)).matrix();

  for (int it = 0; it < iters; ++it) {
    CodeBatch batch = batch_encode(x, d, prior, opts);
    if (recon_errors != nullptr) {
      recon_errors->push_back((x - d * batch.codes).norm());
    }
    Matrix gram = batch.codes * batch.codes.transpose() +
                  1e-8 * Matrix::Identity(r, r);
    Matrix next = gram.ldlt().solve(batch.codes * x.transpose()).transpose();
    for (int j = 0; j < r; ++j) {
      const double nn = next.col(j).norm();
      if (nn > 1e-12) d.col(j) = next.col(j) / nn;
    }
  }
  return Dictionary(std::move(d));
}

/// Concatenation of per-class sub-dictionaries learned from the labeled
/// samples, sized proportionally to class counts with a per-class minimum of
/// one atom. `class_blocks`, when given, receives the per-class atom counts.
inline Dictionary init_dictionary_per_class(const Matrix& x, const LabelSet& labels,
                                            int r, const ElasticNetPrior& prior,
                                            int iters, std::uint64_t seed,
                                            std::vector<int>* class_blocks = nullptr,
                                            const EncodeOptions& opts = {}) {
  std::vector<int> lab = labels.labeled_indices();
  if (lab.empty()) throw ValidationError("init_dictionary_per_class: no labeled samples");
  const int c = labels.num_classes;
  if (r < c) {
    throw ValidationError("init_dictionary_per_class: need at least one atom per class");
  }
  std::vector<std::vector<int>> members(static_cast<size_t>(c));
  for (int i : lab) {
    members[static_cast<size_t>(labels.labels[static_cast<size_t>(i)] - 1)].push_back(i);
  }
  const double nl = static_cast<double>(lab.size());

  // proportional sizes, floor then distribute the remainder by largest
  // fractional part (ties by class id)
  std::vector<int> sizes(static_cast<size_t>(c));
  std::vector<std::pair<double, int>> fracs;
  int assigned = 0;
  for (int k = 0; k < c; ++k) {
    const double share = r * static_cast<double>(members[static_cast<size_t>(k)].size()) / nl;
    int s = std::max(1, static_cast<int>(std::floor(share)));
    sizes[static_cast<size_t>(k)] = s;
    assigned += s;
    fracs.push_back({share - std::floor(share), k});
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t fi = 0; assigned < r; fi = (fi + 1) % fracs.size()) {
    ++sizes[static_cast<size_t>(fracs[fi].second)];
    ++assigned;
  }
  while (assigned > r) { // floors plus minimums can overshoot
    auto it = std::max_element(sizes.begin(), sizes.end());
    if (*it <= 1) throw ValidationError("init_dictionary_per_class: r too small");
    --*it;
    --assigned;
  }

  Matrix d(x.rows(), r);
  int col = 0;
  for (int k = 0; k < c; ++k) {
    const auto& idx = members[static_cast<size_t>(k)];
    Matrix xc(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t a = 0; a < idx.size(); ++a) xc.col(static_cast<Eigen::Index>(a)) = x.col(idx[a]);
    Dictionary sub = init_dictionary(xc, sizes[static_cast<size_t>(k)], prior, iters,
                                     seed + static_cast<std::uint64_t>(k) + 1, nullptr, opts);
    d.middleCols(col, sub.atoms()) = sub.matrix();
    col += static_cast<int>(sub.atoms());
  }
  if (class_blocks != nullptr) *class_blocks = sizes;
  return Dictionary(std::move(d));
}

/// Trace-ratio fixed-point iteration:
///   lambda <- tr(P A) / (tr(P B) + sigma);  P <- top-l eigenspace of A - lambda B,
/// stopping when lambda stalls. The recorded lambda sequence is
/// non-decreasing; a decrease beyond tolerance is a numerical failure.
inline Projector init_projection(const Matrix& a, const Matrix& b, int l, double sigma,
                                 std::vector<double>* lambda_history = nullptr) {
  const Eigen::Index r = a.rows();
  if (a.cols() != r || b.rows() != r || b.cols() != r) {
    throw ValidationError("init_projection: A and B must be square and equally sized");
  }
  if ((a - a.transpose()).norm() > 1e-8 || (b - b.transpose()).norm() > 1e-8) {
    throw ValidationError("init_projection: A and B must be symmetric");
  }
  if (l < 1 || l >= r) throw ValidationError("init_projection: need 1 <= l < r");

  double lambda = 0.0;
  bool have_lambda = false;
  Matrix p;
  for (int it = 0; it < 100; ++it) {
    SymmetricEig eig = symmetric_eig(a - lambda * b);
    Matrix basis = eig.vectors.rightCols(l);
    p = basis * basis.transpose();
    p = symmetrized(p);
    const double den = (p * b).trace() + sigma;
    if (!(den > 0.0)) {
      throw NumericalError("init_projection: nonpositive denominator");
    }
    const double next = (p * a).trace() / den;
    if (lambda_history != nullptr) lambda_history->push_back(next);
    if (have_lambda) {
      if (next < lambda - 1e-10) {
        throw NumericalError("init_projection: trace-ratio value decreased from " +
                             std::to_string(lambda) + " to " + std::to_string(next));
      }
      if (std::abs(next - lambda) <= 1e-10) {
        lambda = next;
        break;
      }
    }
    lambda = next;
    have_lambda = true;
  }
  return Projector(std::move(p), l);
}

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(stage) + ": " + e.what());
  }
}

} // namespace detail

struct TrainResult {
  Model model;
  CGTrace trace;
  ObjectiveReport initial;
  ObjectiveReport final;
};

/// Full training pipeline: dictionary initialization (per class for labeled
/// variants), initial sparse coding, frozen graph construction, trace-ratio
/// projector initialization, then the geometric CG ascent.
inline TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  const Eigen::Index n = dataset.samples();
  const LabelSet* labels = dataset.labels.has_value() ? &*dataset.labels : nullptr;

  detail::run_stage("validate", [&] {
    config.prior.validate();
    if (config.atoms < 2) throw ValidationError("need at least 2 atoms");
    if (config.dim < 1 || config.dim >= config.atoms) {
      throw ValidationError("need 1 <= dim < atoms");
    }
    if (n < 2) throw ValidationError("need at least 2 samples");
    if (variant_needs_labels(config.graph.variant)) {
      if (labels == nullptr) {
        throw ValidationError(std::string("variant ") + variant_name(config.graph.variant) +
                              " requires labels");
      }
      if (static_cast<Eigen::Index>(labels->labels.size()) != n) {
        throw ValidationError("labels length does not match sample count");
      }
      if (!variant_semisupervised(config.graph.variant) && !labels->fully_labeled()) {
        throw ValidationError(std::string("variant ") + variant_name(config.graph.variant) +
                              " requires fully labeled data");
      }
    }
    return 0;
  });

  Dictionary d0 = detail::run_stage("init-dictionary", [&] {
    if (variant_needs_labels(config.graph.variant)) {
      return init_dictionary_per_class(dataset.x, *labels, config.atoms, config.prior,
                                       config.dict_iters, config.seed, nullptr,
                                       config.cg.encode);
    }
    return init_dictionary(dataset.x, config.atoms, config.prior, config.dict_iters,
                           config.seed, nullptr, config.cg.encode);
  });

  CodeBatch codes0 = detail::run_stage("encode", [&] {
    return batch_encode(dataset.x, d0, config.prior, config.cg.encode);
  });

  StructurePair pair = detail::run_stage("graphs", [&] {
    return build_structure_pair(config.graph, dataset.x, codes0.codes, labels);
  });

  Projector p0 = detail::run_stage("init-projection", [&] {
    auto [a, b] = evaluate_pair(pair, codes0.codes);
    return init_projection(a, b, config.dim, config.sigma);
  });

  SparLowParams params;
  params.sigma = config.sigma;
  params.mu1 = config.mu1;
  params.mu2 = config.mu2;
  params.anchor = d0;

  OptimizeResult opt = detail::run_stage("optimize", [&] {
    return optimize(dataset.x, d0, p0, pair, config.prior, params, config.cg);
  });

  return detail::run_stage("finalize", [&] {
    Model model{opt.d, opt.p, basis_from_projector(opt.p), config.prior, params,
                config.graph};
    model.validate();
    TrainResult result{std::move(model), std::move(opt.trace), ObjectiveReport{},
                       ObjectiveReport{}};
    if (!result.trace.records.empty()) {
      result.initial.J_value = result.trace.records.front().j_value;
      result.final.J_value = result.trace.records.back().j_value;
    }
    return result;
  });
}

/// Low-dimensional representation U^T Phi(model.D, X) of new samples.
inline Matrix embed(const Model& model, const Matrix& x_new,
                    const EncodeOptions& opts = {}) {
  if (x_new.rows() != model.d.dim()) {
    throw ValidationError("embed: sample dimension does not match the dictionary");
  }
  CodeBatch batch = batch_encode(x_new, model.d, model.prior, opts);
  return model.u.transpose() * batch.codes;
}

/// Fraction of test samples whose nearest training embedding (Euclidean,
/// ties by ascending training index) carries the same label. Identical sets
/// are compared as distinct sets; there is no self-exclusion.
inline double evaluate_1nn(const Matrix& train_embed, const std::vector<int>& train_labels,
                           const Matrix& test_embed, const std::vector<int>& test_labels) {
  const Eigen::Index ntr = train_embed.cols();
  const Eigen::Index nte = test_embed.cols();
  if (ntr == 0 || nte == 0) throw ValidationError("evaluate_1nn: empty embedding set");
  if (train_embed.rows() != test_embed.rows()) {
    throw ValidationError("evaluate_1nn: embedding dimensions differ");
  }
  if (static_cast<Eigen::Index>(train_labels.size()) != ntr ||
      static_cast<Eigen::Index>(test_labels.size()) != nte) {
    throw ValidationError("evaluate_1nn: label count mismatch");
  }
  Eigen::Index hits = 0;
  for (Eigen::Index j = 0; j < nte; ++j) {
    Eigen::Index best = 0;
    double best_d = (train_embed.col(0) - test_embed.col(j)).squaredNorm();
    for (Eigen::Index i = 1; i < ntr; ++i) {
      const double dist = (train_embed.col(i) - test_embed.col(j)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = i;
      }
    }
    if (train_labels[static_cast<size_t>(best)] == test_labels[static_cast<size_t>(j)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(nte);
}

/// Feature matrix [D u_1, ..., D u_l]: each column visualizes one learned
/// low-dimensional direction in the data space.
inline Matrix feature_matrix(const Model& model) { return model.d.matrix() * model.u; }

inline void export_features(const Model& model, const std::string& path) {
  save_matrix_csv(path, feature_matrix(model));
}

// ---------------------------------------------------------------------------
// model archive

inline constexpr char kModelMagic[16] = {'S', 'P', 'A', 'R', 'L', 'O', 'W', 'M',
                                         'O', 'D', 'E', 'L', 0,   0,   0,   1};

/// Binary model archive: 16-byte magic, then three length-prefixed sections:
/// canonical key=value config text, the dictionary block, and the U block.
/// Matrices round-trip bit exactly.
inline void save_model(const Model& model, const std::string& path) {
  model.validate();
  std::ostringstream cfg;
  cfg << "alpha=" << io_detail::format_double(model.graph.alpha) << '\n'
      << "alpha1=" << io_detail::format_double(model.graph.alpha1) << '\n'
      << "alpha2=" << io_detail::format_double(model.graph.alpha2) << '\n'
      << "dim=" << model.p.rank() << '\n'
      << "heat_t=" << io_detail::format_double(model.graph.heat_t) << '\n'
      << "k1=" << model.graph.k1 << '\n'
      << "k2=" << model.graph.k2 << '\n'
      << "knn=" << model.graph.knn << '\n'
      << "lambda1=" << io_detail::format_double(model.prior.lambda1) << '\n'
      << "lambda2=" << io_detail::format_double(model.prior.lambda2) << '\n'
      << "mu1=" << io_detail::format_double(model.params.mu1) << '\n'
      << "mu2=" << io_detail::format_double(model.params.mu2) << '\n'
      << "mu_mvr=" << io_detail::format_double(model.graph.mu_mvr) << '\n'
      << "rho1=" << io_detail::format_double(model.graph.rho1) << '\n'
      << "rho2=" << io_detail::format_double(model.graph.rho2) << '\n'
      << "sigma=" << io_detail::format_double(model.params.sigma) << '\n'
      << "variant=" << variant_name(model.graph.variant) << '\n';
  const std::string cfg_text = cfg.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kModelMagic, 16);
  io_detail::put_u64(out, cfg_text.size());
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  std::ostringstream dblock, ublock;
  io_detail::put_matrix(dblock, model.d.matrix());
  io_detail::put_matrix(ublock, model.u);
  const std::string dstr = dblock.str(), ustr = ublock.str();
  io_detail::put_u64(out, dstr.size());
  out.write(dstr.data(), static_cast<std::streamsize>(dstr.size()));
  io_detail::put_u64(out, ustr.size());
  out.write(ustr.data(), static_cast<std::streamsize>(ustr.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[16];
  if (!in.read(magic, 16) || std::memcmp(magic, kModelMagic, 16) != 0) {
    throw IoError("'" + path + "' is not a model file (bad magic)");
  }

  const std::uint64_t cfg_len = io_detail::get_u64(in, "config length");
  if (cfg_len > (1u << 20)) throw IoError("implausible config section size");
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) {
    throw IoError("unexpected end of file in config section");
  }
  std::map<std::string, std::string> kv;
  std::istringstream cfg(cfg_text);
  std::string line;
  while (std::getline(cfg, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto want = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("config key '" + key + "' missing");
    return it->second;
  };

  const std::uint64_t d_len = io_detail::get_u64(in, "dictionary length");
  (void)d_len;
  Matrix d = io_detail::get_matrix(in, "dictionary block");
  const std::uint64_t u_len = io_detail::get_u64(in, "basis length");
  (void)u_len;
  Matrix u = io_detail::get_matrix(in, "basis block");

  GraphSpec graph;
  graph.variant = variant_from_name(want("variant"));
  graph.knn = std::stoi(want("knn"));
  graph.heat_t = std::stod(want("heat_t"));
  graph.k1 = std::stoi(want("k1"));
  graph.k2 = std::stoi(want("k2"));
  graph.alpha = std::stod(want("alpha"));
  graph.alpha1 = std::stod(want("alpha1"));
  graph.alpha2 = std::stod(want("alpha2"));
  graph.mu_mvr = std::stod(want("mu_mvr"));
  graph.rho1 = std::stod(want("rho1"));
  graph.rho2 = std::stod(want("rho2"));

  ElasticNetPrior prior{std::stod(want("lambda1")), std::stod(want("lambda2"))};
  SparLowParams params;
  params.sigma = std::stod(want("sigma"));
  params.mu1 = std::stod(want("mu1"));
  params.mu2 = std::stod(want("mu2"));
  // the anchor dictionary is a training-time input and is not persisted

  const int dim = std::stoi(want("dim"));
  Model model{Dictionary(std::move(d)), Projector::fromBasis(u), std::move(u), prior,
              std::move(params), graph};
  if (model.p.rank() != dim) throw IoError("model dim does not match the basis");
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// gradient verification harness

struct CheckGradOptions {
  int probes = 5;
  double h = 1e-6;
  std::uint64_t seed = 1;
  int resample_limit = 10;
  bool corrupt_gradient = false; // debug hook: scales the analytic gradient
  EncodeOptions encode{20000, 1e-12, 1e-12};
};

struct CheckGradReport {
  double err_grad_d = 0.0;
  double err_grad_p = 0.0;
  double err_riemannian = 0.0;
  double err_jacobian = 0.0;

  double worst() const {
    return std::max(std::max(err_grad_d, err_grad_p),
                    std::max(err_riemannian, err_jacobian));
  }
};

namespace detail {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

inline Matrix random_direction(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> gauss;
  Matrix h(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) h(i, j) = gauss(rng);
  }
  h /= h.norm();
  return h;
}

inline bool same_supports(const CodeBatch& a, const CodeBatch& b) {
  return a.supports == b.supports;
}

} // namespace detail

/// Finite-difference verification of the analytic machinery on one instance:
/// max relative errors of the Euclidean gradients in D and P, the Riemannian
/// gradient along retraction curves, and the code Jacobian. Probe directions
/// that flip a support between the +h and -h evaluations are resampled.
inline CheckGradReport check_grad(const Dataset& dataset, const TrainConfig& config,
                                  const CheckGradOptions& opts = {}) {
  const Eigen::Index m = dataset.dim();
  if (m * config.atoms > 4096) {
    throw ValidationError("check_grad: instance too large (m*r must be <= 4096)");
  }
  const LabelSet* labels = dataset.labels.has_value() ? &*dataset.labels : nullptr;

  Dictionary d0 = variant_needs_labels(config.graph.variant)
                      ? init_dictionary_per_class(dataset.x, *labels, config.atoms,
                                                  config.prior, config.dict_iters,
                                                  config.seed, nullptr, opts.encode)
                      : init_dictionary(dataset.x, config.atoms, config.prior,
                                        config.dict_iters, config.seed, nullptr,
                                        opts.encode);
  CodeBatch codes0 = batch_encode(dataset.x, d0, config.prior, opts.encode);
  StructurePair pair = build_structure_pair(config.graph, dataset.x, codes0.codes, labels);
  auto [a0, b0] = evaluate_pair(pair, codes0.codes);
  Projector p0 = init_projection(a0, b0, config.dim, config.sigma);

  SparLowParams params;
  params.sigma = config.sigma;
  params.mu1 = config.mu1;
  params.mu2 = config.mu2;
  params.anchor = d0;

  const Matrix& x = dataset.x;
  const Matrix dm = d0.matrix();
  const Matrix pm = p0.matrix();
  EvalState state = evaluate_state(x, dm, pm, pair, config.prior, params, opts.encode);
  const double corrupt = opts.corrupt_gradient ? 1.05 : 1.0;

  std::mt19937_64 rng(opts.seed);
  CheckGradReport report;
  const double h = opts.h;

  // Euclidean gradient in D against central differences of J
  Matrix grad_d = corrupt * euclidean_grad_D(x, dm, pair, pm, config.prior, params, state);
  for (int probe = 0; probe < opts.probes; ++probe) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= opts.resample_limit) {
        throw NumericalError("check_grad: no support-stable probe direction found");
      }
      Matrix dir = detail::random_direction(rng, dm.rows(), dm.cols());
      CodeBatch plus = batch_encode(x, Matrix(dm + h * dir), config.prior, opts.encode);
      CodeBatch minus = batch_encode(x, Matrix(dm - h * dir), config.prior, opts.encode);
      if (!detail::same_supports(plus, state.codes) ||
          !detail::same_supports(minus, state.codes)) {
        continue; // kink inside the probe interval
      }
      const double jp =
          evaluate_state(x, dm + h * dir, pm, pair, config.prior, params, opts.encode, &plus)
              .report.J_value;
      const double jm =
          evaluate_state(x, dm - h * dir, pm, pair, config.prior, params, opts.encode, &minus)
              .report.J_value;
      const double fd = (jp - jm) / (2.0 * h);
      const double an = grad_d.cwiseProduct(dir).sum();
      // directions nearly orthogonal to the gradient put the difference
      // quotient below its cancellation floor eps|J|/h; they measure
      // round-off, not the gradient, and are resampled like support flips
      const double floor = 1e-6 * std::max(1.0, std::abs(state.report.J_value));
      if (std::abs(fd) < floor && std::abs(an) < floor) continue;
      report.err_grad_d = std::max(report.err_grad_d, detail::rel_err(an, fd));
      break;
    }
  }

  // Euclidean gradient in P; codes do not depend on P, so f suffices
  Matrix grad_p = corrupt * euclidean_grad_P(state.a, state.b, pm, params.sigma,
                                             state.report.f_value);
  for (int probe = 0; probe < opts.probes; ++probe) {
    Matrix s = detail::random_direction(rng, pm.rows(), pm.cols());
    s = symmetrized(s);
    const double fp = trace_quotient_f(state.a, state.b, Matrix(pm + h * s), params.sigma);
    const double fm = trace_quotient_f(state.a, state.b, Matrix(pm - h * s), params.sigma);
    const double fd = (fp - fm) / (2.0 * h);
    const double an = grad_p.cwiseProduct(s).sum();
    report.err_grad_p = std::max(report.err_grad_p, detail::rel_err(an, fd));
  }

  // Riemannian gradient against directional derivatives along retractions
  TangentPair rg = riemannian_grad(d0, p0, grad_d, grad_p);
  for (int probe = 0; probe < opts.probes; ++probe) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= opts.resample_limit) {
        throw NumericalError("check_grad: no support-stable retraction probe found");
      }
      TangentPair dir{
          project_tangent_sphere(d0, detail::random_direction(rng, dm.rows(), dm.cols())),
          project_tangent_grassmann(p0, detail::random_direction(rng, pm.rows(), pm.cols()))};
      const double dn = product_norm(dir);
      if (dn < 1e-12) continue;
      dir = (1.0 / dn) * dir;
      auto [dp1, pp1] = product_retract(d0, p0, dir, h);
      auto [dm1, pm1] = product_retract(d0, p0, dir, -h);
      CodeBatch plus = batch_encode(x, dp1.matrix(), config.prior, opts.encode);
      CodeBatch minus = batch_encode(x, dm1.matrix(), config.prior, opts.encode);
      if (!detail::same_supports(plus, state.codes) ||
          !detail::same_supports(minus, state.codes)) {
        continue;
      }
      const double jp = evaluate_state(x, dp1.matrix(), pp1.matrix(), pair, config.prior,
                                       params, opts.encode, &plus)
                            .report.J_value;
      const double jm = evaluate_state(x, dm1.matrix(), pm1.matrix(), pair, config.prior,
                                       params, opts.encode, &minus)
                            .report.J_value;
      const double fd = (jp - jm) / (2.0 * h);
      const double an = product_metric(rg, dir);
      const double floor = 1e-6 * std::max(1.0, std::abs(state.report.J_value));
      if (std::abs(fd) < floor && std::abs(an) < floor) continue;
      report.err_riemannian = std::max(report.err_riemannian, detail::rel_err(an, fd));
      break;
    }
  }

  // code Jacobian against central differences of the encoder
  for (int probe = 0; probe < opts.probes; ++probe) {
    const Eigen::Index i = probe % x.cols();
    SparseCode code{state.codes.codes.col(i),
                    state.codes.supports[static_cast<size_t>(i)]};
    for (int attempt = 0;; ++attempt) {
      if (attempt >= opts.resample_limit) {
        throw NumericalError("check_grad: no support-stable Jacobian probe found");
      }
      Matrix dir = detail::random_direction(rng, dm.rows(), dm.cols());
      SparseCode plus = sparse_encode(Vector(x.col(i)), Matrix(dm + h * dir), config.prior,
                                      opts.encode);
      SparseCode minus = sparse_encode(Vector(x.col(i)), Matrix(dm - h * dir), config.prior,
                                       opts.encode);
      if (plus.support != code.support || minus.support != code.support) continue;
      Vector fd = (plus.values - minus.values) / (2.0 * h);
      Vector an = corrupt * code_jacobian_apply(Vector(x.col(i)), dm, code, dir, config.prior);
      const double err =
          (an - fd).norm() / std::max({an.norm(), fd.norm(), 1e-12});
      report.err_jacobian = std::max(report.err_jacobian, err);
      break;
    }
  }

  return report;
}

// ---------------------------------------------------------------------------
// synthetic data

/// Seeded Gaussian blob mixture with one mean per class, unit-normalized
/// samples, labels 1..classes assigned round-robin. Serves the CLI's default
/// verification instance and the desk-scale experiments.
inline Dataset synthetic_blobs(Eigen::Index m, Eigen::Index n, int classes,
                               std::uint64_t seed, double spread = 0.35) {
  if (classes < 1 || n < classes || m < 2) {
    throw ValidationError("synthetic_blobs: bad sizes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Matrix means(m, classes);
  for (int k = 0; k < classes; ++k) {
    for (Eigen::Index i = 0; i < m; ++i) means(i, k) = gauss(rng);
    means.col(k).normalize();
  }
  Dataset ds;
  ds.x.resize(m, n);
  std::vector<int> labels(static_cast<size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const int k = static_cast<int>(j % classes);
    for (Eigen::Index i = 0; i < m; ++i) {
      ds.x(i, j) = means(i, k) + spread * gauss(rng);
    }
    const double norm = ds.x.col(j).norm();
    if (norm < 1e-12) throw NumericalError("synthetic_blobs: degenerate sample");
    ds.x.col(j) /= norm;
    labels[static_cast<size_t>(j)] = k + 1;
  }
  ds.labels = LabelSet::fromLabels(std::move(labels));
  return ds;
}

} // namespace sparlow
