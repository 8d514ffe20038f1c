#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sparlow/errors.hpp"
#include "sparlow/graphs.hpp"
#include "sparlow/manifold.hpp"
#include "sparlow/objective.hpp"
#include "sparlow/sparse.hpp"

namespace sparlow {

struct IterRecord {
  int iter = 0;
  double j_value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double beta = 0.0;
  bool accepted = true;
};

/// Tab-separated log line: iteration, J, ||grad||, t, beta.
inline std::string format_iter_record(const IterRecord& rec) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.12g\t%.6g\t%.6g\t%.6g", rec.iter, rec.j_value,
                rec.grad_norm, rec.step, rec.beta);
  return buf;
}

struct CGTrace {
  std::vector<IterRecord> records;
  bool stagnated = false;

  int accepted_steps() const {
    int c = 0;
    for (const auto& r : records) {
      if (r.accepted && r.iter > 0) ++c;
    }
    return c;
  }
};

struct CGConfig {
  int max_iters = 200;
  double step_tol = 1e-7;   // on the product Frobenius norm of the update
  double grad_tol = 1e-6;
  int ls_max_evals = 40;
  int restart_every = 0;    // 0 picks the atom count r
  std::uint64_t seed = 0;
  bool force_beta_zero = false; // degenerate steepest-ascent mode
  bool freeze_dict = false;     // optimize over P alone, codes frozen
  int reproject_every = 25;     // projector idempotency refresh cadence
  double ls_xtol = 1e-3;        // golden-section relative width target
  EncodeOptions encode;
  std::function<void(const IterRecord&)> on_iteration; // verbose hook

  void validate() const {
    if (max_iters < 1 || ls_max_evals < 1 || reproject_every < 1) {
      throw ValidationError("CGConfig: iteration counts must be positive");
    }
    if (!(step_tol > 0.0) || !(grad_tol > 0.0) || !(ls_xtol > 0.0)) {
      throw ValidationError("CGConfig: tolerances must be positive");
    }
    if (restart_every < 0) throw ValidationError("CGConfig: restart_every must be >= 0");
  }
};

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  bool stagnated = false;
  int evals = 0;
};

/// Bracketed maximization of h along a retraction curve with Armijo
/// acceptance h(t) >= h(0) + c1 t slope0, c1 = 1e-4. Doubling finds a
/// bracket, golden-section refines it; h may return -inf where the objective
/// is not evaluable. Returns step 0 with a stagnation flag when no
/// acceptable step exists within the evaluation budget.
inline LineSearchResult line_search(const std::function<double(double)>& h, double f0,
                                    double slope0, int max_evals, double t_init = 1.0,
                                    double xtol = 1e-3) {
  constexpr double kArmijo = 1e-4;
  LineSearchResult res;
  res.value = f0;
  const auto acceptable = [&](double t, double ft) {
    return std::isfinite(ft) && ft >= f0 + kArmijo * t * slope0;
  };
  double best_t = 0.0, best_f = f0;
  const auto consider = [&](double t, double ft) {
    if (acceptable(t, ft) && ft > best_f) {
      best_t = t;
      best_f = ft;
    }
  };

  // backtrack until an acceptable step appears
  double t = t_init > 0.0 ? t_init : 1.0;
  double ft = -std::numeric_limits<double>::infinity();
  bool found = false;
  while (res.evals < max_evals) {
    ft = h(t);
    ++res.evals;
    if (acceptable(t, ft)) {
      found = true;
      break;
    }
    t *= 0.5;
    if (t < 1e-18) break;
  }
  if (!found) {
    res.stagnated = true;
    return res;
  }
  consider(t, ft);

  // expand by doubling while the objective keeps rising
  double lo = 0.5 * t;
  double hi = 2.0 * t;
  double cur = t, cur_f = ft;
  bool bracketed = false;
  while (res.evals < max_evals) {
    const double fhi = h(hi);
    ++res.evals;
    consider(hi, fhi);
    if (std::isfinite(fhi) && fhi > cur_f) {
      lo = cur;
      cur = hi;
      cur_f = fhi;
      hi = 2.0 * hi;
    } else {
      bracketed = true;
      break;
    }
  }
  if (!bracketed) {
    res.step = best_t;
    res.value = best_f;
    return res;
  }

  // golden-section refinement on [lo, hi]
  constexpr double kGolden = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kGolden * (b - a);
  double d = a + kGolden * (b - a);
  double fc = h(c), fd = h(d);
  res.evals += 2;
  consider(c, fc);
  consider(d, fd);
  while (res.evals < max_evals && (b - a) > xtol * std::max(1.0, std::abs(a))) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kGolden * (b - a);
      fc = h(c);
      ++res.evals;
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kGolden * (b - a);
      fd = h(d);
      ++res.evals;
      consider(d, fd);
    }
  }
  if (best_t == 0.0) {
    res.stagnated = true;
    return res;
  }
  res.step = best_t;
  res.value = best_f;
  return res;
}

/// Conjugate-direction coefficient
///   beta = <G_new, G_new - T G_old> / <H_old, G_old>,
/// with the denominator taken at the old point before transport. Negative
/// values and degenerate denominators collapse to 0, restarting the
/// direction at the gradient.
inline double beta_kh(const TangentPair& g_new, const TangentPair& g_old_transported,
                      double denom_old) {
  if (denom_old == 0.0 || !std::isfinite(denom_old)) return 0.0;
  const double numer = product_metric(g_new, g_new) - product_metric(g_new, g_old_transported);
  const double beta = numer / denom_old;
  if (!std::isfinite(beta) || beta < 0.0) return 0.0;
  return beta;
}

struct OptimizeResult {
  Dictionary d;
  Projector p;
  CGTrace trace;
};

namespace detail {

/// Recomputes the trace-quotient part of a report after P changed while the
/// codes (and hence A, B, g_c, g_d) stayed fixed.
inline void refresh_report(EvalState& state, const Matrix& p, const SparLowParams& params) {
  state.report.numerator = (p * state.a).trace();
  state.report.denominator = (p * state.b).trace() + params.sigma;
  if (!(state.report.denominator > 0.0)) {
    throw NumericalError("refresh_report: nonpositive denominator");
  }
  state.report.f_value = state.report.numerator / state.report.denominator;
  state.report.J_value = state.report.f_value - params.mu1 * state.report.gc_value -
                         params.mu2 * state.report.gd_value;
}

} // namespace detail

/// Geometric conjugate gradient ascent of J on the product manifold:
/// line search along the retraction curve, vector transport of the previous
/// gradient and direction, beta_kh mixing with periodic restarts.
inline OptimizeResult optimize(const Matrix& x, const Dictionary& d0, const Projector& p0,
                               const StructurePair& pair, const ElasticNetPrior& prior,
                               const SparLowParams& params, const CGConfig& config) {
  config.validate();
  prior.validate();
  params.validate();
  const auto r = d0.atoms();
  const int restart_every = config.restart_every > 0 ? config.restart_every
                                                     : static_cast<int>(r);

  Dictionary d = d0;
  Projector p = p0;
  CGTrace trace;

  // with a frozen dictionary the codes, A, B never change
  CodeBatch frozen;
  const CodeBatch* frozen_ptr = nullptr;
  if (config.freeze_dict) {
    frozen = batch_encode(x, d.matrix(), prior, config.encode);
    frozen_ptr = &frozen;
  }

  const auto compute_grad = [&](const Dictionary& dd, const Projector& pp,
                                const EvalState& state) -> TangentPair {
    Matrix grad_p = euclidean_grad_P(state.a, state.b, pp.matrix(), params.sigma,
                                     state.report.f_value);
    Matrix grad_d;
    if (config.freeze_dict) {
      grad_d = Matrix::Zero(dd.dim(), dd.atoms());
    } else {
      grad_d = euclidean_grad_D(x, dd.matrix(), pair, pp.matrix(), prior, params, state);
    }
    TangentPair g = riemannian_grad(dd, pp, grad_d, grad_p);
    if (config.freeze_dict) g.dict_dir.setZero();
    return g;
  };

  EvalState state = evaluate_state(x, d.matrix(), p.matrix(), pair, prior, params,
                                   config.encode, frozen_ptr);
  TangentPair g = compute_grad(d, p, state);
  TangentPair h = g;
  bool h_is_gradient = true;
  double denom = product_metric(h, g);

  IterRecord initial{0, state.report.J_value, product_norm(g), 0.0, 0.0, true};
  trace.records.push_back(initial);
  if (config.on_iteration) config.on_iteration(initial);

  double t_prev = 1.0;
  struct TrialPoint {
    double t;
    Dictionary d;
    Projector p;
    EvalState state;
  };

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const double grad_norm = product_norm(g);
    if (grad_norm <= config.grad_tol) break;

    try {
      double slope = product_metric(g, h);
      if (!(slope > 0.0)) { // not an ascent direction: restart at the gradient
        h = g;
        h_is_gradient = true;
        slope = grad_norm * grad_norm;
        denom = slope;
      }

      std::vector<TrialPoint> evals;
      const auto curve_value = [&](double t) -> double {
        try {
          Dictionary dt = config.freeze_dict
                              ? d
                              : Dictionary(([&] {
                                  Matrix dm = d.matrix();
                                  for (Eigen::Index jcol = 0; jcol < dm.cols(); ++jcol) {
                                    dm.col(jcol) =
                                        sphere_retract(dm.col(jcol), h.dict_dir.col(jcol), t);
                                  }
                                  return dm;
                                })());
          Projector pt = grassmann_retract(p, h.proj_dir, t);
          EvalState st = evaluate_state(x, dt.matrix(), pt.matrix(), pair, prior, params,
                                        config.encode, frozen_ptr);
          const double value = st.report.J_value;
          evals.push_back({t, std::move(dt), std::move(pt), std::move(st)});
          return value;
        } catch (const NumericalError&) {
          // trial point outside the evaluable region; the search backs off
          return -std::numeric_limits<double>::infinity();
        }
      };

      LineSearchResult ls = line_search(curve_value, state.report.J_value, slope,
                                        config.ls_max_evals, t_prev, config.ls_xtol);
      if (ls.stagnated && !h_is_gradient) {
        // CG direction made no progress; retry once along the plain gradient
        h = g;
        h_is_gradient = true;
        slope = grad_norm * grad_norm;
        denom = slope;
        evals.clear();
        ls = line_search(curve_value, state.report.J_value, slope, config.ls_max_evals,
                         t_prev, config.ls_xtol);
      }
      if (ls.stagnated) {
        trace.stagnated = true;
        IterRecord rec{iter, state.report.J_value, grad_norm, 0.0, 0.0, false};
        trace.records.push_back(rec);
        if (config.on_iteration) config.on_iteration(rec);
        break;
      }

      const double t = ls.step;
      TrialPoint* accepted = nullptr;
      for (auto& e : evals) {
        if (e.t == t) accepted = &e;
      }
      if (accepted == nullptr) {
        // the chosen step was never cached; recompute it
        curve_value(t);
        if (evals.empty() || evals.back().t != t) {
          throw NumericalError("accepted line-search step failed to re-evaluate");
        }
        accepted = &evals.back();
      }
      Dictionary d_new = std::move(accepted->d);
      Projector p_new = std::move(accepted->p);
      EvalState state_new = std::move(accepted->state);
      evals.clear();

      if (iter % config.reproject_every == 0) {
        p_new = p_new.reprojected();
        detail::refresh_report(state_new, p_new.matrix(), params);
      }

      const double step_norm =
          std::sqrt((d_new.matrix() - d.matrix()).squaredNorm() +
                    (p_new.matrix() - p.matrix()).squaredNorm());

      TangentPair g_new = compute_grad(d_new, p_new, state_new);
      double beta = 0.0;
      if (!config.force_beta_zero && iter % restart_every != 0) {
        TangentPair g_transported = product_transport(d, p, h, t, g);
        beta = beta_kh(g_new, g_transported, denom);
      }
      TangentPair h_transported = product_transport(d, p, h, t, h);
      h = g_new + beta * h_transported;
      if (config.freeze_dict) h.dict_dir.setZero();
      h_is_gradient = beta == 0.0;

      d = std::move(d_new);
      p = std::move(p_new);
      state = std::move(state_new);
      g = std::move(g_new);
      denom = product_metric(h, g);
      t_prev = t;

      IterRecord rec{iter, state.report.J_value, product_norm(g), t, beta, true};
      trace.records.push_back(rec);
      if (config.on_iteration) config.on_iteration(rec);

      if (step_norm <= config.step_tol) break;
    } catch (const NumericalError& e) {
      throw NumericalError("optimize: iteration " + std::to_string(iter) + ": " + e.what());
    }
  }

  return {std::move(d), std::move(p), std::move(trace)};
}

} // namespace sparlow
