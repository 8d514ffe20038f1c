#include <catch2/catch_amalgamated.hpp>

#include "sparlow/sparlow.hpp"
#include "test_support.hpp"

using namespace sparlow;
using testsup::random_matrix;

namespace {

Projector diag_projector(int r, int l) {
  Matrix u = Matrix::Identity(r, r).leftCols(l);
  return Projector::fromBasis(u);
}

} // namespace

TEST_CASE("trace quotient") {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 2, 1;
  Matrix b = Matrix::Identity(2, 2);
  Projector p = diag_projector(2, 1);

  REQUIRE(trace_quotient_f(a, b, p, 1e-3) == Catch::Approx(2.0 / 1.001).epsilon(1e-12));
  REQUIRE(trace_quotient_f(Matrix::Zero(2, 2), b, p, 1e-3) == 0.0);

  // equal numerator and denominator structure: ratio approaches 1
  REQUIRE(trace_quotient_f(b, b, p, 1e-12) == Catch::Approx(1.0).epsilon(1e-10));

  Matrix neg = -Matrix::Identity(2, 2);
  REQUIRE_THROWS_AS(trace_quotient_f(a, neg, p, 1e-3), NumericalError);
}

TEST_CASE("coherence barrier") {
  SECTION("orthogonal atoms sit at the barrier minimum") {
    Dictionary d(Matrix::Identity(3, 3));
    REQUIRE(coherence_barrier(d) == 0.0);
    REQUIRE(coherence_barrier_grad(d).norm() == 0.0);
  }

  SECTION("two atoms at coherence 0.6") {
    Matrix m(2, 2);
    m << 1.0, 0.6, 0.0, 0.8;
    Dictionary d(m);
    REQUIRE(coherence_barrier(d) == Catch::Approx(-0.5 * std::log(0.64)).epsilon(1e-12));
  }

  SECTION("collapsed atoms leave the barrier domain") {
    Matrix m(2, 2);
    m << 1, 1, 0, 0;
    REQUIRE_THROWS_AS(coherence_barrier(m), NumericalError);
  }

  SECTION("strictly increasing in any pairwise coherence") {
    double prev = -1.0;
    for (double c : {0.0, 0.2, 0.5, 0.8, 0.95}) {
      Matrix m(2, 2);
      m << 1.0, c, 0.0, std::sqrt(1.0 - c * c);
      const double v = coherence_barrier(m);
      REQUIRE(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("data regularizer") {
  std::mt19937_64 rng(3);
  Dictionary d = testsup::random_dictionary(rng, 4, 3);
  REQUIRE(data_regularizer(d.matrix(), d.matrix()) == 0.0);
  REQUIRE(data_regularizer_grad(d.matrix(), d.matrix()).norm() == 0.0);

  Matrix shifted = d.matrix();
  shifted(1, 2) += 2.0;
  REQUIRE(data_regularizer(shifted, d.matrix()) == Catch::Approx(2.0));
  REQUIRE(data_regularizer_grad(shifted, d.matrix())(1, 2) == Catch::Approx(2.0));

  // simultaneous column permutation leaves the distance unchanged
  Matrix anchor = random_matrix(rng, 4, 3);
  Matrix dperm(4, 3), aperm(4, 3);
  const int perm[3] = {2, 0, 1};
  for (int j = 0; j < 3; ++j) {
    dperm.col(j) = shifted.col(perm[j]);
    aperm.col(j) = anchor.col(perm[j]);
  }
  REQUIRE(data_regularizer(shifted, anchor) ==
          Catch::Approx(data_regularizer(dperm, aperm)).epsilon(1e-14));
}

TEST_CASE("euclidean gradient in P") {
  std::mt19937_64 rng(5);
  Matrix b = random_matrix(rng, 4, 4);
  b = b * b.transpose();
  Projector p = testsup::random_projector(rng, 4, 2);

  SECTION("stationary when A is proportional to B") {
    const double f = trace_quotient_f(3.0 * b, b, p, 0.0);
    REQUIRE(f == Catch::Approx(3.0).epsilon(1e-12));
    REQUIRE(euclidean_grad_P(3.0 * b, b, p.matrix(), 0.0, f).norm() < 1e-12);
  }

  SECTION("zero B with unit sigma returns A") {
    Matrix a = random_matrix(rng, 4, 4);
    a = symmetrized(a);
    const double f = trace_quotient_f(a, Matrix::Zero(4, 4), p, 1.0);
    Matrix g = euclidean_grad_P(a, Matrix::Zero(4, 4), p.matrix(), 1.0, f);
    REQUIRE((g - a).norm() < 1e-13);
  }

  SECTION("symmetric output and joint-scaling invariance at sigma = 0") {
    Matrix a = random_matrix(rng, 4, 4);
    a = symmetrized(a);
    const double f1 = trace_quotient_f(a, b, p, 0.0);
    const double f3 = trace_quotient_f(3.0 * a, 3.0 * b, p, 0.0);
    REQUIRE(f1 == Catch::Approx(f3).epsilon(1e-12));
    Matrix g1 = euclidean_grad_P(a, b, p.matrix(), 0.0, f1);
    Matrix g3 = euclidean_grad_P(3.0 * a, 3.0 * b, p.matrix(), 0.0, f3);
    REQUIRE((g1 - g1.transpose()).norm() < 1e-14);
    Matrix r1 = project_tangent_grassmann(p, g1);
    Matrix r3 = project_tangent_grassmann(p, g3);
    REQUIRE((r3 - r1).norm() < 1e-12 * std::max(1.0, r1.norm()));
  }
}

TEST_CASE("dictionary gradient vanishes for a zero numerator with f = 0") {
  std::mt19937_64 rng(7);
  const int n = 6;
  Dictionary d = testsup::random_dictionary(rng, 4, 5);
  Matrix x = random_matrix(rng, 4, n);
  for (int j = 0; j < n; ++j) x.col(j).normalize();
  ElasticNetPrior prior{0.1, 1e-2};
  CodeBatch codes = batch_encode(x, d, prior);

  StructurePair pair;
  pair.a = {TermKind::Quadratic, Matrix::Zero(n, n), 0.0};
  pair.b = {TermKind::ScaledIdentity, Matrix::Identity(n, n), 0.0};
  pair.n = n;

  Matrix grad = euclidean_grad_f_D(x, d.matrix(), codes, pair, diag_projector(5, 2).matrix(),
                                   prior, 0.0, 1.0);
  REQUIRE(grad.norm() == 0.0);
}

TEST_CASE("scalar instance solved symbolically") {
  // one atom, one pixel: phi = (x - lambda1) / (1 + 2 lambda2) on the support
  Matrix d(1, 1);
  d << 1.0;
  Vector x(1);
  x << 1.0;
  ElasticNetPrior prior{0.1, 0.1};
  SparseCode code = sparse_encode(x, d, prior);
  REQUIRE(code.values[0] == Catch::Approx(0.75).epsilon(1e-10));

  // Prop-2 response: dphi/dd = (1 - 2 d phi) / (d^2 + 2 lambda2) at d = 1
  Matrix h(1, 1);
  h << 1.0;
  Vector jac = code_jacobian_apply(x, d, code, h, prior);
  const double expect = (1.0 - 2.0 * 0.75) / 1.2;
  REQUIRE(jac[0] == Catch::Approx(expect).epsilon(1e-10));

  // scalar calculus oracle: phi(d) = (d x - lambda1) / (d^2 + 2 lambda2)
  const double dd = 1e-7;
  const auto phi_of = [&](double dv) { return (dv - 0.1) / (dv * dv + 0.2); };
  const double fd = (phi_of(1.0 + dd) - phi_of(1.0 - dd)) / (2.0 * dd);
  REQUIRE(jac[0] == Catch::Approx(fd).epsilon(1e-6));
}

TEST_CASE("evaluate_J report identity") {
  Dataset ds = synthetic_blobs(6, 14, 2, 99);
  std::mt19937_64 rng(9);
  Dictionary d = testsup::random_dictionary(rng, 6, 8);
  Projector p = testsup::random_projector(rng, 8, 2);
  ElasticNetPrior prior{0.15, 1e-2};
  StructurePair pair = build_pca(14);

  SECTION("mu1 = mu2 = 0 gives J = f") {
    SparLowParams params;
    params.mu1 = 0.0;
    params.mu2 = 0.0;
    ObjectiveReport rep = evaluate_J(ds.x, d, p, pair, prior, params);
    REQUIRE(rep.J_value == rep.f_value);
    REQUIRE(rep.gc_value == 0.0);
  }

  SECTION("anchored orthogonal dictionary: both regularizers vanish") {
    Dictionary dsq(Matrix::Identity(6, 6));
    SparLowParams params;
    params.anchor = dsq;
    ObjectiveReport rep = evaluate_J(ds.x, dsq.matrix(),
                                     testsup::random_projector(rng, 6, 2).matrix(), pair,
                                     prior, params);
    REQUIRE(rep.gc_value == 0.0);
    REQUIRE(rep.gd_value == 0.0);
    REQUIRE(rep.J_value == rep.f_value);
  }

  SECTION("assembly identity holds to 1e-12") {
    SparLowParams params;
    params.anchor = testsup::random_dictionary(rng, 6, 8);
    params.mu1 = 3e-4;
    params.mu2 = 2e-3;
    ObjectiveReport rep = evaluate_J(ds.x, d, p, pair, prior, params);
    REQUIRE(rep.J_value ==
            Catch::Approx(rep.f_value - params.mu1 * rep.gc_value -
                          params.mu2 * rep.gd_value)
                .margin(1e-12));
    REQUIRE(rep.denominator >= params.sigma);
  }
}

TEST_CASE("riemannian gradient plumbing") {
  std::mt19937_64 rng(11);
  Dictionary d = testsup::random_dictionary(rng, 5, 4);
  Projector p = testsup::random_projector(rng, 4, 2);

  TangentPair zero = riemannian_grad(d, p, Matrix::Zero(5, 4), Matrix::Zero(4, 4));
  REQUIRE(zero.dict_dir.norm() == 0.0);
  REQUIRE(zero.proj_dir.norm() == 0.0);

  TangentPair h = testsup::random_tangent(rng, d, p);
  TangentPair through = riemannian_grad(d, p, h.dict_dir, h.proj_dir);
  REQUIRE((through.dict_dir - h.dict_dir).norm() < 1e-12);
  REQUIRE((through.proj_dir - h.proj_dir).norm() < 1e-12);

  // tangency of the projector part
  Matrix g = random_matrix(rng, 4, 4);
  TangentPair rg = riemannian_grad(d, p, random_matrix(rng, 5, 4), g);
  const Matrix& pm = p.matrix();
  REQUIRE((pm * rg.proj_dir + rg.proj_dir * pm - rg.proj_dir).norm() < 1e-10);
}

TEST_CASE("rotation invariance at the projector level") {
  Dataset ds = synthetic_blobs(6, 12, 3, 42);
  std::mt19937_64 rng(13);
  Dictionary d = testsup::random_dictionary(rng, 6, 8);
  Projector p = testsup::random_projector(rng, 8, 3);
  ElasticNetPrior prior{0.15, 1e-2};
  StructurePair pair = build_pca(12);
  SparLowParams params;
  params.mu1 = 0.0;
  params.mu2 = 0.0;

  Matrix u = basis_from_projector(p);
  // rotate the basis; the projector it spans is unchanged
  Matrix rot = testsup::random_matrix(rng, 3, 3);
  Eigen::HouseholderQR<Matrix> qr(rot);
  Matrix theta = qr.householderQ();
  Projector p2 = Projector::fromBasis(Matrix(u * theta));

  const double j1 = evaluate_J(ds.x, d, p, pair, prior, params).J_value;
  const double j2 = evaluate_J(ds.x, d, p2, pair, prior, params).J_value;
  REQUIRE(j1 == Catch::Approx(j2).margin(1e-12));
}

TEST_CASE("gradients agree with finite differences per variant") {
  // the full 20-instance sweep runs in the acceptance suite; spot-check here
  for (Variant variant : {Variant::pca, Variant::mvr}) {
    Dataset ds = synthetic_blobs(8, 20, 4, 1234 + static_cast<int>(variant));
    TrainConfig cfg;
    cfg.graph.variant = variant;
    cfg.graph.knn = 4;
    cfg.atoms = 12;
    cfg.dim = 3;
    cfg.dict_iters = 3;
    cfg.prior = {0.2, 1e-3};
    cfg.seed = 5;
    CheckGradOptions opts;
    opts.probes = 3;
    opts.seed = 17;
    CheckGradReport rep = check_grad(ds, cfg, opts);
    INFO("variant " << variant_name(variant));
    REQUIRE(rep.err_grad_d <= 1e-4);
    REQUIRE(rep.err_grad_p <= 1e-4);
    REQUIRE(rep.err_riemannian <= 1e-4);
    REQUIRE(rep.err_jacobian <= 1e-5);
  }
}
