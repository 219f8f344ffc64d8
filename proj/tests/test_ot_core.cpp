#include <doctest.h>

#include <cmath>
#include <random>

#include "goca/oracle.hpp"
#include "goca/ot_core.hpp"
#include "test_util.hpp"

using namespace goca;
using goca::test::max_diff;
using goca::test::random_matrix;
using goca::test::random_unit_rows;

TEST_CASE("cost_from_features") {
  SUBCASE("self similarity") {
    Matrix f(1, 3);
    f << 0.6, 0.0, 0.8;
    const CostMatrix c = cost_from_features(f, f);
    CHECK(c(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("orthogonal rows give zero cost") {
    const Matrix f = Matrix::Identity(2, 4);
    Matrix p = Matrix::Zero(2, 4);
    p(0, 2) = 1.0;
    p(1, 3) = 1.0;
    CHECK(cost_from_features(f, p).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches direct dot products") {
    std::mt19937_64 rng(1);
    const Matrix f = random_unit_rows(2, 5, rng);
    const CostMatrix c = cost_from_features(f, f);
    CHECK(c(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(c(1, 1) == doctest::Approx(-1.0).epsilon(1e-14));
    double dot = 0.0;
    for (int k = 0; k < 5; ++k) dot += f(0, k) * f(1, k);
    CHECK(std::abs(c(0, 1) + dot) < 1e-15);
    CHECK(std::abs(c(1, 0) + dot) < 1e-15);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(cost_from_features(Matrix::Ones(2, 3), Matrix::Ones(2, 4)), std::invalid_argument);
  }
}

TEST_CASE("entropy") {
  CHECK(entropy(Matrix::Constant(2, 2, 0.25)) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  Matrix one = Matrix::Zero(2, 2);
  one(1, 0) = 1.0;
  CHECK(entropy(one) == 0.0);
  Matrix d(2, 2);
  d << 0.4, 0.1, 0.1, 0.4;
  const double expected = -(2 * 0.4 * std::log(0.4) + 2 * 0.1 * std::log(0.1));
  CHECK(entropy(d) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(entropy(d) == doctest::Approx(1.193).epsilon(1e-3));
}

TEST_CASE("transport_objective") {
  const Matrix uniform = Matrix::Constant(2, 2, 0.25);
  CHECK(transport_objective(uniform, Matrix::Zero(2, 2), 1.0) == doctest::Approx(-std::log(4.0)));
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  CHECK(transport_objective(uniform, c, 0.0) == doctest::Approx(0.5));

  std::mt19937_64 rng(2);
  const Matrix d = random_matrix(3, 3, 0.01, 1.0, rng) / 5.0;
  const Matrix cost = random_matrix(3, 3, -1.0, 1.0, rng);
  long double direct = 0.0L;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const long double x = d(i, j);
      direct += x * cost(i, j) + 0.3L * x * std::log(x);
    }
  }
  CHECK(std::abs(transport_objective(d, cost, 0.3) - static_cast<double>(direct)) < 1e-14);
  CHECK_THROWS(transport_objective(d, Matrix::Zero(2, 3), 0.1));
}

TEST_CASE("marginal_residual") {
  const Matrix uniform = Matrix::Constant(2, 2, 0.25);
  auto [r0, c0] = marginal_residual(uniform, Marginals::uniform(2, 2));
  CHECK(r0 == 0.0);
  CHECK(c0 == 0.0);
  Marginals skew;
  skew.row = Vector(2);
  skew.row << 0.7, 0.3;
  skew.col = Vector::Constant(2, 0.5);
  auto [r1, c1] = marginal_residual(uniform, skew);
  CHECK(r1 == doctest::Approx(0.2));
  CHECK(c1 == 0.0);
}

TEST_CASE("marginals and config validation") {
  Marginals bad = Marginals::uniform(2, 3);
  bad.row(0) = 0.0;
  CHECK_THROWS(bad.validate());
  bad = Marginals::uniform(2, 3);
  bad.col(0) += 1e-6;
  CHECK_THROWS(bad.validate());
  SolverConfig cfg;
  cfg.lambda1 = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = SolverConfig{};
  cfg.tolerance = -1.0;
  CHECK_THROWS(cfg.validate());
  CHECK(SolverConfig{}.lambda1 == 0.02);
  CHECK(SolverConfig{}.lambda2 == 0.03);
}

TEST_CASE("sinkhorn examples") {
  SolverConfig cfg;
  SUBCASE("zero cost gives the uniform plan") {
    const auto r = sinkhorn(Matrix::Zero(2, 2), Marginals::uniform(2, 2), cfg);
    CHECK(r.converged);
    CHECK(max_diff(r.plan, Matrix::Constant(2, 2, 0.25)) < 1e-15);
  }
  SUBCASE("dominant diagonal") {
    Matrix c(2, 2);
    c << 0, 10, 10, 0;
    const auto r = sinkhorn(c, Marginals::uniform(2, 2), cfg);
    Matrix expected = Matrix::Zero(2, 2);
    expected.diagonal().setConstant(0.5);
    CHECK(max_diff(r.plan, expected) < 1e-9);
  }
  SUBCASE("2x2 against golden section") {
    Matrix c(2, 2);
    c << 0, 1, 1, 0;
    cfg.lambda1 = 0.5;
    const Marginals mg = Marginals::uniform(2, 2);
    const auto r = sinkhorn(c, mg, cfg);
    const auto g = oracle::golden_section_2x2(c, std::nullopt, mg.row, mg.col, 0.5, 0.0);
    CHECK(max_diff(r.plan, g.plan) < 1e-8);
    CHECK(r.plan(0, 0) == doctest::Approx(r.plan(1, 1)));
    CHECK(r.plan(0, 1) == doctest::Approx(0.5 - r.plan(0, 0)));
  }
  SUBCASE("single row or column is solved exactly") {
    const auto row = sinkhorn(Matrix::Random(1, 4), Marginals::uniform(1, 4), cfg);
    CHECK(row.converged);
    CHECK(row.iterations == 0);
    CHECK(max_diff(row.plan, Matrix::Constant(1, 4, 0.25)) == 0.0);
    const auto col = sinkhorn(Matrix::Random(3, 1), Marginals::uniform(3, 1), cfg);
    CHECK(max_diff(col.plan, Matrix::Constant(3, 1, 1.0 / 3)) == 0.0);
  }
  SUBCASE("non-finite cost is rejected") {
    Matrix c = Matrix::Zero(2, 2);
    c(0, 1) = std::nan("");
    CHECK_THROWS_AS(sinkhorn(c, Marginals::uniform(2, 2), cfg), std::invalid_argument);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS(sinkhorn(Matrix::Zero(2, 3), Marginals::uniform(2, 2), cfg));
  }
}

TEST_CASE("sinkhorn multiplicative path") {
  std::mt19937_64 rng(3);
  SolverConfig cfg;
  cfg.lambda1 = 0.1;
  const Matrix c = random_matrix(5, 4, -1.0, 1.0, rng);
  const auto log_run = sinkhorn(c, Marginals::uniform(5, 4), cfg);
  cfg.log_domain = false;
  const auto mul_run = sinkhorn(c, Marginals::uniform(5, 4), cfg);
  CHECK(mul_run.converged);
  CHECK(max_diff(log_run.plan, mul_run.plan) < 1e-8);

  SUBCASE("overflow is reported") {
    cfg.lambda1 = 1e-3;
    Matrix big = Matrix::Zero(2, 2);
    big(0, 0) = -1.0;
    big(1, 1) = 1.0;
    CHECK_THROWS_AS(sinkhorn(big, Marginals::uniform(2, 2), cfg), NumericalError);
  }
}

TEST_CASE("sinkhorn non-convergence returns the last iterate") {
  std::mt19937_64 rng(4);
  SolverConfig cfg;
  cfg.max_iters = 2;
  cfg.newton = false;
  const auto r = sinkhorn(random_matrix(6, 5, -1.0, 1.0, rng), Marginals::uniform(6, 5), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 2);
  CHECK(r.plan.allFinite());
  CHECK(r.plan.minCoeff() >= 0.0);
}

TEST_CASE("sinkhorn properties on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(2, 12);
  const double lambdas[] = {0.01, 0.02, 0.05, 0.5};
  for (int t = 0; t < 60; ++t) {
    const int m = size(rng);
    const int n = size(rng);
    SolverConfig cfg;
    cfg.lambda1 = lambdas[t % 4];
    const Matrix c = -(random_unit_rows(m, 6, rng) * random_unit_rows(n, 6, rng).transpose());
    // Non-uniform marginals.
    Marginals mg;
    mg.row = random_matrix(m, 1, 0.5, 1.5, rng);
    mg.row /= mg.row.sum();
    mg.col = random_matrix(n, 1, 0.5, 1.5, rng);
    mg.col /= mg.col.sum();
    CAPTURE(t);
    const auto r = sinkhorn(c, mg, cfg);
    REQUIRE(r.converged);
    CHECK(std::max(r.row_residual, r.col_residual) <= cfg.tolerance);
    CHECK(r.plan.minCoeff() >= 0.0);

    // Cost-shift invariance.
    const auto shifted = sinkhorn((c.array() + 0.37).matrix(), mg, cfg);
    CHECK(max_diff(shifted.plan, r.plan) <= 1e-9);

    // Uniqueness from a different starting potential.
    const Matrix log_kernel = -c / cfg.lambda1;
    const Vector start = random_matrix(m, 1, -3.0, 3.0, rng);
    const auto other = scale_kernel(log_kernel, mg, cfg, start);
    CHECK(max_diff(other.plan, r.plan) <= 1e-8);

    // Feasible perturbations within U never improve the objective.
    const double best = transport_objective(r.plan, c, cfg.lambda1);
    std::uniform_int_distribution<int> ri(0, m - 1), cj(0, n - 1);
    for (int k = 0; k < 20; ++k) {
      const int i0 = ri(rng), i1 = ri(rng), j0 = cj(rng), j1 = cj(rng);
      if (i0 == i1 || j0 == j1) continue;
      const double room = std::min(r.plan(i0, j1), r.plan(i1, j0));
      const double eps = 0.5 * room;
      Matrix d = r.plan;
      d(i0, j0) += eps;
      d(i1, j1) += eps;
      d(i0, j1) -= eps;
      d(i1, j0) -= eps;
      CHECK(best <= transport_objective(d, c, cfg.lambda1) + 1e-9);
    }
  }
}

TEST_CASE("sinkhorn is deterministic") {
  std::mt19937_64 rng(6);
  const Matrix c = random_matrix(7, 5, -1.0, 1.0, rng);
  const auto a = sinkhorn(c, Marginals::uniform(7, 5), SolverConfig{});
  const auto b = sinkhorn(c, Marginals::uniform(7, 5), SolverConfig{});
  CHECK(a.iterations == b.iterations);
  CHECK(a.plan == b.plan);
}

TEST_CASE("sinkhorn at training scale") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const Matrix c = -(random_unit_rows(128, 16, rng) * random_unit_rows(64, 16, rng).transpose());
    const auto r = sinkhorn(c, Marginals::uniform(128, 64), SolverConfig{});
    CHECK(r.converged);
    CHECK(std::max(r.row_residual, r.col_residual) <= 1e-8);
  }
}
