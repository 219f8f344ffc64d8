#include <doctest.h>

#include <cmath>
#include <random>

#include "goca/oracle.hpp"

using namespace goca::oracle;

namespace {

Mat random_mat(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(rows, cols);
  for (int k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

Vec uniform(int n) { return Vec::Constant(n, 1.0 / n); }

}  // namespace

TEST_CASE("golden_section_2x2") {
  SUBCASE("zero cost") {
    const GoldenResult r = golden_section_2x2(Mat::Zero(2, 2), std::nullopt, uniform(2), uniform(2), 0.02, 0.0);
    // A flat minimum: golden section pins t to about sqrt(machine epsilon).
    CHECK(std::abs(r.t - 0.25) < 1e-7);
    CHECK((r.plan.array() - 0.25).abs().maxCoeff() < 1e-7);
  }
  SUBCASE("strongly diagonal cost") {
    Mat c(2, 2);
    c << 0, 5, 5, 0;
    CHECK(golden_section_2x2(c, std::nullopt, uniform(2), uniform(2), 0.01, 0.0).t > 0.5 - 1e-9);
  }
  SUBCASE("beats a dense grid") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 5; ++trial) {
      const Mat c = random_mat(2, 2, -1.0, 1.0, rng);
      const Mat prior = random_mat(2, 2, 0.05, 1.0, rng);
      Vec row(2), col(2);
      row << 0.3, 0.7;
      col << 0.55, 0.45;
      const GoldenResult r = golden_section_2x2(c, prior, row, col, 0.05, 0.03);
      const double best = objective(r.plan, c, prior, 0.05, 0.03);
      for (int k = 1; k < 10000; ++k) {
        const double t = r.lo + (r.hi - r.lo) * k / 10000.0;
        Mat d(2, 2);
        d << t, row(0) - t, col(0) - t, row(1) - col(0) + t;
        CHECK(best <= objective(d, c, prior, 0.05, 0.03) + 1e-15);
      }
    }
  }
}

TEST_CASE("mirror_descent_small") {
  std::mt19937_64 rng(62);
  SUBCASE("agrees with golden section on 2x2") {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Mat c = random_mat(2, 2, -1.0, 1.0, rng);
      const bool guided = trial % 2 == 1;
      const std::optional<Mat> prior = guided ? std::optional<Mat>(random_mat(2, 2, 0.05, 1.0, rng)) : std::nullopt;
      const double l2 = guided ? 0.03 : 0.0;
      const auto m = mirror_descent_small(c, prior, uniform(2), uniform(2), 0.1, l2);
      const auto g = golden_section_2x2(c, prior, uniform(2), uniform(2), 0.1, l2);
      worst = std::max(worst, (m.plan - g.plan).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-8);
  }
  SUBCASE("iterates stay feasible") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = mirror_descent_small(random_mat(3, 4, -1.0, 1.0, rng), std::nullopt, uniform(3), uniform(4), 0.05,
                                          0.0);
      CHECK(m.converged);
      CHECK(m.worst_residual <= 1e-10);
    }
  }
  SUBCASE("size limit") { CHECK_THROWS(mirror_descent_small(Mat::Zero(5, 2), std::nullopt, uniform(5), uniform(2), 0.1, 0.0)); }
}

TEST_CASE("objective") {
  Mat d = Mat::Constant(2, 2, 0.25);
  CHECK(objective(d, Mat::Zero(2, 2), std::nullopt, 1.0, 0.0) == doctest::Approx(-std::log(4.0)));
  CHECK(objective(d, Mat::Zero(2, 2), d, 0.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("finite_diff_grad") {
  Vec x(2);
  x << 1.0, 2.0;
  const Vec g = finite_diff_grad([](const Vec& v) { return v.squaredNorm(); }, x, 1e-4);
  CHECK(std::abs(g(0) - 2.0) < 1e-8);
  CHECK(std::abs(g(1) - 4.0) < 1e-8);
  for (double step : {1e-1, 1e-3}) {
    const Vec lin = finite_diff_grad([](const Vec& v) { return 3.0 * v(0) - 0.5 * v(1); }, x, step);
    CHECK(lin(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(lin(1) == doctest::Approx(-0.5).epsilon(1e-12));
  }
}
