#pragma once

// Brute-force verifiers for the test suite and `goca verify`. This header and
// its implementation depend on Eigen only; nothing here calls into the
// solvers they check.

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace goca::oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// <D,C> + lambda1 sum d log d + lambda2 sum d log(d / p), with the prior term
// dropped when `prior` is empty.
double objective(const Mat& plan, const Mat& cost, const std::optional<Mat>& prior, double lambda1, double lambda2);

struct GoldenResult {
  Mat plan;
  double t = 0.0;  // the free (0, 0) entry
  double lo = 0.0;
  double hi = 0.0;  // feasible interval of t
};

// 2x2 plans with fixed marginals are D(t) = [[t, r0 - t], [c0 - t, r1 - c0 + t]].
// Golden-section search on t down to an interval of width 1e-12.
GoldenResult golden_section_2x2(const Mat& cost, const std::optional<Mat>& prior, const Vec& row, const Vec& col,
                                double lambda1, double lambda2);

struct MirrorResult {
  Mat plan;
  int outer_iterations = 0;
  double worst_residual = 0.0;  // over all iterates, after projection
  bool converged = false;
};

// Entropic mirror descent on the objective over the transport polytope; each
// step is followed by alternating KL projections onto the row and column
// constraints. M, N <= 4.
MirrorResult mirror_descent_small(const Mat& cost, const std::optional<Mat>& prior, const Vec& row, const Vec& col,
                                  double lambda1, double lambda2);

// Central differences, one coordinate at a time.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step);

}  // namespace goca::oracle
