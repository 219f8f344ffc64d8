#pragma once

#include <optional>
#include <stdexcept>
#include <utility>

#include "goca/matrix.hpp"

namespace goca {

// Raised by the multiplicative (non-log) Sinkhorn path when the kernel or the
// scaling vectors leave the representable range. Retry with log_domain = true.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Marginals {
  Vector row;  // psi, length M
  Vector col;  // omega, length N

  static Marginals uniform(Eigen::Index rows, Eigen::Index cols);
  // Throws std::invalid_argument unless entries are positive and both sum to 1.
  void validate() const;
};

struct SolverConfig {
  double lambda1 = 0.02;
  double lambda2 = 0.03;
  int max_iters = 10000;
  double tolerance = 1e-8;  // L-infinity marginal residual
  double prior_floor = 1e-12;
  bool log_domain = true;
  // Log-domain only: when plain scaling stalls, finish with Newton steps on
  // the dual potentials. Off gives pure alternating scaling.
  bool newton = true;

  void validate() const;
};

struct SinkhornResult {
  Matrix plan;
  int iterations = 0;
  bool converged = false;
  double row_residual = 0.0;
  double col_residual = 0.0;
};

// C_ij = -<f_i, p_j>.
CostMatrix cost_from_features(const FeatureBatch& features, const Matrix& prototypes);

// -sum d log d with 0 log 0 = 0.
double entropy(const Matrix& plan);

// <D, C> - lambda1 * h(D).
double transport_objective(const Matrix& plan, const CostMatrix& cost, double lambda1);

// (max |row sums - psi|, max |col sums - omega|).
std::pair<double, double> marginal_residual(const Matrix& plan, const Marginals& marginals);

// Entropic assignment: D = diag(u) exp(-C / lambda1) diag(v) with D in U(psi, omega).
// cfg.lambda2 is ignored here. Non-convergence is reported through the
// result flag; the last iterate is returned.
SinkhornResult sinkhorn(const CostMatrix& cost, const Marginals& marginals, const SolverConfig& cfg);

// Matrix scaling of exp(log_kernel) onto U(psi, omega). Shared by the plain and
// guided solvers. `init_log_u` seeds the row potential (defaults to zeros).
SinkhornResult scale_kernel(const Matrix& log_kernel, const Marginals& marginals,
                            const SolverConfig& cfg,
                            const std::optional<Vector>& init_log_u = std::nullopt);

}  // namespace goca
