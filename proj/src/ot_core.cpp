#include "goca/ot_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace goca {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " has non-finite entries");
}

double log_sum_exp(const double* x, Eigen::Index n, Eigen::Index stride) {
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) hi = std::max(hi, x[k * stride]);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) acc += std::exp(x[k * stride] - hi);
  return hi + std::log(acc);
}

void fill_residuals(SinkhornResult& r, const Marginals& marginals) {
  auto [row, col] = marginal_residual(r.plan, marginals);
  r.row_residual = row;
  r.col_residual = col;
}

// Newton's method on the concave dual
//   phi(f, g) = <psi, f> + <omega, g> - sum_ij exp(f_i + L_ij + g_j)
// with the gauge g_{N-1} = 0. The row block is eliminated so each step solves
// an (N-1) x (N-1) Schur system. Returns false if a step cannot be taken.
bool newton_finish(const Matrix& log_kernel, const Marginals& marginals, double tol, int budget, Vector& f, Vector& g,
                   int& used) {
  const Eigen::Index cols = log_kernel.cols();
  const Eigen::Index free = cols - 1;
  f.array() += g(free);
  g.array() -= g(free);

  auto plan_of = [&](const Vector& a, const Vector& b) -> Matrix {
    return ((log_kernel.colwise() + a).rowwise() + b.transpose()).array().exp();
  };
  auto dual_of = [&](const Vector& a, const Vector& b, const Matrix& d) {
    return marginals.row.dot(a) + marginals.col.dot(b) - d.sum();
  };

  Matrix d = plan_of(f, g);
  for (used = 0; used < budget; ++used) {
    const Vector r = d.rowwise().sum();
    const Vector c = d.colwise().sum().transpose();
    const Vector grad_f = marginals.row - r;
    const Vector grad_g = marginals.col - c;
    const double residual = std::max(grad_f.cwiseAbs().maxCoeff(), grad_g.cwiseAbs().maxCoeff());
    if (residual <= tol) return true;

    const auto lead = d.leftCols(free);
    // Levenberg damping keeps the step bounded when the support nearly splits
    // into disconnected blocks (each block then has its own gauge freedom).
    const double damping = residual;
    const Vector inv_r = (r.array() + damping).inverse().matrix();
    Matrix schur = -(lead.transpose() * inv_r.asDiagonal() * lead);
    schur.diagonal() += (c.head(free).array() + damping).matrix();
    const Vector rhs = grad_g.head(free) - lead.transpose() * inv_r.cwiseProduct(grad_f);
    const Eigen::LDLT<Matrix> ldlt(schur);
    if (ldlt.info() != Eigen::Success) return false;
    Vector step_g = Vector::Zero(cols);
    step_g.head(free) = ldlt.solve(rhs);
    const Vector step_f = inv_r.cwiseProduct(grad_f - lead * step_g.head(free));
    if (!step_f.allFinite() || !step_g.allFinite()) return false;

    const double phi = dual_of(f, g, d);
    const double slope = grad_f.dot(step_f) + grad_g.dot(step_g);
    bool accepted = false;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      const Vector f_try = f + t * step_f;
      const Vector g_try = g + t * step_g;
      Matrix d_try = plan_of(f_try, g_try);
      if (!d_try.allFinite()) continue;
      const double phi_try = dual_of(f_try, g_try, d_try);
      const double res_try = std::max((marginals.row - d_try.rowwise().sum()).cwiseAbs().maxCoeff(),
                                      (marginals.col - d_try.colwise().sum().transpose()).cwiseAbs().maxCoeff());
      // Near the optimum the dual gain drowns in rounding; fall back to the residual.
      if (phi_try >= phi + 1e-4 * t * slope || res_try < residual) {
        f = f_try;
        g = g_try;
        d = std::move(d_try);
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return false;
}

SinkhornResult scale_log(const Matrix& log_kernel, const Marginals& marginals, const SolverConfig& cfg,
                         Vector f) {
  // Alternating scaling iterations before switching to Newton.
  constexpr int kScalingWarmup = 100;
  // Scalings outside [1/kAbsorb, kAbsorb] are folded back into the potentials.
  constexpr double kAbsorb = 1e50;
  constexpr double kPolishTolerance = 1e-14;
  constexpr int kPolishSteps = 4;
  const Eigen::Index rows = log_kernel.rows();
  const Eigen::Index cols = log_kernel.cols();
  const Vector log_row = marginals.row.array().log();
  const Vector log_col = marginals.col.array().log();

  // Iterate D = diag(u) * exp(L + f 1' + 1 g') * diag(v): multiplicative
  // updates on a kernel kept well scaled by the log potentials f, g.
  Vector g = Vector::Zero(cols);
  Vector u = Vector::Ones(rows);
  Vector v = Vector::Ones(cols);
  Matrix kernel;
  Matrix work(rows, cols);
  auto in_range = [&](const Vector& x) {
    return x.allFinite() && x.minCoeff() > 1.0 / kAbsorb && x.maxCoeff() < kAbsorb;
  };
  // Absorbs the usable scalings, then performs one exact log-domain
  // row-and-column update and rebuilds the kernel.
  auto resync = [&](bool keep_u, bool keep_v) {
    if (keep_u) f += u.array().log().matrix();
    if (keep_v) g += v.array().log().matrix();
    work = log_kernel.rowwise() + g.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) f(i) = log_row(i) - log_sum_exp(work.data() + i * cols, cols, 1);
    work = log_kernel.colwise() + f;
    for (Eigen::Index j = 0; j < cols; ++j) g(j) = log_col(j) - log_sum_exp(work.data() + j, rows, cols);
    kernel = (work.rowwise() + g.transpose()).array().exp();
    u.setOnes();
    v.setOnes();
  };

  // Initial column update from the given row potential.
  work = log_kernel.colwise() + f;
  for (Eigen::Index j = 0; j < cols; ++j) g(j) = log_col(j) - log_sum_exp(work.data() + j, rows, cols);
  kernel = (work.rowwise() + g.transpose()).array().exp();

  SinkhornResult result;
  bool tried_newton = false;
  bool newton_done = false;
  // Newton steps from the current iterate towards rounding-level residuals;
  // adopted when the result meets the configured tolerance.
  auto try_newton = [&](int budget) {
    Vector f_try = f + u.array().log().matrix();
    Vector g_try = g + v.array().log().matrix();
    int used = 0;
    newton_finish(log_kernel, marginals, kPolishTolerance, budget, f_try, g_try, used);
    const Matrix plan = ((log_kernel.colwise() + f_try).rowwise() + g_try.transpose()).array().exp();
    const auto [row_res, col_res] = marginal_residual(plan, marginals);
    if (!(std::max(row_res, col_res) <= cfg.tolerance)) return -1;
    f = std::move(f_try);
    g = std::move(g_try);
    newton_done = true;
    return used;
  };
  for (int it = 1; it <= cfg.max_iters; ++it) {
    result.iterations = it;
    const Vector kv = kernel * v;
    const double residual = (u.cwiseProduct(kv) - marginals.row).cwiseAbs().maxCoeff();
    if (residual <= cfg.tolerance) {
      result.converged = true;
      // A small residual does not pin down the potentials (and hence the
      // relative size of tiny entries) on ill-conditioned instances; a few
      // Newton steps get them to rounding level.
      if (cfg.newton) try_newton(kPolishSteps);
      break;
    }
    if (cfg.newton && !tried_newton && it >= kScalingWarmup) {
      tried_newton = true;
      const int used = try_newton(cfg.max_iters - it);
      if (used >= 0) {
        result.iterations = it + used;
        result.converged = true;
        break;
      }
    }
    u = marginals.row.cwiseQuotient(kv);
    if (!in_range(u)) {
      resync(false, true);
      continue;
    }
    v = marginals.col.cwiseQuotient(kernel.transpose() * u);
    if (!in_range(v)) resync(true, false);
  }

  if (newton_done) {
    result.plan = ((log_kernel.colwise() + f).rowwise() + g.transpose()).array().exp();
  } else {
    result.plan = u.asDiagonal() * kernel * v.asDiagonal();
  }
  fill_residuals(result, marginals);
  return result;
}

SinkhornResult scale_multiplicative(const Matrix& log_kernel, const Marginals& marginals,
                                    const SolverConfig& cfg, const Vector& log_u) {
  const Matrix kernel = log_kernel.array().exp();
  if (!kernel.allFinite() || (kernel.array() <= 0.0).any()) {
    throw NumericalError("sinkhorn: kernel over/underflows; use log_domain");
  }
  Vector u = log_u.array().exp();
  Vector v(kernel.cols());
  auto check = [](const Vector& x) {
    if (!x.allFinite() || (x.array() <= 0.0).any()) {
      throw NumericalError("sinkhorn: scaling vector over/underflows; use log_domain");
    }
  };

  SinkhornResult result;
  v = marginals.col.array() / (kernel.transpose() * u).array();
  check(v);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    result.iterations = it;
    const Vector kv = kernel * v;
    const Vector row_sums = u.array() * kv.array();
    if ((row_sums - marginals.row).cwiseAbs().maxCoeff() <= cfg.tolerance) {
      result.converged = true;
      break;
    }
    u = marginals.row.array() / kv.array();
    check(u);
    v = marginals.col.array() / (kernel.transpose() * u).array();
    check(v);
  }
  result.plan = u.asDiagonal() * kernel * v.asDiagonal();
  fill_residuals(result, marginals);
  return result;
}

}  // namespace

Marginals Marginals::uniform(Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("marginals: empty shape");
  return {Vector::Constant(rows, 1.0 / static_cast<double>(rows)),
          Vector::Constant(cols, 1.0 / static_cast<double>(cols))};
}

void Marginals::validate() const {
  if (row.size() < 1 || col.size() < 1) throw std::invalid_argument("marginals: empty");
  if (!row.allFinite() || !col.allFinite() || (row.array() <= 0.0).any() || (col.array() <= 0.0).any()) {
    throw std::invalid_argument("marginals: entries must be finite and positive");
  }
  if (std::abs(row.sum() - 1.0) > 1e-12 || std::abs(col.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("marginals: each side must sum to 1");
  }
}

void SolverConfig::validate() const {
  if (!(lambda1 > 0.0)) throw std::invalid_argument("solver: lambda1 must be > 0");
  if (!(lambda2 >= 0.0)) throw std::invalid_argument("solver: lambda2 must be >= 0");
  if (!(tolerance > 0.0)) throw std::invalid_argument("solver: tolerance must be > 0");
  if (!(prior_floor > 0.0)) throw std::invalid_argument("solver: prior_floor must be > 0");
  if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
}

CostMatrix cost_from_features(const FeatureBatch& features, const Matrix& prototypes) {
  if (features.cols() != prototypes.cols()) {
    throw std::invalid_argument("cost: feature dim " + std::to_string(features.cols()) +
                                " != prototype dim " + std::to_string(prototypes.cols()));
  }
  return -(features * prototypes.transpose());
}

double entropy(const Matrix& plan) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    const double d = plan.data()[k];
    if (d > 0.0) h -= d * std::log(d);
  }
  return h;
}

double transport_objective(const Matrix& plan, const CostMatrix& cost, double lambda1) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw std::invalid_argument("objective: shape mismatch");
  }
  return plan.cwiseProduct(cost).sum() - lambda1 * entropy(plan);
}

std::pair<double, double> marginal_residual(const Matrix& plan, const Marginals& marginals) {
  if (plan.rows() != marginals.row.size() || plan.cols() != marginals.col.size()) {
    throw std::invalid_argument("residual: shape mismatch");
  }
  const double row = (plan.rowwise().sum() - marginals.row).cwiseAbs().maxCoeff();
  const double col = (plan.colwise().sum().transpose() - marginals.col).cwiseAbs().maxCoeff();
  return {row, col};
}

SinkhornResult scale_kernel(const Matrix& log_kernel, const Marginals& marginals, const SolverConfig& cfg,
                            const std::optional<Vector>& init_log_u) {
  cfg.validate();
  marginals.validate();
  if (log_kernel.rows() != marginals.row.size() || log_kernel.cols() != marginals.col.size()) {
    throw std::invalid_argument("sinkhorn: kernel shape does not match marginals");
  }
  require_finite(log_kernel, "sinkhorn: log kernel");

  // A single row or column leaves exactly one feasible plan.
  if (log_kernel.rows() == 1 || log_kernel.cols() == 1) {
    SinkhornResult r;
    r.plan = marginals.row * marginals.col.transpose();
    r.converged = true;
    fill_residuals(r, marginals);
    return r;
  }

  Vector f = init_log_u.value_or(Vector::Zero(log_kernel.rows()));
  if (f.size() != log_kernel.rows() || !f.allFinite()) {
    throw std::invalid_argument("sinkhorn: bad initial row potential");
  }
  return cfg.log_domain ? scale_log(log_kernel, marginals, cfg, std::move(f))
                        : scale_multiplicative(log_kernel, marginals, cfg, f);
}

SinkhornResult sinkhorn(const CostMatrix& cost, const Marginals& marginals, const SolverConfig& cfg) {
  require_finite(cost, "sinkhorn: cost");
  cfg.validate();
  const Matrix log_kernel = -cost / cfg.lambda1;
  return scale_kernel(log_kernel, marginals, cfg);
}

}  // namespace goca
