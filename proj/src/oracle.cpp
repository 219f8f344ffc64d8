#include "goca/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace goca::oracle {

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double plan_entry_objective(double d, double c, double p, bool has_prior, double l1, double l2) {
  if (d < 0.0) return std::numeric_limits<double>::infinity();
  double v = d * c + l1 * xlogx(d);
  if (has_prior && d > 0.0) v += l2 * d * (std::log(d) - std::log(p));
  return v;
}

}  // namespace

double objective(const Mat& plan, const Mat& cost, const std::optional<Mat>& prior, double lambda1, double lambda2) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      total += plan_entry_objective(plan(i, j), cost(i, j), prior ? (*prior)(i, j) : 1.0, prior.has_value(), lambda1,
                                    lambda2);
    }
  }
  return total;
}

GoldenResult golden_section_2x2(const Mat& cost, const std::optional<Mat>& prior, const Vec& row, const Vec& col,
                                double lambda1, double lambda2) {
  if (cost.rows() != 2 || cost.cols() != 2 || row.size() != 2 || col.size() != 2) {
    throw std::invalid_argument("golden_section_2x2: 2x2 instances only");
  }
  auto plan_at = [&](double t) {
    Mat d(2, 2);
    d << t, row(0) - t, col(0) - t, row(1) - col(0) + t;
    return d;
  };
  auto f = [&](double t) { return objective(plan_at(t), cost, prior, lambda1, lambda2); };

  GoldenResult out;
  out.lo = std::max(0.0, col(0) - row(1));
  out.hi = std::min(row(0), col(0));
  double a = out.lo;
  double b = out.hi;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > 1e-12) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  out.t = 0.5 * (a + b);
  out.plan = plan_at(out.t);
  return out;
}

namespace {

// Row-major dense storage, kept apart from Eigen on purpose.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  double& at(int i, int j) { return v[static_cast<std::size_t>(i * cols + j)]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i * cols + j)]; }
};

double log_add_all(const std::vector<double>& xs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : xs) top = std::max(top, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

double residual_of(const Grid& logd, const Vec& r, const Vec& c);

// Dense Gaussian elimination with partial pivoting; a is n x n row-major.
bool solve_dense(std::vector<double> a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int i = col + 1; i < n; ++i) {
      if (std::abs(a[static_cast<std::size_t>(i * n + col)]) > std::abs(a[static_cast<std::size_t>(piv * n + col)])) piv = i;
    }
    if (a[static_cast<std::size_t>(piv * n + col)] == 0.0) return false;
    if (piv != col) {
      for (int k = 0; k < n; ++k) std::swap(a[static_cast<std::size_t>(piv * n + k)], a[static_cast<std::size_t>(col * n + k)]);
      std::swap(b[static_cast<std::size_t>(piv)], b[static_cast<std::size_t>(col)]);
    }
    for (int i = col + 1; i < n; ++i) {
      const double factor = a[static_cast<std::size_t>(i * n + col)] / a[static_cast<std::size_t>(col * n + col)];
      for (int k = col; k < n; ++k) a[static_cast<std::size_t>(i * n + k)] -= factor * a[static_cast<std::size_t>(col * n + k)];
      b[static_cast<std::size_t>(i)] -= factor * b[static_cast<std::size_t>(col)];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) acc -= a[static_cast<std::size_t>(i * n + k)] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = acc / a[static_cast<std::size_t>(i * n + i)];
  }
  return true;
}

// Shifts logd by a_i + b_j so that exp(logd) has the target sums. Residual
// F = (row sums - r, col sums - c without the last column); Newton on F with
// backtracking on |F|^2.
void newton_project(Grid& logd, const Vec& r, const Vec& c) {
  const int m = logd.rows;
  const int n = logd.cols;
  const int dim = m + n - 1;
  auto residual_vec = [&](const Grid& g, std::vector<double>& rs, std::vector<double>& cs) {
    rs.assign(static_cast<std::size_t>(m), 0.0);
    cs.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const double e = std::exp(g.at(i, j));
        rs[static_cast<std::size_t>(i)] += e;
        cs[static_cast<std::size_t>(j)] += e;
      }
    }
    double sq = 0.0;
    for (int i = 0; i < m; ++i) sq += (rs[static_cast<std::size_t>(i)] - r(i)) * (rs[static_cast<std::size_t>(i)] - r(i));
    for (int j = 0; j < n - 1; ++j) sq += (cs[static_cast<std::size_t>(j)] - c(j)) * (cs[static_cast<std::size_t>(j)] - c(j));
    return sq;
  };
  std::vector<double> rs, cs;
  double current = residual_vec(logd, rs, cs);
  for (int it = 0; it < 100 && residual_of(logd, r, c) > 1e-14; ++it) {
    std::vector<double> jac(static_cast<std::size_t>(dim * dim), 0.0);
    std::vector<double> rhs(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < m; ++i) {
      jac[static_cast<std::size_t>(i * dim + i)] = rs[static_cast<std::size_t>(i)];
      rhs[static_cast<std::size_t>(i)] = r(i) - rs[static_cast<std::size_t>(i)];
      for (int j = 0; j < n - 1; ++j) {
        const double e = std::exp(logd.at(i, j));
        jac[static_cast<std::size_t>(i * dim + m + j)] = e;
        jac[static_cast<std::size_t>((m + j) * dim + i)] = e;
      }
    }
    for (int j = 0; j < n - 1; ++j) {
      jac[static_cast<std::size_t>((m + j) * dim + m + j)] = cs[static_cast<std::size_t>(j)];
      rhs[static_cast<std::size_t>(m + j)] = c(j) - cs[static_cast<std::size_t>(j)];
    }
    // Levenberg damping: the Jacobian is near singular when the support of the
    // plan almost splits into disconnected blocks.
    const double damping = std::sqrt(current);
    for (int k = 0; k < dim; ++k) jac[static_cast<std::size_t>(k * dim + k)] += damping;
    if (!solve_dense(jac, rhs, dim)) return;
    bool moved = false;
    for (double t = 1.0; t > 1e-12; t *= 0.5) {
      Grid trial = logd;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          trial.at(i, j) += t * rhs[static_cast<std::size_t>(i)];
          if (j < n - 1) trial.at(i, j) += t * rhs[static_cast<std::size_t>(m + j)];
        }
      }
      std::vector<double> trs, tcs;
      const double value = residual_vec(trial, trs, tcs);
      if (value < current) {
        logd = std::move(trial);
        current = value;
        rs = std::move(trs);
        cs = std::move(tcs);
        moved = true;
        break;
      }
    }
    if (!moved) return;
  }
}

// Alternating KL projections of exp(logd) onto {row sums = r} and
// {col sums = c}; slow sweeps are finished by newton_project.
void project(Grid& logd, const Vec& r, const Vec& c) {
  std::vector<double> buf;
  for (int sweep = 0; sweep < 500 && residual_of(logd, r, c) > 1e-14; ++sweep) {
    for (int i = 0; i < logd.rows; ++i) {
      buf.assign(logd.v.begin() + i * logd.cols, logd.v.begin() + (i + 1) * logd.cols);
      const double shift = std::log(r(i)) - log_add_all(buf);
      for (int j = 0; j < logd.cols; ++j) logd.at(i, j) += shift;
    }
    for (int j = 0; j < logd.cols; ++j) {
      buf.clear();
      for (int i = 0; i < logd.rows; ++i) buf.push_back(logd.at(i, j));
      const double shift = std::log(c(j)) - log_add_all(buf);
      for (int i = 0; i < logd.rows; ++i) logd.at(i, j) += shift;
    }
  }
  if (residual_of(logd, r, c) > 1e-14) newton_project(logd, r, c);
}

double residual_of(const Grid& logd, const Vec& r, const Vec& c) {
  double worst = 0.0;
  for (int i = 0; i < logd.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < logd.cols; ++j) s += std::exp(logd.at(i, j));
    worst = std::max(worst, std::abs(s - r(i)));
  }
  for (int j = 0; j < logd.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < logd.rows; ++i) s += std::exp(logd.at(i, j));
    worst = std::max(worst, std::abs(s - c(j)));
  }
  return worst;
}

Mat to_plan(const Grid& logd) {
  Mat d(logd.rows, logd.cols);
  for (int i = 0; i < logd.rows; ++i) {
    for (int j = 0; j < logd.cols; ++j) d(i, j) = std::exp(logd.at(i, j));
  }
  return d;
}

}  // namespace

MirrorResult mirror_descent_small(const Mat& cost, const std::optional<Mat>& prior, const Vec& row, const Vec& col,
                                  double lambda1, double lambda2) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (m < 1 || n < 1 || m > 4 || n > 4) throw std::invalid_argument("mirror_descent_small: M, N must be in [1, 4]");
  if (row.size() != m || col.size() != n) throw std::invalid_argument("mirror_descent_small: marginal sizes");
  const double l2 = prior ? lambda2 : 0.0;
  const double reg = lambda1 + l2;
  // Step size as a fraction of the full entropic step 1 / (lambda1 + lambda2).
  const double theta = 0.5;
  const double eta = theta / reg;

  Grid logd{m, n, std::vector<double>(static_cast<std::size_t>(m * n))};
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) logd.at(i, j) = std::log(row(i)) + std::log(col(j));
  }

  MirrorResult out;
  out.worst_residual = residual_of(logd, row, col);
  double previous = objective(to_plan(logd), cost, prior, lambda1, l2);
  for (int it = 1; it <= 5000; ++it) {
    out.outer_iterations = it;
    Grid next = logd;
    double biggest_move = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double grad = cost(i, j) + reg * (logd.at(i, j) + 1.0);
        if (prior) grad -= l2 * std::log((*prior)(i, j));
        next.at(i, j) = logd.at(i, j) - eta * grad;
      }
    }
    project(next, row, col);
    for (std::size_t k = 0; k < next.v.size(); ++k) {
      biggest_move = std::max(biggest_move, std::abs(std::exp(next.v[k]) - std::exp(logd.v[k])));
    }
    logd = std::move(next);
    out.worst_residual = std::max(out.worst_residual, residual_of(logd, row, col));
    const double value = objective(to_plan(logd), cost, prior, lambda1, l2);
    const bool stalled = std::abs(previous - value) < 1e-14;
    previous = value;
    if (stalled && biggest_move < 1e-14) {
      out.converged = true;
      break;
    }
  }
  out.plan = to_plan(logd);
  return out;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe(k) = x(k) + step;
    const double up = f(probe);
    probe(k) = x(k) - step;
    const double down = f(probe);
    probe(k) = x(k);
    g(k) = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace goca::oracle
