#include "goca/prototypes.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace goca {

namespace {

// Index of the off-diagonal row maximum; the -2I shift sends the diagonal to
// the bottom so a plain argmax over Omega works.
std::vector<Eigen::Index> row_argmax(const Matrix& omega) {
  std::vector<Eigen::Index> best(static_cast<std::size_t>(omega.rows()));
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < omega.cols(); ++j) {
      if (omega(i, j) > omega(i, arg)) arg = j;
    }
    best[static_cast<std::size_t>(i)] = arg;
  }
  return best;
}

Matrix shifted_gram(const Matrix& w) {
  Matrix omega = w * w.transpose();
  omega.diagonal().array() -= 2.0;
  return omega;
}

Matrix random_unit_rows(int count, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(count, dim);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = normal(rng);
  return project_to_sphere(w).matrix();
}

}  // namespace

PrototypeSet::PrototypeSet(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() < 2 || rows_.cols() < 2) {
    throw std::invalid_argument("prototypes: need at least 2 rows of dimension >= 2");
  }
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (std::abs(rows_.row(i).norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("prototypes: row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

void ProtoOptConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("prototype optimizer: steps must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("prototype optimizer: learning_rate must be > 0");
  if (!(final_learning_rate > 0.0)) throw std::invalid_argument("prototype optimizer: final learning rate must be > 0");
  if (restarts < 1) throw std::invalid_argument("prototype optimizer: restarts must be >= 1");
  if (!(sharpness > 0.0)) throw std::invalid_argument("prototype optimizer: sharpness must be > 0");
}

double prototype_loss(const Matrix& w) {
  return shifted_gram(w).rowwise().maxCoeff().mean();
}

Matrix prototype_loss_grad(const Matrix& w) {
  const auto best = row_argmax(shifted_gram(w));
  const double scale = 1.0 / static_cast<double>(w.rows());
  Matrix grad = Matrix::Zero(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const Eigen::Index j = best[static_cast<std::size_t>(i)];
    grad.row(i) += scale * w.row(j);
    grad.row(j) += scale * w.row(i);
  }
  return grad;
}

double smooth_prototype_loss(const Matrix& w, double sharpness) {
  const Matrix gram = w * w.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      if (j != i) hi = std::max(hi, gram(i, j));
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      if (j != i) acc += std::exp(sharpness * (gram(i, j) - hi));
    }
    total += hi + std::log(acc) / sharpness;
  }
  return total / static_cast<double>(w.rows());
}

Matrix smooth_prototype_loss_grad(const Matrix& w, double sharpness) {
  const Matrix gram = w * w.transpose();
  const Eigen::Index n = w.rows();
  const double scale = 1.0 / static_cast<double>(n);
  Matrix grad = Matrix::Zero(n, w.cols());
  Vector weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) hi = std::max(hi, gram(i, j));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      weights(j) = j == i ? 0.0 : std::exp(sharpness * (gram(i, j) - hi));
    }
    weights /= weights.sum();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      grad.row(i) += scale * weights(j) * w.row(j);
      grad.row(j) += scale * weights(j) * w.row(i);
    }
  }
  return grad;
}

double max_pairwise_cosine(const Matrix& w) {
  Matrix unit = w;
  unit.rowwise().normalize();
  return shifted_gram(unit).maxCoeff();
}

PrototypeSet project_to_sphere(const Matrix& raw) {
  Matrix out = raw;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw std::invalid_argument("project_to_sphere: row " + std::to_string(i) + " has zero or non-finite norm");
    }
    out.row(i) /= norm;
  }
  return PrototypeSet(std::move(out));
}

ProtoOptResult optimize_prototypes_with_trace(int count, int dim, const ProtoOptConfig& cfg) {
  if (count < 2 || dim < 2) throw std::invalid_argument("optimize_prototypes: need N >= 2 and dim >= 2");
  cfg.validate();

  auto loss = [&](const Matrix& w) {
    return cfg.smooth ? smooth_prototype_loss(w, cfg.sharpness) : prototype_loss(w);
  };
  auto grad = [&](const Matrix& w) {
    return cfg.smooth ? smooth_prototype_loss_grad(w, cfg.sharpness) : prototype_loss_grad(w);
  };

  ProtoOptResult best;
  best.final_loss = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(restart)};
    std::mt19937_64 rng(seq);
    Matrix w = random_unit_rows(count, dim, rng);

    const double initial = loss(w);
    Matrix best_w = w;
    double best_loss = initial;
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
      const double progress = cfg.steps > 1 ? static_cast<double>(step) / (cfg.steps - 1) : 1.0;
      const double lr = cfg.final_learning_rate +
                        0.5 * (cfg.learning_rate - cfg.final_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
      w = project_to_sphere(w - lr * grad(w)).matrix();
      const double value = loss(w);
      trace.push_back(value);
      // Subgradient steps are not monotone; keep the best iterate seen.
      if (value < best_loss) {
        best_loss = value;
        best_w = w;
      }
    }
    if (best_loss < best.final_loss) {
      best.prototypes = PrototypeSet(best_w);
      best.initial_loss = initial;
      best.final_loss = best_loss;
      best.trace = std::move(trace);
    }
  }
  return best;
}

}  // namespace goca
