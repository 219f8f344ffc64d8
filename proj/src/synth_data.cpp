#include "goca/synth_data.hpp"

#include <Eigen/QR>
#include <random>
#include <stdexcept>

namespace goca {

namespace {

Matrix random_unit_rows(int rows, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, dim);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  m.rowwise().normalize();
  return m;
}

// Vertices of a regular simplex (unit norm, pairwise cosine -1/(k-1)) in a
// random orthonormal frame, so class separation does not depend on the seed.
// Falls back to random directions when dim < k.
Matrix simplex_rows(int k, int dim, std::mt19937_64& rng) {
  if (dim < k) return random_unit_rows(k, dim, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix gauss(dim, k);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rng);
  const Matrix frame = Eigen::HouseholderQR<Matrix>(gauss).householderQ() * Matrix::Identity(dim, k);
  Matrix vertices = Matrix::Identity(k, k).rowwise() - Vector::Constant(k, 1.0 / k).transpose();
  vertices.rowwise().normalize();
  return vertices * frame.transpose();
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synth: num_classes must be >= 2");
  if (samples_per_class < 1 || signal_dim < 1 || distractor_dim < 1 || distractor_modes < 1) {
    throw std::invalid_argument("synth: sizes must be >= 1");
  }
  if (distractor_strength < 0.0 || view_a_noise < 0.0 || view_b_noise < 0.0) {
    throw std::invalid_argument("synth: strengths and noise levels must be >= 0");
  }
}

PairedSample Dataset::sample(Eigen::Index i) const {
  return {view_a.row(i).transpose(), view_b.row(i).transpose(), labels.at(static_cast<std::size_t>(i))};
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Matrix centroids_a = simplex_rows(cfg.num_classes, cfg.signal_dim, rng);
  const Matrix centroids_b = simplex_rows(cfg.num_classes, cfg.signal_dim, rng);
  const Matrix modes = random_unit_rows(cfg.distractor_modes, cfg.distractor_dim, rng);

  const int total = cfg.num_classes * cfg.samples_per_class;
  Dataset data;
  data.num_classes = cfg.num_classes;
  data.view_a.resize(total, cfg.signal_dim + cfg.distractor_dim);
  data.view_b.resize(total, cfg.signal_dim);
  data.labels.resize(static_cast<std::size_t>(total));
  data.distractor.resize(static_cast<std::size_t>(total));

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_mode(0, cfg.distractor_modes - 1);
  for (int idx = 0; idx < total; ++idx) {
    const int label = idx / cfg.samples_per_class;
    const int mode = pick_mode(rng);
    data.labels[static_cast<std::size_t>(idx)] = label;
    data.distractor[static_cast<std::size_t>(idx)] = mode;
    for (int d = 0; d < cfg.signal_dim; ++d) {
      data.view_a(idx, d) = centroids_a(label, d) + cfg.view_a_noise * normal(rng);
    }
    for (int d = 0; d < cfg.distractor_dim; ++d) {
      data.view_a(idx, cfg.signal_dim + d) = cfg.distractor_strength * modes(mode, d);
    }
    for (int d = 0; d < cfg.signal_dim; ++d) {
      data.view_b(idx, d) = centroids_b(label, d) + cfg.view_b_noise * normal(rng);
    }
  }
  return data;
}

}  // namespace goca
