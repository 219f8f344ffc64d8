#pragma once

#include <cstdint>
#include <vector>

#include "goca/matrix.hpp"

namespace goca {

// N unit-norm rows in dim dimensions, N >= 2, dim >= 2.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  // Throws std::invalid_argument if the shape or any row norm is off by more than 1e-9.
  explicit PrototypeSet(Matrix rows);

  const Matrix& matrix() const { return rows_; }
  Eigen::Index count() const { return rows_.rows(); }
  Eigen::Index dim() const { return rows_.cols(); }

 private:
  Matrix rows_;
};

struct ProtoOptConfig {
  int steps = 5000;
  double learning_rate = 0.1;
  double final_learning_rate = 1e-3;  // cosine decay endpoint
  std::uint64_t seed = 0;
  int restarts = 5;
  bool smooth = false;      // log-sum-exp instead of the hard row max
  double sharpness = 50.0;  // only used when smooth

  void validate() const;
};

// (1/N) sum_i max_j (W W^T - 2I)_ij.
double prototype_loss(const Matrix& w);

// Subgradient of prototype_loss, lowest-index tie-breaking for the row argmax.
Matrix prototype_loss_grad(const Matrix& w);

// Row max replaced by (1/s) log sum_{j != i} exp(s <w_i, w_j>).
double smooth_prototype_loss(const Matrix& w, double sharpness);
Matrix smooth_prototype_loss_grad(const Matrix& w, double sharpness);

// Largest off-diagonal cosine.
double max_pairwise_cosine(const Matrix& w);

// Row-wise L2 normalization. Zero rows are an error.
PrototypeSet project_to_sphere(const Matrix& raw);

struct ProtoOptResult {
  PrototypeSet prototypes;
  double initial_loss = 0.0;  // of the winning restart
  double final_loss = 0.0;
  std::vector<double> trace;  // winning restart, one entry per step
};

ProtoOptResult optimize_prototypes_with_trace(int count, int dim, const ProtoOptConfig& cfg);

inline PrototypeSet optimize_prototypes(int count, int dim, const ProtoOptConfig& cfg) {
  return optimize_prototypes_with_trace(count, dim, cfg).prototypes;
}

}  // namespace goca
