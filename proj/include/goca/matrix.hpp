#pragma once

#include <Eigen/Dense>

namespace goca {

// Row-major so that a row is one sample / one prototype.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Rows of unit-norm feature vectors (M x dim).
using FeatureBatch = Matrix;
// Feature-to-prototype distances (M x N).
using CostMatrix = Matrix;

}  // namespace goca
