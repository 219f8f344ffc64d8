#pragma once

#include <span>
#include <vector>

#include "goca/config.hpp"
#include "goca/eval.hpp"
#include "goca/ssl_engine.hpp"

namespace goca {

struct EvalRow {
  Mode mode = Mode::Goca;
  Condition condition = Condition::Fused;
  int seed = 0;
  MetricSummary summary;
};

// Data and training seeds for experiment seed index s.
Dataset dataset_for_seed(const RunConfig& cfg, int s);
TrainConfig train_config_for_seed(const RunConfig& cfg, Mode mode, int s);

// k-means (k = number of classes) on the three test conditions of a trained model.
std::vector<EvalRow> evaluate_model(const Model& model, const Dataset& data, const RunConfig& cfg, int s);

// Trains every mode on every seed (identical data across modes) and evaluates
// all test conditions. `jobs` > 1 trains (mode, seed) cells concurrently;
// results do not depend on it.
std::vector<EvalRow> run_ablation(const RunConfig& cfg, int jobs = 1);

double median(std::vector<double> values);
double median_accuracy(std::span<const EvalRow> rows, Mode mode, Condition condition);

struct GridCell {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<EvalRow> rows;  // fused condition, one per seed
  double median_accuracy = 0.0;
  double median_nmi = 0.0;
  double median_f1 = 0.0;
};

// GOCA trained for every (lambda1, lambda2) pair; fused cluster metrics per cell.
std::vector<GridCell> run_lambda_grid(const RunConfig& cfg, std::span<const double> lambda1s,
                                      std::span<const double> lambda2s, int jobs = 1);

}  // namespace goca
