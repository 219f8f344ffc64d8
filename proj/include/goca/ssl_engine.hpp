#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "goca/matrix.hpp"
#include "goca/ot_core.hpp"
#include "goca/prototypes.hpp"
#include "goca/synth_data.hpp"

namespace goca {

// View-merging strategies.
//   SView: two independent models (backbone, head, prototypes) per view.
//   Avg:   backbone outputs averaged into one shared head.
//   Sep:   separate backbones, shared head and prototypes, plain assignments.
//   Goca:  as Sep, but each view's assignment is guided by the other's.
enum class Mode { SView, Avg, Sep, Goca };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

// y = x W^T + b.
struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Backbones map raw view vectors through one tanh hidden layer; heads project
// to feature space before L2 normalization. heads[1] is only used by SView.
struct Parameters {
  std::array<Layer, 2> backbones;
  std::array<Layer, 2> heads;

  Eigen::Index size() const;
  Vector flatten() const;
  void unflatten(const Vector& flat);
  // this += scale * other
  void add_scaled(const Parameters& other, double scale);
  Parameters zeros_like() const;
};

struct TrainConfig {
  Mode mode = Mode::Goca;
  int epochs = 60;
  int batch_size = 128;
  double temperature = 0.1;
  double learning_rate = 0.1;
  int hidden_dim = 32;
  int feature_dim = 16;
  int num_prototypes = 64;
  double aug_noise = 0.1;
  double aug_dropout = 0.1;
  std::uint64_t seed = 0;
  SolverConfig solver;
  ProtoOptConfig proto;

  void validate() const;
};

struct Model {
  Mode mode = Mode::Goca;
  Parameters params;
  PrototypeSet prototypes_a;
  PrototypeSet prototypes_b;  // SView only; other modes share prototypes_a
};

// Two augmentations (t, s) of each view for one minibatch.
struct TwoViewBatch {
  Matrix a_t, a_s, b_t, b_s;
  Eigen::Index size() const { return a_t.rows(); }
};

Parameters init_parameters(Mode mode, Eigen::Index input_a, Eigen::Index input_b, int hidden_dim, int feature_dim,
                           std::uint64_t seed);

// Softmax over prototypes of <f_i, p_n> / temperature.
Matrix prototype_scores(const FeatureBatch& features, const Matrix& prototypes, double temperature);

// (1/M) sum_i [ l(d_t_i, g_s_i) + l(d_s_i, g_t_i) ] with l(d, g) = -sum_n d_n log g_n.
// Targets are probability rows (plans rescaled by M).
double swapped_loss(const Matrix& targets_t, const Matrix& scores_s, const Matrix& targets_s, const Matrix& scores_t);

// Per-branch assignment targets, rows rescaled to sum to 1. Branch order:
// SView/Sep/Goca -> {view a, view b}; Avg -> {fused}.
struct StepTargets {
  std::vector<Matrix> t;
  std::vector<Matrix> s;
  int solves = 0;
  int nonconverged = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  Parameters grad;
};

struct StepResult {
  double loss = 0.0;
  Parameters grad;
  StepTargets targets;
};

// Encodes the batch and solves for assignments. No gradient flows through this.
StepTargets compute_targets(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg);

// Swapped-prediction loss summed over branches, and its gradient with respect
// to the encoder parameters, holding `targets` fixed.
LossAndGrad loss_with_targets(const Model& model, const TwoViewBatch& batch, const StepTargets& targets,
                              double temperature);

StepResult goca_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg);
StepResult baseline_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg);
// Dispatches on model.mode.
StepResult train_step(const Model& model, const TwoViewBatch& batch, const TrainConfig& cfg);

// Additive Gaussian noise then per-coordinate dropout (zeroing, no rescale).
Matrix augment(const Matrix& x, double noise, double dropout, std::mt19937_64& rng);

enum class Condition { ViewA, ViewB, Fused };
std::string_view condition_name(Condition c);

// Unit-norm test features, no augmentation. Fused averages the two views'
// features (Avg uses its native averaged branch) and renormalizes.
FeatureBatch embed(const Model& model, const Matrix& view_a, const Matrix& view_b, Condition condition);

struct TrainResult {
  Model model;
  Model initial;
  std::vector<double> loss_trace;  // one entry per step
  int steps_per_epoch = 0;
  int nonconverged = 0;
  int solves = 0;
};

// Optimizes (then freezes) prototypes, then runs `epochs` of shuffled minibatch SGD.
TrainResult train(const Dataset& data, const TrainConfig& cfg);
// Same with caller-supplied frozen prototypes (prototypes_b only read for SView).
TrainResult train(const Dataset& data, const TrainConfig& cfg, const PrototypeSet& prototypes_a,
                  const PrototypeSet& prototypes_b);

}  // namespace goca
