#pragma once

#include <cstdint>
#include <vector>

#include "goca/matrix.hpp"

namespace goca {

// Two-view benchmark. View A = [class signal (low noise) | distractor], where
// the distractor is one of `distractor_modes` strong directions picked
// independently of the class. View B = class signal under heavy noise.
struct SynthConfig {
  int num_classes = 4;
  int samples_per_class = 200;
  int signal_dim = 8;
  int distractor_dim = 8;
  int distractor_modes = 16;
  double distractor_strength = 3.0;
  double view_a_noise = 0.1;
  double view_b_noise = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PairedSample {
  Vector view_a;
  Vector view_b;
  int label = 0;
};

struct Dataset {
  Matrix view_a;            // samples x (signal_dim + distractor_dim)
  Matrix view_b;            // samples x signal_dim
  std::vector<int> labels;  // class ids, held out from training
  std::vector<int> distractor;  // distractor mode of each sample
  int num_classes = 0;

  Eigen::Index size() const { return view_a.rows(); }
  PairedSample sample(Eigen::Index i) const;
};

Dataset generate(const SynthConfig& cfg);

}  // namespace goca
