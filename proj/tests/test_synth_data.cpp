#include <doctest.h>

#include <cmath>
#include <map>

#include "goca/eval.hpp"
#include "goca/synth_data.hpp"

using namespace goca;

TEST_CASE("noiseless views cluster perfectly") {
  SynthConfig cfg;
  cfg.distractor_strength = 0.0;
  cfg.view_a_noise = 0.0;
  cfg.view_b_noise = 0.0;
  const Dataset d = generate(cfg);
  for (const Matrix* view : {&d.view_a, &d.view_b}) {
    const KMeansResult km = kmeans(*view, cfg.num_classes, 1);
    CHECK(majority_vote_metrics(km.labels, d.labels).accuracy == 1.0);
  }
}

TEST_CASE("determinism and shape") {
  SynthConfig cfg;
  cfg.seed = 9;
  const Dataset a = generate(cfg);
  const Dataset b = generate(cfg);
  CHECK(a.view_a == b.view_a);
  CHECK(a.view_b == b.view_b);
  CHECK(a.labels == b.labels);
  CHECK(a.distractor == b.distractor);
  CHECK(a.size() == 800);
  CHECK(a.view_a.cols() == cfg.signal_dim + cfg.distractor_dim);
  CHECK(a.view_b.cols() == cfg.signal_dim);
  cfg.seed = 10;
  CHECK(generate(cfg).view_a != a.view_a);

  const PairedSample s = a.sample(3);
  CHECK(s.view_a == Vector(a.view_a.row(3).transpose()));
  CHECK(s.label == a.labels[3]);
}

TEST_CASE("label balance and distractor independence") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const Dataset d = generate(cfg);
    std::map<int, int> counts;
    for (int y : d.labels) ++counts[y];
    CHECK(counts.size() == 4u);
    for (auto [label, n] : counts) CHECK(n == cfg.samples_per_class);

    const auto n = static_cast<double>(d.size());
    double my = 0, md = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      my += d.labels[static_cast<std::size_t>(i)];
      md += d.distractor[static_cast<std::size_t>(i)];
    }
    my /= n;
    md /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double y = d.labels[static_cast<std::size_t>(i)] - my;
      const double x = d.distractor[static_cast<std::size_t>(i)] - md;
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) <= 0.1);
  }
}

TEST_CASE("default difficulty band") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const Dataset d = generate(cfg);
    const double acc_a = majority_vote_metrics(kmeans(d.view_a, 4, seed).labels, d.labels).accuracy;
    const double acc_b = majority_vote_metrics(kmeans(d.view_b, 4, seed).labels, d.labels).accuracy;
    CHECK(acc_a <= 0.45);
    CHECK(acc_b >= 0.5);
    CHECK(acc_b <= 0.9);
  }
}

TEST_CASE("invalid configs") {
  SynthConfig cfg;
  cfg.num_classes = 1;
  CHECK_THROWS(generate(cfg));
  cfg = SynthConfig{};
  cfg.view_b_noise = -1.0;
  CHECK_THROWS(generate(cfg));
}
