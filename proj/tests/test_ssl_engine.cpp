#include <doctest.h>

#include <cmath>
#include <random>

#include "goca/oracle.hpp"
#include "goca/ssl_engine.hpp"
#include "test_util.hpp"

using namespace goca;
using goca::test::max_diff;
using goca::test::random_matrix;
using goca::test::random_unit_rows;

namespace {

Model small_model(Mode mode, Eigen::Index in_a, Eigen::Index in_b, std::uint64_t seed) {
  ProtoOptConfig proto;
  proto.steps = 300;
  proto.restarts = 1;
  proto.seed = seed;
  Model model;
  model.mode = mode;
  model.params = init_parameters(mode, in_a, in_b, 6, 8, seed);
  model.prototypes_a = optimize_prototypes(4, 8, proto);
  model.prototypes_b = model.prototypes_a;
  return model;
}

TwoViewBatch random_batch(Eigen::Index m, Eigen::Index in_a, Eigen::Index in_b, std::mt19937_64& rng) {
  return {random_matrix(m, in_a, -1.0, 1.0, rng), random_matrix(m, in_a, -1.0, 1.0, rng),
          random_matrix(m, in_b, -1.0, 1.0, rng), random_matrix(m, in_b, -1.0, 1.0, rng)};
}

Matrix probability_rows(Eigen::Index m, Eigen::Index n, std::mt19937_64& rng) {
  Matrix d = random_matrix(m, n, 0.01, 1.0, rng);
  return d.array().colwise() / d.rowwise().sum().array();
}

}  // namespace

TEST_CASE("modes") {
  for (Mode m : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS(parse_mode("bogus"));
}

TEST_CASE("prototype_scores") {
  const Matrix p = Matrix::Identity(2, 2);
  Matrix f(1, 2);
  f << 1.0, 0.0;
  const Matrix sharp = prototype_scores(f, p, 0.01);
  CHECK(sharp(0, 0) == doctest::Approx(1.0));
  CHECK(sharp(0, 1) < 1e-40);

  Matrix eq(1, 2);
  eq << std::sqrt(0.5), std::sqrt(0.5);
  CHECK(max_diff(prototype_scores(eq, p, 0.1), Matrix::Constant(1, 2, 0.5)) < 1e-15);

  std::mt19937_64 rng(31);
  const Matrix feats = random_unit_rows(6, 5, rng);
  const Matrix protos = random_unit_rows(4, 5, rng);
  const Matrix g = prototype_scores(feats, protos, 1.0);
  for (int i = 0; i < 6; ++i) {
    long double z = 0.0L;
    for (int n = 0; n < 4; ++n) z += std::exp(static_cast<long double>(feats.row(i).dot(protos.row(n))));
    for (int n = 0; n < 4; ++n) {
      const long double e = std::exp(static_cast<long double>(feats.row(i).dot(protos.row(n)))) / z;
      CHECK(std::abs(g(i, n) - static_cast<double>(e)) < 1e-15);
    }
  }
  CHECK((g.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Matrix sharp_rows = prototype_scores(random_unit_rows(30, 5, rng), protos, 0.01);
  CHECK((sharp_rows.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("swapped_loss") {
  std::mt19937_64 rng(32);
  SUBCASE("one-hot targets predicted exactly") {
    Matrix d = Matrix::Zero(3, 4);
    d(0, 1) = d(1, 3) = d(2, 0) = 1.0;
    Matrix g = d * (1.0 - 1e-12) + Matrix::Constant(3, 4, 1e-12 / 4);
    CHECK(swapped_loss(d, g, d, g) < 1e-10);
  }
  SUBCASE("uniform rows") {
    const Matrix u = Matrix::Constant(5, 4, 0.25);
    CHECK(swapped_loss(u, u, u, u) == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-15));
  }
  SUBCASE("direct summation and symmetry") {
    const Matrix dt = probability_rows(6, 4, rng), ds = probability_rows(6, 4, rng);
    const Matrix gt = probability_rows(6, 4, rng), gs = probability_rows(6, 4, rng);
    long double direct = 0.0L;
    for (int i = 0; i < 6; ++i)
      for (int n = 0; n < 4; ++n)
        direct -= dt(i, n) * std::log(static_cast<long double>(gs(i, n))) +
                  ds(i, n) * std::log(static_cast<long double>(gt(i, n)));
    CHECK(std::abs(swapped_loss(dt, gs, ds, gt) - static_cast<double>(direct / 6)) < 1e-12);
    CHECK(swapped_loss(dt, gs, ds, gt) == swapped_loss(ds, gt, dt, gs));
  }
  SUBCASE("cross-entropy floor") {
    const Matrix d = probability_rows(6, 4, rng);
    const double h = -(d.array() * d.array().log()).sum() / 6.0;
    CHECK(std::abs(swapped_loss(d, d, d, d) - 2.0 * h) < 1e-12);
  }
  SUBCASE("shape mismatch") { CHECK_THROWS(swapped_loss(Matrix::Ones(2, 2), Matrix::Ones(3, 2), Matrix::Ones(2, 2), Matrix::Ones(2, 2))); }
}

TEST_CASE("Parameters round trip") {
  const Parameters p = init_parameters(Mode::SView, 5, 3, 6, 8, 1);
  Parameters q = p.zeros_like();
  CHECK(q.flatten().cwiseAbs().maxCoeff() == 0.0);
  q.unflatten(p.flatten());
  CHECK(q.flatten() == p.flatten());
  q.add_scaled(p, -1.0);
  CHECK(q.flatten().cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.size() == p.flatten().size());
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(33);
  TrainConfig cfg;
  cfg.temperature = 1.0;
  for (Mode mode : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    CAPTURE(mode_name(mode));
    cfg.mode = mode;
    const Model model = small_model(mode, 5, 3, 34);
    const TwoViewBatch batch = random_batch(8, 5, 3, rng);
    const StepResult step = train_step(model, batch, cfg);
    const oracle::Vec numeric = oracle::finite_diff_grad(
        [&](const oracle::Vec& x) {
          Model probe = model;
          probe.params.unflatten(x);
          return loss_with_targets(probe, batch, step.targets, cfg.temperature).loss;
        },
        model.params.flatten(), 1e-5);
    const double rel = (step.grad.flatten() - numeric).norm() / std::max(numeric.norm(), 1e-12);
    CHECK(rel <= 1e-4);
    CHECK(step.targets.t.size() == (mode == Mode::Avg ? 1u : 2u));
  }
}

TEST_CASE("targets are probability rows") {
  std::mt19937_64 rng(35);
  TrainConfig cfg;
  for (Mode mode : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    cfg.mode = mode;
    const StepTargets t = compute_targets(small_model(mode, 5, 3, 36), random_batch(16, 5, 3, rng), cfg);
    for (const auto* side : {&t.t, &t.s})
      for (const Matrix& d : *side) CHECK((d.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-6);
    CHECK(t.nonconverged == 0);
    CHECK(t.solves == (mode == Mode::Goca ? 8 : mode == Mode::Avg ? 2 : 4));
  }
}

TEST_CASE("guidance off reduces goca to sep") {
  std::mt19937_64 rng(37);
  TrainConfig cfg;
  cfg.solver.lambda2 = 0.0;
  Model model = small_model(Mode::Sep, 5, 3, 38);
  const TwoViewBatch batch = random_batch(16, 5, 3, rng);
  const StepResult sep = baseline_step(model, batch, cfg);
  model.mode = Mode::Goca;
  cfg.mode = Mode::Goca;
  const StepResult goca = goca_step(model, batch, cfg);
  CHECK(sep.loss == goca.loss);
  CHECK(sep.grad.flatten() == goca.grad.flatten());
  CHECK_THROWS(baseline_step(model, batch, cfg));
}

TEST_CASE("avg with identical views matches sview") {
  std::mt19937_64 rng(39);
  TrainConfig cfg;
  Model avg = small_model(Mode::Avg, 5, 5, 40);
  avg.params.backbones[1] = avg.params.backbones[0];
  Model sview = avg;
  sview.mode = Mode::SView;
  sview.params.heads[1] = sview.params.heads[0];
  TwoViewBatch batch = random_batch(16, 5, 5, rng);
  batch.b_t = batch.a_t;
  batch.b_s = batch.a_s;
  cfg.mode = Mode::Avg;
  const StepResult a = train_step(avg, batch, cfg);
  cfg.mode = Mode::SView;
  const StepResult s = train_step(sview, batch, cfg);
  CHECK(max_diff(a.targets.t[0], s.targets.t[0]) <= 1e-12);
  // SView counts the common view twice, once per branch.
  CHECK(std::abs(2.0 * a.loss - s.loss) <= 1e-12);

  const Matrix x = random_matrix(10, 5, -1.0, 1.0, rng);
  CHECK(max_diff(embed(avg, x, x, Condition::Fused), embed(sview, x, x, Condition::ViewA)) <= 1e-12);
}

TEST_CASE("augment") {
  std::mt19937_64 rng(41);
  const Matrix x = random_matrix(50, 6, -1.0, 1.0, rng);
  std::mt19937_64 a(1), b(1);
  CHECK(augment(x, 0.1, 0.1, a) == augment(x, 0.1, 0.1, b));
  CHECK(augment(x, 0.0, 0.0, a) == x);
  const Matrix dropped = augment(x, 0.0, 0.5, a);
  const double zeros = (dropped.array() == 0.0).cast<double>().mean();
  CHECK(zeros > 0.35);
  CHECK(zeros < 0.65);
}

TEST_CASE("embed produces unit rows") {
  std::mt19937_64 rng(42);
  const Matrix a = random_matrix(10, 5, -1.0, 1.0, rng);
  const Matrix b = random_matrix(10, 3, -1.0, 1.0, rng);
  for (Mode mode : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    const Model model = small_model(mode, 5, 3, 43);
    for (Condition c : {Condition::ViewA, Condition::ViewB, Condition::Fused}) {
      const Matrix f = embed(model, a, b, c);
      CHECK(f.rows() == 10);
      CHECK((f.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("train") {
  SynthConfig synth;
  synth.samples_per_class = 40;
  synth.distractor_strength = 0.0;
  synth.view_a_noise = 0.05;
  synth.view_b_noise = 0.05;
  const Dataset data = generate(synth);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.num_prototypes = 8;
  cfg.proto.steps = 300;
  cfg.proto.restarts = 1;
  SUBCASE("zero epochs leave the encoders unchanged") {
    cfg.epochs = 0;
    const TrainResult r = train(data, cfg);
    CHECK(r.loss_trace.empty());
    CHECK(r.model.params.flatten() == r.initial.params.flatten());
  }
  SUBCASE("loss decreases") {
    cfg.epochs = 50;
    const TrainResult r = train(data, cfg);
    REQUIRE(r.steps_per_epoch == 5);
    REQUIRE(r.loss_trace.size() == 250);
    double first = 0.0, last = 0.0;
    for (int k = 0; k < 5; ++k) {
      first += r.loss_trace[static_cast<std::size_t>(k)];
      last += r.loss_trace[r.loss_trace.size() - 1 - static_cast<std::size_t>(k)];
    }
    CHECK(last < first);
    CHECK(r.nonconverged == 0);
    // Prototypes stay frozen and unit norm.
    CHECK((r.model.prototypes_a.matrix().rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(r.model.prototypes_a.matrix() == r.initial.prototypes_a.matrix());
  }
  SUBCASE("deterministic under seed") {
    cfg.epochs = 2;
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.model.params.flatten() == b.model.params.flatten());
  }
}
