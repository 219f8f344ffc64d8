#include "goca/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>

#include "goca/eval.hpp"
#include "goca/experiments.hpp"
#include "goca/guided_ot.hpp"
#include "goca/oracle.hpp"
#include "goca/ot_core.hpp"
#include "goca/prototypes.hpp"
#include "goca/ssl_engine.hpp"

namespace goca::checks {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

Matrix unit_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  m.rowwise().normalize();
  return m;
}

// A positive prior with some entries zeroed so the floor is exercised.
Matrix random_prior(Eigen::Index rows, Eigen::Index cols, double floor, std::mt19937_64& rng) {
  Matrix p = uniform_matrix(rows, cols, 0.0, 1.0, rng);
  std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
  if (rng() % 4 == 0) p.data()[pick(rng)] = 0.0;
  return clamp_prior(p, floor);
}

// Residual statistics of converged plans, shared by the oracle batteries.
struct Feasibility {
  int converged = 0;
  int total = 0;
  double worst = 0.0;

  void add(const SinkhornResult& r) {
    ++total;
    if (!r.converged) return;
    ++converged;
    worst = std::max({worst, r.row_residual, r.col_residual});
  }
};

struct OracleBattery {
  double golden_worst = 0.0;
  double mirror_worst = 0.0;
  int golden_count = 0;
  int mirror_count = 0;
  int oracle_failures = 0;  // mirror descent not converged
  Feasibility feasibility;
  double seconds = 0.0;
};

// 200 2x2 instances against golden section (and, with a prior, also mirror
// descent), then 50 3x3 and 50 4x4 instances against mirror descent.
OracleBattery oracle_battery(bool guided) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(guided ? 202 : 101);
  const double lambda1s[] = {0.02, 0.1, 0.5};
  const double lambda2s[] = {0.01, 0.03, 1.0};
  OracleBattery out;
  auto solve = [&](const Matrix& c, const std::optional<Matrix>& prior, const SolverConfig& cfg,
                   const Marginals& mg) {
    SinkhornResult r = prior ? guided_sinkhorn(c, *prior, mg, cfg) : sinkhorn(c, mg, cfg);
    out.feasibility.add(r);
    return r;
  };
  auto to_oracle = [](const std::optional<Matrix>& p) -> std::optional<oracle::Mat> {
    if (!p) return std::nullopt;
    return oracle::Mat(*p);
  };

  for (int t = 0; t < 300; ++t) {
    const Eigen::Index n = t < 200 ? 2 : (t < 250 ? 3 : 4);
    SolverConfig cfg;
    cfg.lambda1 = lambda1s[t % 3];
    cfg.lambda2 = guided ? lambda2s[(t / 3) % 3] : 0.0;
    const Matrix c = uniform_matrix(n, n, -1.0, 1.0, rng);
    std::optional<Matrix> prior;
    if (guided) prior = random_prior(n, n, cfg.prior_floor, rng);
    const Marginals mg = Marginals::uniform(n, n);
    const SinkhornResult r = solve(c, prior, cfg, mg);
    const oracle::Mat plan = r.plan;

    if (n == 2) {
      const auto g = oracle::golden_section_2x2(c, to_oracle(prior), mg.row, mg.col, cfg.lambda1, cfg.lambda2);
      out.golden_worst = std::max(out.golden_worst, (g.plan - plan).cwiseAbs().maxCoeff());
      ++out.golden_count;
      if (!guided) continue;
    }
    const auto md = oracle::mirror_descent_small(c, to_oracle(prior), mg.row, mg.col, cfg.lambda1, cfg.lambda2);
    const double md_residual = std::max((md.plan.rowwise().sum() - mg.row).cwiseAbs().maxCoeff(),
                                        (md.plan.colwise().sum().transpose() - mg.col).cwiseAbs().maxCoeff());
    if (!md.converged || md_residual > 1e-12) ++out.oracle_failures;
    out.mirror_worst = std::max(out.mirror_worst, (md.plan - plan).cwiseAbs().maxCoeff());
    ++out.mirror_count;
  }
  out.seconds = seconds_since(t0);
  return out;
}

struct ReductionBattery {
  double worst = 0.0;
  Feasibility feasibility;
};

// guided_sinkhorn(C, P, l1, l2) against sinkhorn(C - l2 log P) at l1 + l2.
ReductionBattery reduction_battery() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<Eigen::Index> size(2, 8);
  const double lambda1s[] = {0.02, 0.05, 0.1};
  const double lambda2s[] = {0.01, 0.03, 0.3, 1.0};
  ReductionBattery out;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index m = size(rng);
    const Eigen::Index n = size(rng);
    SolverConfig cfg;
    cfg.lambda1 = lambda1s[t % 3];
    cfg.lambda2 = lambda2s[(t / 3) % 4];
    const Matrix c = -(unit_rows(m, 4, rng) * unit_rows(n, 4, rng).transpose());
    const Matrix prior = random_prior(m, n, cfg.prior_floor, rng);
    const Marginals mg = Marginals::uniform(m, n);
    const SinkhornResult guided = guided_sinkhorn(c, prior, mg, cfg);
    SolverConfig plain = cfg;
    plain.lambda1 = cfg.lambda1 + cfg.lambda2;
    plain.lambda2 = 0.0;
    const Matrix shifted = c - cfg.lambda2 * Matrix(prior.array().log());
    const SinkhornResult reduced = sinkhorn(shifted, mg, plain);
    out.feasibility.add(guided);
    out.feasibility.add(reduced);
    out.worst = std::max(out.worst, max_abs_diff(guided.plan, reduced.plan));
  }
  return out;
}

struct Context {
  const RunConfig& cfg;
  int jobs = 1;
  std::optional<OracleBattery> plain;
  std::optional<OracleBattery> guided;
  std::optional<ReductionBattery> reduction;
  std::optional<std::vector<EvalRow>> ablation;

  const OracleBattery& plain_battery() {
    if (!plain) plain = oracle_battery(false);
    return *plain;
  }
  const OracleBattery& guided_battery() {
    if (!guided) guided = oracle_battery(true);
    return *guided;
  }
  const ReductionBattery& reduction_results() {
    if (!reduction) reduction = reduction_battery();
    return *reduction;
  }
  const std::vector<EvalRow>& ablation_rows() {
    if (!ablation) ablation = run_ablation(cfg, jobs);
    return *ablation;
  }
};

std::string battery_detail(const OracleBattery& b) {
  return fmt("golden max diff %.2e over %d, mirror max diff %.2e over %d, oracle failures %d, %.1f s",
             b.golden_worst, b.golden_count, b.mirror_worst, b.mirror_count, b.oracle_failures, b.seconds);
}

bool battery_ok(const OracleBattery& b) {
  return b.golden_worst <= 1e-6 && b.mirror_worst <= 1e-5 && b.oracle_failures == 0 &&
         b.feasibility.converged == b.feasibility.total;
}

CheckResult oracle_plain(Context& ctx) {
  const auto& b = ctx.plain_battery();
  return {1, "", battery_ok(b) && b.seconds < 30.0, battery_detail(b)};
}

CheckResult oracle_guided(Context& ctx) {
  const auto& b = ctx.guided_battery();
  return {2, "", battery_ok(b) && b.seconds < 30.0, battery_detail(b)};
}

CheckResult kernel_reduction(Context& ctx) {
  const auto& b = ctx.reduction_results();
  return {3, "", b.worst <= 1e-8, fmt("max diff %.2e over 100 instances", b.worst)};
}

CheckResult feasibility(Context& ctx) {
  Feasibility all;
  for (const Feasibility* f :
       {&ctx.plain_battery().feasibility, &ctx.guided_battery().feasibility, &ctx.reduction_results().feasibility}) {
    all.converged += f->converged;
    all.total += f->total;
    all.worst = std::max(all.worst, f->worst);
  }
  return {4, "", all.worst <= 1e-8 && all.converged == all.total,
          fmt("%d/%d converged, worst residual %.2e", all.converged, all.total, all.worst)};
}

CheckResult limits(Context&) {
  std::mt19937_64 rng(505);
  double reduce_worst = 0.0;
  double dominance_worst = 0.0;
  double scale_worst = 0.0;
  int kl_violations = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index m = 2 + t % 5;
    const Eigen::Index n = 2 + (t / 5) % 4;
    const Marginals mg = Marginals::uniform(m, n);
    const Matrix c = uniform_matrix(m, n, -1.0, 1.0, rng);
    const Matrix prior = uniform_matrix(m, n, 1e-3, 1.0, rng);

    SolverConfig cfg;
    cfg.lambda2 = 0.0;
    reduce_worst = std::max(reduce_worst, max_abs_diff(guided_sinkhorn(c, prior, mg, cfg).plan,
                                                       sinkhorn(c, mg, cfg).plan));

    SolverConfig loose;
    loose.lambda1 = 0.1;
    const Matrix feasible_prior = sinkhorn(uniform_matrix(m, n, -1.0, 1.0, rng), mg, loose).plan;
    SolverConfig heavy;
    heavy.lambda2 = 1e3;
    dominance_worst = std::max(
        dominance_worst, max_abs_diff(guided_sinkhorn(c, feasible_prior, mg, heavy).plan, feasible_prior));

    SolverConfig tight;
    tight.tolerance = 1e-12;
    const Matrix base = guided_sinkhorn(c, prior, mg, tight).plan;
    for (double scale : {1e-3, 1.0, 1e3}) {
      scale_worst = std::max(scale_worst, max_abs_diff(guided_sinkhorn(c, scale * prior, mg, tight).plan, base));
    }

    double previous = std::numeric_limits<double>::infinity();
    for (double l2 : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      tight.lambda2 = l2;
      const double kl = kl_divergence(guided_sinkhorn(c, prior, mg, tight).plan, prior);
      if (kl > previous + 1e-10) ++kl_violations;
      previous = kl;
    }
  }
  const bool ok = reduce_worst <= 1e-9 && dominance_worst <= 1e-3 && scale_worst <= 1e-9 && kl_violations == 0;
  return {5, "", ok,
          fmt("lambda2=0 diff %.2e, lambda2=1e3 prior gap %.2e, prior-scale diff %.2e, KL increases %d", reduce_worst,
              dominance_worst, scale_worst, kl_violations)};
}

bool has_unique_row_max(const Matrix& w, double gap) {
  const Matrix g = w * w.transpose();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    double second = best;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (j == i) continue;
      if (g(i, j) > best) {
        second = best;
        best = g(i, j);
      } else if (g(i, j) > second) {
        second = g(i, j);
      }
    }
    if (best - second < gap) return false;
  }
  return true;
}

double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max(numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / scale;
}

CheckResult prototypes(Context&) {
  const auto t0 = Clock::now();
  ProtoOptConfig cfg;
  double norm_worst = 0.0;
  auto norm_gap = [](const PrototypeSet& p) {
    return (p.matrix().rowwise().norm().array() - 1.0).abs().maxCoeff();
  };

  ProtoOptConfig pair = cfg;
  pair.steps = 2000;
  const PrototypeSet antipodal = optimize_prototypes(2, 3, pair);
  const double pair_gap = std::abs(prototype_loss(antipodal.matrix()) + 1.0);
  norm_worst = std::max(norm_worst, norm_gap(antipodal));

  double simplex_worst = 0.0;
  for (auto [n, dim] : {std::pair{3, 2}, {4, 3}, {5, 4}}) {
    const PrototypeSet p = optimize_prototypes(n, dim, cfg);
    simplex_worst = std::max(simplex_worst, std::abs(max_pairwise_cosine(p.matrix()) + 1.0 / (n - 1)));
    norm_worst = std::max(norm_worst, norm_gap(p));
  }

  std::mt19937_64 rng(606);
  double grad_worst = 0.0;
  int points = 0;
  while (points < 20) {
    const Matrix w = unit_rows(5, 4, rng);
    if (!has_unique_row_max(w, 1e-3)) continue;
    ++points;
    const Matrix analytic = prototype_loss_grad(w);
    const oracle::Vec x = Eigen::Map<const Vector>(w.data(), w.size());
    const oracle::Vec numeric = oracle::finite_diff_grad(
        [&](const oracle::Vec& v) {
          const Matrix wv = Eigen::Map<const Matrix>(v.data(), w.rows(), w.cols());
          return prototype_loss(wv);
        },
        x, 1e-6);
    grad_worst = std::max(grad_worst, relative_error(Eigen::Map<const Vector>(analytic.data(), analytic.size()),
                                                     numeric));
  }
  const double secs = seconds_since(t0);
  const bool ok = pair_gap <= 1e-3 && simplex_worst <= 1e-2 && norm_worst <= 1e-9 && grad_worst <= 1e-4 &&
                  secs < 120.0;
  return {6, "", ok,
          fmt("N=2 loss gap %.2e, simplex cosine gap %.2e, norm gap %.2e, gradient rel. error %.2e", pair_gap,
              simplex_worst, norm_worst, grad_worst)};
}

TwoViewBatch random_batch(Eigen::Index m, Eigen::Index in_a, Eigen::Index in_b, std::mt19937_64& rng) {
  return {uniform_matrix(m, in_a, -1.0, 1.0, rng), uniform_matrix(m, in_a, -1.0, 1.0, rng),
          uniform_matrix(m, in_b, -1.0, 1.0, rng), uniform_matrix(m, in_b, -1.0, 1.0, rng)};
}

Model tiny_model(Mode mode, std::uint64_t seed) {
  ProtoOptConfig proto;
  proto.steps = 500;
  proto.restarts = 1;
  proto.seed = seed;
  Model model;
  model.mode = mode;
  model.params = init_parameters(mode, 5, 3, 6, 8, seed);
  model.prototypes_a = optimize_prototypes(4, 8, proto);
  proto.seed = seed + 1;
  model.prototypes_b = mode == Mode::SView ? optimize_prototypes(4, 8, proto) : model.prototypes_a;
  return model;
}

CheckResult gradients(Context&) {
  std::mt19937_64 rng(707);

  // Loss floor: predictions equal to the targets.
  double floor_gap = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index m = 8;
    const Eigen::Index n = 4;
    const Matrix c = uniform_matrix(m, n, -1.0, 1.0, rng);
    SolverConfig cfg;
    cfg.lambda1 = 0.3;
    const Matrix dt = sinkhorn(c, Marginals::uniform(m, n), cfg).plan * static_cast<double>(m);
    const Matrix ds = sinkhorn(-c, Marginals::uniform(m, n), cfg).plan * static_cast<double>(m);
    auto mean_entropy = [](const Matrix& d) {
      double h = 0.0;
      for (Eigen::Index k = 0; k < d.size(); ++k) {
        if (d.data()[k] > 0.0) h -= d.data()[k] * std::log(d.data()[k]);
      }
      return h / static_cast<double>(d.rows());
    };
    // rows of dt, ds sum to 1 up to solver tolerance; normalize for an exact floor
    const Matrix pt = dt.array().colwise() / dt.rowwise().sum().array();
    const Matrix ps = ds.array().colwise() / ds.rowwise().sum().array();
    floor_gap = std::max(floor_gap, std::abs(swapped_loss(pt, pt, ps, ps) - (mean_entropy(pt) + mean_entropy(ps))));
  }

  // Analytic encoder gradients against central differences, targets held fixed.
  double grad_worst = 0.0;
  TrainConfig cfg;
  cfg.temperature = 1.0;
  for (Mode mode : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    for (int rep = 0; rep < 3; ++rep) {
      cfg.mode = mode;
      const Model model = tiny_model(mode, 70 + static_cast<std::uint64_t>(rep));
      const TwoViewBatch batch = random_batch(8, 5, 3, rng);
      const StepResult step =
          mode == Mode::Goca ? goca_step(model, batch, cfg) : baseline_step(model, batch, cfg);
      const oracle::Vec numeric = oracle::finite_diff_grad(
          [&](const oracle::Vec& x) {
            Model probe = model;
            probe.params.unflatten(x);
            return loss_with_targets(probe, batch, step.targets, cfg.temperature).loss;
          },
          model.params.flatten(), 1e-5);
      grad_worst = std::max(grad_worst, relative_error(step.grad.flatten(), numeric));
    }
  }

  // Stop-gradient contract: more solver iterations after convergence barely move
  // the loss or gradients.
  double loss_drift = 0.0;
  double grad_drift = 0.0;
  for (Mode mode : {Mode::Sep, Mode::Goca}) {
    cfg.mode = mode;
    const Model model = tiny_model(mode, 90);
    const TwoViewBatch batch = random_batch(8, 5, 3, rng);
    TrainConfig longer = cfg;
    longer.solver.tolerance = 1e-12;
    const StepResult a = train_step(model, batch, cfg);
    const StepResult b = train_step(model, batch, longer);
    loss_drift = std::max(loss_drift, std::abs(a.loss - b.loss));
    grad_drift = std::max(grad_drift, (a.grad.flatten() - b.grad.flatten()).cwiseAbs().maxCoeff());
  }

  const bool ok = floor_gap <= 1e-12 && grad_worst <= 1e-4 && loss_drift < 1e-8 && grad_drift <= 1e-7;
  return {7, "", ok,
          fmt("floor gap %.2e, gradient rel. error %.2e (4 modes), stop-gradient drift loss %.2e grad %.2e",
              floor_gap, grad_worst, loss_drift, grad_drift)};
}

CheckResult mode_collapse(Context&) {
  SynthConfig synth;
  synth.seed = 808;
  const Dataset data = generate(synth);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 4;
  cfg.seed = 808;
  cfg.solver.lambda2 = 0.0;
  cfg.mode = Mode::Sep;
  const TrainResult sep = train(data, cfg);
  cfg.mode = Mode::Goca;
  const TrainResult goca = train(data, cfg);
  const std::size_t steps = std::min(sep.loss_trace.size(), goca.loss_trace.size());
  std::size_t first_diff = steps;
  for (std::size_t k = 0; k < steps; ++k) {
    if (sep.loss_trace[k] != goca.loss_trace[k]) {
      first_diff = k;
      break;
    }
  }
  const bool params_equal = sep.model.params.flatten() == goca.model.params.flatten();
  const bool ok = steps >= 100 && first_diff == steps && params_equal &&
                  sep.loss_trace.size() == goca.loss_trace.size();
  return {8, "", ok,
          fmt("%zu steps compared, first difference at %s, final parameters %s", steps,
              first_diff == steps ? "none" : std::to_string(first_diff).c_str(),
              params_equal ? "identical" : "differ")};
}

CheckResult ordering(Context& ctx) {
  const auto t0 = Clock::now();
  const auto& rows = ctx.ablation_rows();
  const double secs = seconds_since(t0);
  const double view_a = median_accuracy(rows, Mode::SView, Condition::ViewA);
  const double view_b = median_accuracy(rows, Mode::SView, Condition::ViewB);
  const double avg = median_accuracy(rows, Mode::Avg, Condition::Fused);
  const double sep = median_accuracy(rows, Mode::Sep, Condition::Fused);
  const double goca = median_accuracy(rows, Mode::Goca, Condition::Fused);
  const double best_single = std::max(view_a, view_b);
  const bool ok = goca > view_a && goca > view_b && goca > avg && goca > sep && goca - best_single >= 0.05 &&
                  (ctx.jobs > 1 || secs < 600.0);
  return {9, "", ok,
          fmt("median acc sview-a %.3f, sview-b %.3f, avg %.3f, sep %.3f, goca %.3f (%d seeds, %.0f s)", view_a,
              view_b, avg, sep, goca, ctx.cfg.seeds, secs)};
}

CheckResult metrics(Context&) {
  std::mt19937_64 rng(1010);
  std::vector<std::string> failures;

  // k-means against exhaustive 2-partitions of 8 points.
  double wcss_gap = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix pts = uniform_matrix(8, 2, -1.0, 1.0, rng);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < 255; ++mask) {
      std::vector<int> labels(8);
      for (int i = 0; i < 8; ++i) labels[static_cast<std::size_t>(i)] = (mask >> i) & 1U;
      Eigen::RowVector2d mean[2] = {Eigen::RowVector2d::Zero(), Eigen::RowVector2d::Zero()};
      int count[2] = {0, 0};
      for (int i = 0; i < 8; ++i) {
        mean[labels[static_cast<std::size_t>(i)]] += pts.row(i);
        ++count[labels[static_cast<std::size_t>(i)]];
      }
      double s = 0.0;
      for (int i = 0; i < 8; ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        s += (pts.row(i) - mean[l] / count[l]).squaredNorm();
      }
      best = std::min(best, s);
    }
    wcss_gap = std::max(wcss_gap, std::abs(kmeans(pts, 2, 11 + static_cast<std::uint64_t>(rep)).wcss - best));
  }
  if (wcss_gap > 1e-9) failures.push_back("kmeans");

  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2, 2, 0};
  const ClusterMetrics perfect = majority_vote_metrics(truth, truth);
  if (!(near(perfect.accuracy, 1.0) && near(perfect.nmi, 1.0) && near(perfect.f1, 1.0))) failures.push_back("perfect");

  const std::vector<int> one = {0, 0, 0, 0};
  const std::vector<int> two = {0, 0, 1, 1};
  const ClusterMetrics single = majority_vote_metrics(one, two);
  if (!(near(single.accuracy, 0.5) && near(single.nmi, 0.0))) failures.push_back("single-cluster");

  // clusters {0,0,1,1} vs truth {0,1,0,1}: every cell of the contingency table
  // is 1, so I = 0; both clusters vote label 0 (tie -> lowest id):
  // class 0 has P = 2/4, R = 1, F1 = 2/3; class 1 is never predicted, F1 = 0.
  const std::vector<int> cross = {0, 1, 0, 1};
  const ClusterMetrics x = majority_vote_metrics(two, cross);
  if (!(near(x.accuracy, 0.5) && near(x.nmi, 0.0) && near(x.f1, 1.0 / 3.0))) failures.push_back("contingency");

  // clusters {0,0,0,1,1,1} vs truth {0,0,1,1,1,1}: table [[2,1],[0,3]].
  const std::vector<int> c6 = {0, 0, 0, 1, 1, 1};
  const std::vector<int> t6 = {0, 0, 1, 1, 1, 1};
  const double h_c = std::log(2.0);
  const double h_t = -(2.0 / 6) * std::log(2.0 / 6) - (4.0 / 6) * std::log(4.0 / 6);
  const double mi = (2.0 / 6) * std::log((2.0 / 6) / (0.5 * 2.0 / 6)) + (1.0 / 6) * std::log((1.0 / 6) / (0.5 * 4.0 / 6)) +
                    (3.0 / 6) * std::log((3.0 / 6) / (0.5 * 4.0 / 6));
  const ClusterMetrics m6 = majority_vote_metrics(c6, t6);
  // votes: cluster 0 -> 0, cluster 1 -> 1; class 0: P = 2/3, R = 1; class 1: P = 1, R = 3/4
  const double f1_6 = 0.5 * (2.0 * (2.0 / 3) / (2.0 / 3 + 1.0) + 2.0 * 0.75 / 1.75);
  if (!(near(m6.accuracy, 5.0 / 6) && near(m6.nmi, 2.0 * mi / (h_c + h_t)) && near(m6.f1, f1_6))) {
    failures.push_back("contingency-3x");
  }

  // recall@K on a 10-point instance against a full distance sort.
  const Matrix db = unit_rows(10, 3, rng);
  const Matrix q = unit_rows(4, 3, rng);
  const std::vector<int> db_labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  const std::vector<int> q_labels = {0, 1, 2, 1};
  for (int k = 1; k <= 10; ++k) {
    int hits = 0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      std::vector<std::pair<double, int>> dist;
      for (Eigen::Index j = 0; j < db.rows(); ++j) dist.emplace_back(1.0 - q.row(i).dot(db.row(j)), static_cast<int>(j));
      std::sort(dist.begin(), dist.end());
      for (int r = 0; r < k; ++r) {
        if (db_labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(r)].second)] ==
            q_labels[static_cast<std::size_t>(i)]) {
          ++hits;
          break;
        }
      }
    }
    if (!near(recall_at_k(q, db, q_labels, db_labels, k), hits / 4.0)) {
      failures.push_back("recall@" + std::to_string(k));
      break;
    }
  }
  if (!near(recall_at_k(db, db, db_labels, db_labels, 1), 1.0)) failures.push_back("recall-duplicate");

  std::string detail = fmt("kmeans WCSS gap %.2e", wcss_gap);
  detail += failures.empty() ? ", contingency and neighbor oracles agree" : ", failed:";
  for (const auto& f : failures) detail += " " + f;
  return {10, "", failures.empty(), detail};
}

CheckResult lambda_grid(Context& ctx) {
  const std::vector<double> axis = {0.01, 0.02, 0.03, 0.04};
  const auto cells = run_lambda_grid(ctx.cfg, axis, axis, ctx.jobs);
  int valid = 0;
  for (const auto& cell : cells) {
    bool ok = cell.rows.size() == static_cast<std::size_t>(ctx.cfg.seeds);
    for (double v : {cell.median_accuracy, cell.median_nmi, cell.median_f1}) ok = ok && v >= 0.0 && v <= 1.0;
    valid += ok ? 1 : 0;
  }
  const double l1s[] = {0.02};
  const double l2s[] = {0.0};
  const auto off = run_lambda_grid(ctx.cfg, l1s, l2s, ctx.jobs);
  RunConfig sep_cfg = ctx.cfg;
  std::vector<double> sep_acc;
  bool uses_default_lambda1 = ctx.cfg.train.solver.lambda1 == 0.02;
  if (uses_default_lambda1) {
    for (const auto& r : ctx.ablation_rows()) {
      if (r.mode == Mode::Sep && r.condition == Condition::Fused) sep_acc.push_back(r.summary.mean.accuracy);
    }
  } else {
    sep_cfg.train.solver.lambda1 = 0.02;
    for (const auto& r : run_ablation(sep_cfg, ctx.jobs)) {
      if (r.mode == Mode::Sep && r.condition == Condition::Fused) sep_acc.push_back(r.summary.mean.accuracy);
    }
  }
  std::vector<double> off_acc;
  for (const auto& r : off.front().rows) off_acc.push_back(r.summary.mean.accuracy);
  const bool matches_sep = off_acc == sep_acc;

  const RunConfig shipped;
  const bool defaults = shipped.train.solver.lambda1 == 0.02 && shipped.train.solver.lambda2 == 0.03;

  const auto best = std::max_element(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    return a.median_accuracy < b.median_accuracy;
  });
  const bool ok = cells.size() == 16 && valid == 16 && matches_sep && defaults;
  return {11, "", ok,
          fmt("%d/16 valid rows, argmax (%.2f, %.2f) acc %.3f, (0.02, 0) cell %s sep, shipped defaults %s", valid,
              best->lambda1, best->lambda2, best->median_accuracy, matches_sep ? "equals" : "differs from",
              defaults ? "(0.02, 0.03)" : "changed")};
}

using CheckFn = CheckResult (*)(Context&);

struct Entry {
  CheckInfo info;
  CheckFn fn;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {{1, "oracle-plain", "sinkhorn vs golden-section and mirror-descent oracles", false}, oracle_plain},
      {{2, "oracle-guided", "guided_sinkhorn vs both oracles with random priors", false}, oracle_guided},
      {{3, "kernel-reduction", "guided problem equals plain problem with shifted cost", false}, kernel_reduction},
      {{4, "marginal-feasibility", "converged plans meet the marginals to 1e-8", false}, feasibility},
      {{5, "limit-behaviors", "lambda2 limits, prior-scale invariance, KL monotonicity", false}, limits},
      {{6, "prototype-regularizer", "antipodal / simplex optima, unit norms, subgradient", false}, prototypes},
      {{7, "loss-gradients", "loss floor, finite differences for all modes, stop-gradient", false}, gradients},
      {{8, "mode-collapse", "goca with lambda2 = 0 reproduces the sep trace bitwise", false}, mode_collapse},
      {{9, "ablation-ordering", "fused goca beats every baseline on the benchmark", true}, ordering},
      {{10, "metrics", "k-means, majority vote, NMI, F1 and recall@K oracles", false}, metrics},
      {{11, "lambda-grid", "4x4 lambda grid and the guidance-off cell", true}, lambda_grid},
  };
  return table;
}

}  // namespace

const std::vector<CheckInfo>& catalog() {
  static const std::vector<CheckInfo> infos = [] {
    std::vector<CheckInfo> out;
    for (const auto& e : entries()) out.push_back(e.info);
    return out;
  }();
  return infos;
}

std::vector<CheckResult> run(std::span<const int> ids, const RunConfig& cfg, int jobs,
                             const std::function<void(const CheckResult&)>& on_done) {
  Context ctx{cfg, jobs, {}, {}, {}, {}};
  std::vector<CheckResult> results;
  for (const auto& e : entries()) {
    if (std::find(ids.begin(), ids.end(), e.info.id) == ids.end()) continue;
    const auto t0 = Clock::now();
    CheckResult r;
    try {
      r = e.fn(ctx);
    } catch (const std::exception& ex) {
      r.passed = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    r.id = e.info.id;
    r.name = e.info.name;
    r.seconds = seconds_since(t0);
    if (on_done) on_done(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format(const CheckResult& r) {
  return fmt("[%s] %2d %-22s %s (%.1f s)", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str(),
             r.seconds);
}

}  // namespace goca::checks
