// goca: data generation, solving, training, ablation and verification.
//
// Exit codes: 0 success, 1 usage/config/input error, 2 numeric failure
// (non-convergence under --strict, overflow), 3 verification failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "goca/checks.hpp"
#include "goca/config.hpp"
#include "goca/eval.hpp"
#include "goca/experiments.hpp"
#include "goca/guided_ot.hpp"
#include "goca/matrix_io.hpp"
#include "goca/ot_core.hpp"
#include "goca/prototypes.hpp"
#include "goca/ssl_engine.hpp"
#include "goca/synth_data.hpp"

namespace fs = std::filesystem;
using namespace goca;

namespace {

constexpr int kUsageError = 1;
constexpr int kNumericFailure = 2;
constexpr int kVerifyFailure = 3;

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  bool strict = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "base seed (sets synth.seed and train.seed)");
  cmd->add_option("--out", c.out, out_help);
  cmd->add_option("--jobs", c.jobs, "parallel cells/seeds (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_flag("--strict", c.strict, "treat solver non-convergence as a failure (exit 2)");
  cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    cfg.synth.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

// Writes to --out if given, else stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

fs::path ensure_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out directory is required");
  fs::create_directories(dir);
  return dir;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.view_a = load_matrix(dir / "view_a.mat");
  d.view_b = load_matrix(dir / "view_b.mat");
  d.labels = load_labels(dir / "labels.txt");
  if (d.view_a.rows() != d.view_b.rows() || static_cast<std::size_t>(d.view_a.rows()) != d.labels.size()) {
    throw std::runtime_error("dataset: views and labels differ in length");
  }
  d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

std::string metrics_csv_header() { return "mode,condition,seed,accuracy,nmi,f1,accuracy_se,nmi_se,f1_se\n"; }

std::string metrics_csv_row(const EvalRow& r) {
  std::ostringstream os;
  os.precision(6);
  os << mode_name(r.mode) << ',' << condition_name(r.condition) << ',' << r.seed << ',' << r.summary.mean.accuracy
     << ',' << r.summary.mean.nmi << ',' << r.summary.mean.f1 << ',' << r.summary.stderr_.accuracy << ','
     << r.summary.stderr_.nmi << ',' << r.summary.stderr_.f1 << '\n';
  return os.str();
}

void save_model(const fs::path& dir, const Model& m) {
  const char* views[] = {"a", "b"};
  for (int v = 0; v < 2; ++v) {
    const Layer& bb = m.params.backbones[static_cast<std::size_t>(v)];
    save_matrix(dir / ("backbone_" + std::string(views[v]) + "_weight.mat"), bb.weight);
    save_matrix(dir / ("backbone_" + std::string(views[v]) + "_bias.mat"), bb.bias.transpose());
    const Layer& head = m.params.heads[static_cast<std::size_t>(v)];
    if (head.weight.rows() == 0) continue;
    save_matrix(dir / ("head_" + std::string(views[v]) + "_weight.mat"), head.weight);
    save_matrix(dir / ("head_" + std::string(views[v]) + "_bias.mat"), head.bias.transpose());
  }
  save_matrix(dir / "prototypes.mat", m.prototypes_a.matrix());
  if (m.mode == Mode::SView) save_matrix(dir / "prototypes_b.mat", m.prototypes_b.matrix());
}

int cmd_gen_data(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const fs::path dir = ensure_dir(c.out);
  const Dataset d = generate(cfg.synth);
  save_matrix(dir / "view_a.mat", d.view_a);
  save_matrix(dir / "view_b.mat", d.view_b);
  save_labels(dir / "labels.txt", d.labels);
  save_labels(dir / "distractor.txt", d.distractor);
  std::cerr << "wrote " << d.size() << " paired samples to " << dir.string() << "\n";
  return 0;
}

struct ProtoArgs {
  int n = 64;
  int dim = 16;
  std::optional<int> steps, restarts;
  std::optional<double> lr;
  bool report = false;
};

int cmd_optimize_prototypes(const Common& c, const ProtoArgs& a) {
  const RunConfig cfg = resolve_config(c);
  ProtoOptConfig p = cfg.train.proto;
  if (a.steps) p.steps = *a.steps;
  if (a.restarts) p.restarts = *a.restarts;
  if (a.lr) p.learning_rate = *a.lr;
  if (c.seed) p.seed = *c.seed;
  const ProtoOptResult r = optimize_prototypes_with_trace(a.n, a.dim, p);
  if (!c.out.empty()) {
    save_matrix(c.out, r.prototypes.matrix());
  } else if (!a.report) {
    write_matrix(std::cout, r.prototypes.matrix());
  }
  if (a.report) {
    std::cout << "loss," << r.final_loss << "\nmax_pairwise_cosine," << max_pairwise_cosine(r.prototypes.matrix())
              << "\n";
    if (a.n <= a.dim + 1) std::cout << "simplex_bound," << -1.0 / (a.n - 1) << "\n";
  }
  return 0;
}

struct SolveArgs {
  std::string cost, prior;
  bool guided = false;
  std::optional<double> lambda1, lambda2, tolerance;
  std::optional<int> max_iters;
};

int cmd_solve(const Common& c, const SolveArgs& a) {
  const RunConfig cfg = resolve_config(c);
  SolverConfig s = cfg.train.solver;
  if (a.lambda1) s.lambda1 = *a.lambda1;
  if (a.lambda2) s.lambda2 = *a.lambda2;
  if (a.tolerance) s.tolerance = *a.tolerance;
  if (a.max_iters) s.max_iters = *a.max_iters;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Matrix cost = load_matrix(a.cost);
  const Marginals mg = Marginals::uniform(cost.rows(), cost.cols());
  SinkhornResult r;
  if (a.guided) {
    if (a.prior.empty()) throw UsageError("solve --guided needs --prior");
    const Matrix prior = load_matrix(a.prior);
    if (prior.rows() != cost.rows() || prior.cols() != cost.cols()) throw UsageError("prior shape != cost shape");
    r = guided_sinkhorn(cost, prior, mg, s);
  } else {
    r = sinkhorn(cost, mg, s);
  }
  if (c.out.empty()) {
    write_matrix(std::cout, r.plan);
  } else {
    save_matrix(c.out, r.plan);
  }
  std::cerr << "iterations " << r.iterations << ", converged " << (r.converged ? "yes" : "no") << ", residual "
            << std::max(r.row_residual, r.col_residual) << "\n";
  if (!r.converged && c.strict) throw NumericFailure("solver did not converge");
  return 0;
}

struct TrainArgs {
  std::optional<std::string> mode;
  std::string data;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  RunConfig cfg = resolve_config(c);
  if (a.mode) {
    try {
      cfg.train.mode = parse_mode(*a.mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const fs::path dir = ensure_dir(c.out);
  const Dataset data = a.data.empty() ? generate(cfg.synth) : load_dataset(a.data);
  const TrainResult r = train(data, cfg.train);
  std::ostringstream loss;
  loss.precision(17);
  loss << "step,loss\n";
  for (std::size_t k = 0; k < r.loss_trace.size(); ++k) loss << k << ',' << r.loss_trace[k] << '\n';
  emit((dir / "loss.csv").string(), loss.str());
  save_model(dir, r.model);

  std::string metrics = metrics_csv_header();
  for (const auto& row : evaluate_model(r.model, data, cfg, 0)) metrics += metrics_csv_row(row);
  emit((dir / "metrics.csv").string(), metrics);
  emit((dir / "config.txt").string(), dump_config(cfg));
  std::cerr << r.loss_trace.size() << " steps, " << r.nonconverged << "/" << r.solves
            << " solves not converged\n";
  if (r.nonconverged > 0 && c.strict) throw NumericFailure("solver did not converge during training");
  return 0;
}

struct EvalArgs {
  std::string features, labels, queries, query_labels, metrics;
  int clusters = 0;
  std::vector<int> recall_k{1, 5, 10};
  int repetitions = 0;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  const RunConfig cfg = resolve_config(c);
  const Matrix features = load_matrix(a.features);
  const std::vector<int> labels = load_labels(a.labels);
  if (static_cast<std::size_t>(features.rows()) != labels.size()) throw UsageError("features and labels differ");
  const int k = a.clusters > 0 ? a.clusters : *std::max_element(labels.begin(), labels.end()) + 1;
  const int reps = a.repetitions > 0 ? a.repetitions : cfg.eval_repetitions;
  const MetricSummary s =
      repeated_cluster_metrics(features, labels, k, reps, cfg.train.seed, cfg.kmeans_restarts);
  std::ostringstream os;
  os.precision(6);
  os << "metric,value,stderr\n";
  os << "accuracy," << s.mean.accuracy << ',' << s.stderr_.accuracy << '\n';
  os << "nmi," << s.mean.nmi << ',' << s.stderr_.nmi << '\n';
  os << "f1," << s.mean.f1 << ',' << s.stderr_.f1 << '\n';
  for (int r : a.recall_k) {
    double value = 0.0;
    if (!a.queries.empty()) {
      if (a.query_labels.empty()) throw UsageError("--queries needs --query-labels");
      const Matrix q = load_matrix(a.queries);
      const std::vector<int> ql = load_labels(a.query_labels);
      value = recall_at_k(q, features, ql, labels, r);
    } else {
      value = recall_at_k_leave_one_out(features, labels, r);
    }
    os << "recall@" << r << ',' << value << ",\n";
  }
  emit(a.metrics.empty() ? c.out : a.metrics, os.str());
  return 0;
}

struct VerifyArgs {
  bool full = false;
  std::vector<int> only;
};

int cmd_verify(const Common& c, const VerifyArgs& a) {
  const RunConfig cfg = resolve_config(c);
  std::vector<int> ids = a.only;
  for (int id : ids) {
    const auto& cat = checks::catalog();
    if (std::none_of(cat.begin(), cat.end(), [&](const auto& info) { return info.id == id; })) {
      throw UsageError("verify: no check with id " + std::to_string(id));
    }
  }
  if (ids.empty()) {
    for (const auto& info : checks::catalog()) {
      if (a.full || !info.heavy) ids.push_back(info.id);
    }
  }
  const auto results = checks::run(ids, cfg, c.jobs, [](const checks::CheckResult& r) {
    std::cout << checks::format(r) << std::endl;
  });
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : kVerifyFailure;
}

int cmd_ablate(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const auto rows = run_ablation(cfg, c.jobs);
  std::string csv = metrics_csv_header();
  for (const auto& r : rows) csv += metrics_csv_row(r);
  emit(c.out, csv);
  std::cerr << "median accuracy over " << cfg.seeds << " seeds:\n";
  for (Mode m : {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca}) {
    std::cerr << "  " << mode_name(m);
    for (Condition cond : {Condition::ViewA, Condition::ViewB, Condition::Fused}) {
      std::cerr << "  " << condition_name(cond) << ' ' << median_accuracy(rows, m, cond);
    }
    std::cerr << "\n";
  }
  return 0;
}

struct GridArgs {
  std::string lambda1 = "0.01,0.02,0.03,0.04";
  std::string lambda2 = "0.01,0.02,0.03,0.04";
};

int cmd_lambda_grid(const Common& c, const GridArgs& a) {
  const RunConfig cfg = resolve_config(c);
  const auto l1 = parse_list(a.lambda1);
  const auto l2 = parse_list(a.lambda2);
  const auto cells = run_lambda_grid(cfg, l1, l2, c.jobs);
  std::ostringstream os;
  os.precision(6);
  os << "lambda1,lambda2,accuracy,nmi,f1\n";
  for (const auto& cell : cells) {
    os << cell.lambda1 << ',' << cell.lambda2 << ',' << cell.median_accuracy << ',' << cell.median_nmi << ','
       << cell.median_f1 << '\n';
  }
  emit(c.out, os.str());
  const auto best = std::max_element(cells.begin(), cells.end(), [](const GridCell& x, const GridCell& y) {
    return x.median_accuracy < y.median_accuracy;
  });
  std::cerr << "argmax lambda1 " << best->lambda1 << " lambda2 " << best->lambda2 << " accuracy "
            << best->median_accuracy << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"goca: guided online cluster assignment toolkit"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic two-view dataset");
  add_common(gen, common, "output directory");

  ProtoArgs proto;
  auto* opt = app.add_subcommand("optimize-prototypes", "place maximally separated unit prototypes");
  add_common(opt, common, "output matrix file (default stdout)");
  opt->add_option("--n", proto.n, "number of prototypes")->check(CLI::Range(2, 1 << 20));
  opt->add_option("--dim", proto.dim, "dimension")->check(CLI::Range(2, 1 << 20));
  opt->add_option("--steps", proto.steps, "descent steps per restart");
  opt->add_option("--lr", proto.lr, "initial step size");
  opt->add_option("--restarts", proto.restarts, "random restarts");
  opt->add_flag("--report", proto.report, "print final loss and max pairwise cosine");

  SolveArgs solve;
  auto* sol = app.add_subcommand("solve", "entropic assignment of a cost matrix");
  add_common(sol, common, "output plan file (default stdout)");
  sol->add_option("--cost", solve.cost, "cost matrix file")->required()->check(CLI::ExistingFile);
  sol->add_flag("--guided", solve.guided, "guide the assignment with --prior");
  sol->add_option("--prior", solve.prior, "prior plan file")->check(CLI::ExistingFile);
  sol->add_option("--lambda1", solve.lambda1, "entropic weight");
  sol->add_option("--lambda2", solve.lambda2, "prior weight");
  sol->add_option("--tolerance", solve.tolerance, "marginal residual target");
  sol->add_option("--max-iters", solve.max_iters, "iteration cap");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "train one mode on the synthetic benchmark");
  add_common(trn, common, "output directory");
  trn->add_option("--mode", tr.mode, "sview, avg, sep or goca");
  trn->add_option("--data", tr.data, "dataset directory from gen-data (default: generate)");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "cluster and retrieval metrics of a feature matrix");
  add_common(evl, common, "output CSV (default stdout)");
  evl->add_option("--features", ev.features, "feature matrix file")->required()->check(CLI::ExistingFile);
  evl->add_option("--labels", ev.labels, "label file")->required()->check(CLI::ExistingFile);
  evl->add_option("--queries", ev.queries, "query matrix (default: leave-one-out)")->check(CLI::ExistingFile);
  evl->add_option("--query-labels", ev.query_labels, "query label file")->check(CLI::ExistingFile);
  evl->add_option("--metrics", ev.metrics, "output CSV (alias of --out)");
  evl->add_option("--clusters", ev.clusters, "k for k-means (default: number of labels)");
  evl->add_option("--recall", ev.recall_k, "K values for recall@K")->delimiter(',');
  evl->add_option("--repetitions", ev.repetitions, "k-means repetitions (default: eval.repetitions)");

  VerifyArgs ver;
  auto* vfy = app.add_subcommand("verify", "run the oracle and property battery");
  add_common(vfy, common, "unused");
  vfy->add_flag("--full", ver.full, "include the training-based checks");
  vfy->add_option("--only", ver.only, "check ids to run")->delimiter(',');

  auto* abl = app.add_subcommand("ablate", "train all modes on all seeds and evaluate");
  add_common(abl, common, "output CSV (default stdout)");

  GridArgs grid;
  auto* grd = app.add_subcommand("lambda-grid", "sweep lambda1 x lambda2 for goca");
  add_common(grd, common, "output CSV (default stdout)");
  grd->add_option("--lambda1", grid.lambda1, "comma-separated lambda1 values");
  grd->add_option("--lambda2", grid.lambda2, "comma-separated lambda2 values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*opt) return cmd_optimize_prototypes(common, proto);
    if (*sol) return cmd_solve(common, solve);
    if (*trn) return cmd_train(common, tr);
    if (*evl) return cmd_eval(common, ev);
    if (*vfy) return cmd_verify(common, ver);
    if (*abl) return cmd_ablate(common);
    if (*grd) return cmd_lambda_grid(common, grid);
  } catch (const NumericFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
