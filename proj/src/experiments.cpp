#include "goca/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <stdexcept>
#include <thread>

namespace goca {

namespace {

void run_parallel(std::size_t tasks, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || tasks <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, tasks); ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < tasks; t = next++) {
        try {
          fn(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

constexpr Mode kModes[] = {Mode::SView, Mode::Avg, Mode::Sep, Mode::Goca};
constexpr Condition kConditions[] = {Condition::ViewA, Condition::ViewB, Condition::Fused};

}  // namespace

Dataset dataset_for_seed(const RunConfig& cfg, int s) {
  SynthConfig synth = cfg.synth;
  synth.seed += static_cast<std::uint64_t>(s);
  return generate(synth);
}

TrainConfig train_config_for_seed(const RunConfig& cfg, Mode mode, int s) {
  TrainConfig t = cfg.train;
  t.mode = mode;
  t.seed += static_cast<std::uint64_t>(s);
  return t;
}

std::vector<EvalRow> evaluate_model(const Model& model, const Dataset& data, const RunConfig& cfg, int s) {
  std::vector<EvalRow> rows;
  for (Condition c : kConditions) {
    const FeatureBatch features = embed(model, data.view_a, data.view_b, c);
    EvalRow row;
    row.mode = model.mode;
    row.condition = c;
    row.seed = s;
    row.summary = repeated_cluster_metrics(features, data.labels, data.num_classes, cfg.eval_repetitions,
                                           cfg.train.seed + static_cast<std::uint64_t>(s), cfg.kmeans_restarts);
    rows.push_back(row);
  }
  return rows;
}

std::vector<EvalRow> run_ablation(const RunConfig& cfg, int jobs) {
  cfg.validate();
  const auto n_modes = std::size(kModes);
  const auto n_seeds = static_cast<std::size_t>(cfg.seeds);
  std::vector<Dataset> data(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) data[s] = dataset_for_seed(cfg, static_cast<int>(s));

  std::vector<std::vector<EvalRow>> cells(n_modes * n_seeds);
  run_parallel(cells.size(), jobs, [&](std::size_t task) {
    const Mode mode = kModes[task / n_seeds];
    const int s = static_cast<int>(task % n_seeds);
    const TrainResult trained = train(data[static_cast<std::size_t>(s)], train_config_for_seed(cfg, mode, s));
    cells[task] = evaluate_model(trained.model, data[static_cast<std::size_t>(s)], cfg, s);
  });

  std::vector<EvalRow> rows;
  for (auto& cell : cells) rows.insert(rows.end(), cell.begin(), cell.end());
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double median_accuracy(std::span<const EvalRow> rows, Mode mode, Condition condition) {
  std::vector<double> acc;
  for (const auto& r : rows) {
    if (r.mode == mode && r.condition == condition) acc.push_back(r.summary.mean.accuracy);
  }
  return median(std::move(acc));
}

std::vector<GridCell> run_lambda_grid(const RunConfig& cfg, std::span<const double> lambda1s,
                                      std::span<const double> lambda2s, int jobs) {
  cfg.validate();
  if (lambda1s.empty() || lambda2s.empty()) throw std::invalid_argument("lambda grid: empty axis");
  const auto n_seeds = static_cast<std::size_t>(cfg.seeds);
  std::vector<Dataset> data(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) data[s] = dataset_for_seed(cfg, static_cast<int>(s));

  std::vector<GridCell> cells;
  for (double l1 : lambda1s) {
    for (double l2 : lambda2s) {
      GridCell cell;
      cell.lambda1 = l1;
      cell.lambda2 = l2;
      cell.rows.resize(n_seeds);
      cells.push_back(std::move(cell));
    }
  }
  run_parallel(cells.size() * n_seeds, jobs, [&](std::size_t task) {
    GridCell& cell = cells[task / n_seeds];
    const int s = static_cast<int>(task % n_seeds);
    TrainConfig t = train_config_for_seed(cfg, Mode::Goca, s);
    t.solver.lambda1 = cell.lambda1;
    t.solver.lambda2 = cell.lambda2;
    const TrainResult trained = train(data[static_cast<std::size_t>(s)], t);
    for (const auto& row : evaluate_model(trained.model, data[static_cast<std::size_t>(s)], cfg, s)) {
      if (row.condition == Condition::Fused) cell.rows[static_cast<std::size_t>(s)] = row;
    }
  });

  for (auto& cell : cells) {
    std::vector<double> acc, nmi, f1;
    for (const auto& r : cell.rows) {
      acc.push_back(r.summary.mean.accuracy);
      nmi.push_back(r.summary.mean.nmi);
      f1.push_back(r.summary.mean.f1);
    }
    cell.median_accuracy = median(acc);
    cell.median_nmi = median(nmi);
    cell.median_f1 = median(f1);
  }
  return cells;
}

}  // namespace goca
