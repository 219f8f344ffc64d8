#include "goca/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace goca {

namespace {

std::vector<int> compact(std::span<const int> labels, int& count) {
  std::map<int, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int v : labels) out.push_back(ids.try_emplace(v, static_cast<int>(ids.size())).first->second);
  count = static_cast<int>(ids.size());
  return out;
}

struct Contingency {
  std::vector<std::vector<double>> table;  // [cluster][class]
  std::vector<double> cluster_totals;
  std::vector<double> class_totals;
  std::vector<int> class_ids;  // compact index -> original label (sorted)
  double total = 0.0;
};

Contingency contingency(std::span<const int> clusters, std::span<const int> truth) {
  if (clusters.size() != truth.size()) throw std::invalid_argument("metrics: label vectors differ in length");
  if (clusters.empty()) throw std::invalid_argument("metrics: empty label vectors");
  int n_clusters = 0;
  int n_classes = 0;
  const auto c = compact(clusters, n_clusters);
  const auto t = compact(truth, n_classes);
  Contingency out;
  out.table.assign(static_cast<std::size_t>(n_clusters), std::vector<double>(static_cast<std::size_t>(n_classes), 0.0));
  out.cluster_totals.assign(static_cast<std::size_t>(n_clusters), 0.0);
  out.class_totals.assign(static_cast<std::size_t>(n_classes), 0.0);
  out.class_ids.resize(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.table[static_cast<std::size_t>(c[i])][static_cast<std::size_t>(t[i])] += 1.0;
    out.cluster_totals[static_cast<std::size_t>(c[i])] += 1.0;
    out.class_totals[static_cast<std::size_t>(t[i])] += 1.0;
    out.class_ids[static_cast<std::size_t>(t[i])] = truth[i];
  }
  out.total = static_cast<double>(c.size());
  return out;
}

double entropy_of(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double n : counts) {
    if (n > 0.0) h -= (n / total) * std::log(n / total);
  }
  return h;
}

double nmi_from(const Contingency& ct) {
  double mi = 0.0;
  for (std::size_t a = 0; a < ct.table.size(); ++a) {
    for (std::size_t b = 0; b < ct.class_totals.size(); ++b) {
      const double n = ct.table[a][b];
      if (n > 0.0) mi += (n / ct.total) * std::log(n * ct.total / (ct.cluster_totals[a] * ct.class_totals[b]));
    }
  }
  const double denom = entropy_of(ct.cluster_totals, ct.total) + entropy_of(ct.class_totals, ct.total);
  // Two single-block partitions are identical.
  if (denom <= 0.0) return 1.0;
  return std::clamp(2.0 * mi / denom, 0.0, 1.0);
}

void assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels, std::vector<double>& dist) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = best_d;
  }
}

KMeansResult lloyd(const Matrix& points, int k, std::mt19937_64& rng, int max_iters) {
  const auto m = static_cast<std::size_t>(points.rows());
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  Matrix centroids(k, points.cols());
  for (int c = 0; c < k; ++c) centroids.row(c) = points.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]));

  std::vector<int> labels(m, -1);
  std::vector<int> next(m);
  std::vector<double> dist(m);
  for (int it = 0; it < max_iters; ++it) {
    assign(points, centroids, next, dist);
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int v : next) ++sizes[static_cast<std::size_t>(v)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (sizes[static_cast<std::size_t>(next[i])] > 1 && (far == m || dist[i] > dist[far])) far = i;
      }
      if (far == m) break;
      --sizes[static_cast<std::size_t>(next[far])];
      next[far] = c;
      dist[far] = 0.0;
      sizes[static_cast<std::size_t>(c)] = 1;
    }
    if (next == labels) break;
    labels = next;
    centroids.setZero();
    for (std::size_t i = 0; i < m; ++i) centroids.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
    for (int c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
  }
  KMeansResult out;
  out.labels = std::move(labels);
  out.centroids = std::move(centroids);
  out.wcss = within_cluster_ss(points, out.labels);
  return out;
}

}  // namespace

double within_cluster_ss(const Matrix& points, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != points.rows()) {
    throw std::invalid_argument("wcss: label count does not match points");
  }
  std::map<int, std::pair<Vector, int>> sums;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = sums.try_emplace(labels[i], Vector::Zero(points.cols()), 0);
    it->second.first += points.row(static_cast<Eigen::Index>(i)).transpose();
    ++it->second.second;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& [sum, n] = sums.at(labels[i]);
    total += (points.row(static_cast<Eigen::Index>(i)).transpose() - sum / n).squaredNorm();
  }
  return total;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts, int max_iters) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (points.rows() < k) throw std::invalid_argument("kmeans: fewer points than clusters");
  if (restarts < 1 || max_iters < 1) throw std::invalid_argument("kmeans: restarts and max_iters must be >= 1");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult run = lloyd(points, k, rng, max_iters);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  return nmi_from(contingency(a, b));
}

ClusterMetrics majority_vote_metrics(std::span<const int> clusters, std::span<const int> truth) {
  const Contingency ct = contingency(clusters, truth);
  const std::size_t n_classes = ct.class_totals.size();

  // Compact class indices follow sorted label order, so lowest index = lowest id.
  std::vector<std::size_t> vote(ct.table.size());
  for (std::size_t a = 0; a < ct.table.size(); ++a) {
    vote[a] = static_cast<std::size_t>(std::max_element(ct.table[a].begin(), ct.table[a].end()) - ct.table[a].begin());
  }

  std::vector<double> hits(n_classes, 0.0);
  std::vector<double> predicted(n_classes, 0.0);
  double correct = 0.0;
  for (std::size_t a = 0; a < ct.table.size(); ++a) {
    hits[vote[a]] += ct.table[a][vote[a]];
    predicted[vote[a]] += ct.cluster_totals[a];
    correct += ct.table[a][vote[a]];
  }
  double f1 = 0.0;
  for (std::size_t b = 0; b < n_classes; ++b) {
    if (hits[b] == 0.0) continue;
    const double precision = hits[b] / predicted[b];
    const double recall = hits[b] / ct.class_totals[b];
    f1 += 2.0 * precision * recall / (precision + recall);
  }
  return {correct / ct.total, nmi_from(ct), f1 / static_cast<double>(n_classes)};
}

MetricSummary repeated_cluster_metrics(const Matrix& features, std::span<const int> truth, int k, int repetitions,
                                       std::uint64_t seed, int restarts) {
  if (repetitions < 1) throw std::invalid_argument("repeated metrics: repetitions must be >= 1");
  std::vector<ClusterMetrics> runs;
  for (int r = 0; r < repetitions; ++r) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(r)};
    std::mt19937_64 gen(seq);
    const auto result = kmeans(features, k, gen(), restarts);
    runs.push_back(majority_vote_metrics(result.labels, truth));
  }
  auto summarize = [&](double ClusterMetrics::*field, double& mean, double& se) {
    double sum = 0.0;
    for (const auto& m : runs) sum += m.*field;
    mean = sum / repetitions;
    double var = 0.0;
    for (const auto& m : runs) var += (m.*field - mean) * (m.*field - mean);
    se = repetitions > 1 ? std::sqrt(var / (repetitions - 1) / repetitions) : 0.0;
  };
  MetricSummary out;
  out.repetitions = repetitions;
  summarize(&ClusterMetrics::accuracy, out.mean.accuracy, out.stderr_.accuracy);
  summarize(&ClusterMetrics::nmi, out.mean.nmi, out.stderr_.nmi);
  summarize(&ClusterMetrics::f1, out.mean.f1, out.stderr_.f1);
  return out;
}

namespace {

double recall_impl(const Matrix& queries, const Matrix& database, std::span<const int> query_labels,
                   std::span<const int> database_labels, int k, bool skip_self) {
  if (queries.cols() != database.cols()) throw std::invalid_argument("recall: dimension mismatch");
  if (static_cast<Eigen::Index>(query_labels.size()) != queries.rows() ||
      static_cast<Eigen::Index>(database_labels.size()) != database.rows()) {
    throw std::invalid_argument("recall: label count mismatch");
  }
  const Eigen::Index pool = database.rows() - (skip_self ? 1 : 0);
  if (k < 1 || k > pool) throw std::invalid_argument("recall: K must be in [1, database size]");

  Matrix q = queries;
  Matrix db = database;
  q.rowwise().normalize();
  db.rowwise().normalize();
  const Matrix sim = q * db.transpose();

  std::size_t found = 0;
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    order.clear();
    for (Eigen::Index j = 0; j < db.rows(); ++j) {
      if (!(skip_self && j == i)) order.push_back(j);
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index x, Eigen::Index y) {
      const double dx = 1.0 - sim(i, x);
      const double dy = 1.0 - sim(i, y);
      return dx < dy || (dx == dy && x < y);
    });
    for (int r = 0; r < k; ++r) {
      if (database_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] ==
          query_labels[static_cast<std::size_t>(i)]) {
        ++found;
        break;
      }
    }
  }
  return static_cast<double>(found) / static_cast<double>(q.rows());
}

}  // namespace

double recall_at_k(const Matrix& queries, const Matrix& database, std::span<const int> query_labels,
                   std::span<const int> database_labels, int k) {
  return recall_impl(queries, database, query_labels, database_labels, k, false);
}

double recall_at_k_leave_one_out(const Matrix& features, std::span<const int> labels, int k) {
  return recall_impl(features, features, labels, labels, k, true);
}

}  // namespace goca
