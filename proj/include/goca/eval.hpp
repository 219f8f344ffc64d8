#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "goca/matrix.hpp"

namespace goca {

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double wcss = 0.0;  // within-cluster sum of squared Euclidean distances
};

// Lloyd's algorithm from `restarts` seeded random-point initializations; the
// lowest-WCSS run wins. Empty clusters are reseeded from the point farthest
// from its centroid.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 10, int max_iters = 300);

// WCSS of a fixed assignment with centroids refit as cluster means.
double within_cluster_ss(const Matrix& points, std::span<const int> labels);

struct ClusterMetrics {
  double accuracy = 0.0;
  double nmi = 0.0;
  double f1 = 0.0;
};

// Each cluster takes its majority ground-truth label (ties -> lowest id).
// F1 is macro-averaged over ground-truth classes; NMI = 2 I / (H1 + H2).
ClusterMetrics majority_vote_metrics(std::span<const int> clusters, std::span<const int> truth);

double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

// k-means repeated `repetitions` times with distinct seeds; mean and standard
// error of the mean for each metric.
struct MetricSummary {
  ClusterMetrics mean;
  ClusterMetrics stderr_;
  int repetitions = 0;
};
MetricSummary repeated_cluster_metrics(const Matrix& features, std::span<const int> truth, int k, int repetitions,
                                       std::uint64_t seed, int restarts = 10);

// Fraction of queries with a same-label item among their K nearest database
// rows under cosine distance. Ties go to the lower database index.
double recall_at_k(const Matrix& queries, const Matrix& database, std::span<const int> query_labels,
                   std::span<const int> database_labels, int k);

// Same, with every row of `features` used as a query against all other rows.
double recall_at_k_leave_one_out(const Matrix& features, std::span<const int> labels, int k);

}  // namespace goca
