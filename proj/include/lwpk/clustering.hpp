#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lwpk/datastream.hpp"
#include "lwpk/matrix.hpp"

namespace lwpk {

struct ClusterResult {
    Matrix centroids;                   // k x d
    std::vector<int> assignment;        // instance -> cluster
    double inertia = 0.0;               // sum of squared distances to assigned centroid
    std::vector<double> inertia_trace;  // after every assignment step
    int iterations = 0;
    bool converged = false;
};

/// Lloyd's algorithm from a seeded farthest-point start.
///
/// The first centroid is a seeded random instance; each further centroid is
/// the instance farthest from those already chosen. Nearest-centroid ties
/// go to the lowest cluster index. A cluster that empties is reseeded with
/// the instance farthest from its current centroid.
/// With restarts > 1, further starts use seeds split from `seed`; the
/// lowest-inertia run wins (earliest on ties). Restart 0 uses `seed` itself.
ClusterResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations = 300,
                     int restarts = 1);

struct PseudoLabeledSet {
    std::vector<Example> examples;  // labels are pseudo-labels in [label_base, label_base + clusters)
    int label_base = 0;
    int clusters = 0;
};

/// Cluster c becomes pseudo-label label_base + c.
PseudoLabeledSet assign_pseudo_labels(const ClusterResult& result, int label_base, std::span<const Example> pool,
                                      std::size_t expected_clusters);

/// Hubert-Arabie adjusted Rand index. Identical trivial partitions (zero
/// denominator) score 1.
double ari(std::span<const int> a, std::span<const int> b);

struct AccuracyResult {
    double accuracy = 0.0;
    bool flagged = false;  // cluster and class counts differed
};

/// Best one-to-one cluster/class matching (Hungarian method) as a hit rate.
AccuracyResult clustering_accuracy(std::span<const int> assignment, std::span<const int> truth);

/// Maximum-weight assignment on a rectangular weight matrix. Returns, per
/// row, the matched column or -1.
std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weights);

/// Delimited text: uid,cluster,pseudo_label.
std::string format_cluster_dump(const PseudoLabeledSet& pseudo, const ClusterResult& result);

}  // namespace lwpk
