#pragma once

#include <span>
#include <string>
#include <vector>

#include "lwpk/matrix.hpp"

namespace lwpk {

/// Per-session top-1 accuracies and the summary figures derived from them.
struct RunMetrics {
    std::vector<double> accuracies;
    double acc_first = 0.0;
    double acc_last = 0.0;
    double acc_avg = 0.0;
    double pd = 0.0;  // acc_first - acc_last

    bool operator==(const RunMetrics&) const = default;
};

double session_accuracy(std::span<const int> predictions, std::span<const int> truth);

RunMetrics summarize(std::span<const double> accuracies);

struct DistanceProbe {
    double d_in = 0.0;   // mean same-class pairwise distance
    double d_out = 0.0;  // mean cross-class pairwise distance
    std::size_t intra_pairs = 0;
    std::size_t inter_pairs = 0;
    bool flagged = false;  // a mean was undefined (no pairs of that kind)
};

/// Euclidean pairwise distances over rows of `embeddings`.
DistanceProbe class_distance_probe(const Matrix& embeddings, std::span<const int> labels);

struct OffsetDistance {
    double d = 0.0;
    bool flagged = false;  // D_in > D_out
};

/// D = A * D_in + (1 - A) * D_out.
OffsetDistance offset_distance(double accuracy, double d_in, double d_out);

struct TheoryProbe {
    double d_in = 0.0;
    double d_out = 0.0;
    double accuracy = 0.0;
    double offset = 0.0;
};

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p_value(int wins, int losses);

/// Delimited text: session,accuracy.
std::string format_metrics_table(const RunMetrics& metrics);
/// Delimited text: Acc_f,Acc_l,Acc_avg,PD.
std::string format_summary_table(const RunMetrics& metrics);

}  // namespace lwpk
