#include "lwpk/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"

namespace lwpk {

double session_accuracy(std::span<const int> predictions, std::span<const int> truth) {
    if (predictions.size() != truth.size()) throw ShapeMismatch("session_accuracy: length mismatch");
    if (predictions.empty()) throw ShapeMismatch("session_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

RunMetrics summarize(std::span<const double> accuracies) {
    if (accuracies.empty()) throw ShapeMismatch("summarize: no sessions");
    RunMetrics m;
    m.accuracies.assign(accuracies.begin(), accuracies.end());
    m.acc_first = accuracies.front();
    m.acc_last = accuracies.back();
    m.pd = m.acc_first - m.acc_last;
    m.acc_avg = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
    return m;
}

DistanceProbe class_distance_probe(const Matrix& embeddings, std::span<const int> labels) {
    if (embeddings.rows() != labels.size()) throw ShapeMismatch("class_distance_probe: one label per row");
    if (embeddings.rows() < 2) throw ShapeMismatch("class_distance_probe: need at least two points");

    DistanceProbe p;
    double sum_in = 0.0, sum_out = 0.0;
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        for (std::size_t j = i + 1; j < embeddings.rows(); ++j) {
            const double dij = std::sqrt(squared_distance(embeddings.row(i), embeddings.row(j)));
            if (labels[i] == labels[j]) {
                sum_in += dij;
                ++p.intra_pairs;
            } else {
                sum_out += dij;
                ++p.inter_pairs;
            }
        }
    }
    p.flagged = p.intra_pairs == 0 || p.inter_pairs == 0;
    if (p.intra_pairs) p.d_in = sum_in / static_cast<double>(p.intra_pairs);
    if (p.inter_pairs) p.d_out = sum_out / static_cast<double>(p.inter_pairs);
    return p;
}

OffsetDistance offset_distance(double accuracy, double d_in, double d_out) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error("offset_distance: accuracy must lie in [0, 1]");
    return {accuracy * d_in + (1.0 - accuracy) * d_out, d_in > d_out};
}

double sign_test_p_value(int wins, int losses) {
    const int n = wins + losses;
    if (n <= 0) return 1.0;
    // Sum C(n, k) / 2^n for k >= wins, in log space.
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(log_c - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

std::string format_metrics_table(const RunMetrics& metrics) {
    std::ostringstream out;
    out << "session,accuracy\n";
    for (std::size_t s = 0; s < metrics.accuracies.size(); ++s) {
        out << s << ',' << format_double(metrics.accuracies[s]) << '\n';
    }
    return out.str();
}

std::string format_summary_table(const RunMetrics& metrics) {
    std::ostringstream out;
    out << "Acc_f,Acc_l,Acc_avg,PD\n";
    out << format_double(metrics.acc_first) << ',' << format_double(metrics.acc_last) << ','
        << format_double(metrics.acc_avg) << ',' << format_double(metrics.pd) << '\n';
    return out.str();
}

}  // namespace lwpk
