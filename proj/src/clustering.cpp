#include "lwpk/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

namespace {

ClusterResult lloyd(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();

    ClusterResult res;
    res.centroids = Matrix(k, d);
    auto set_centroid = [&](std::size_t c, std::size_t i) {
        std::copy(points.row(i).begin(), points.row(i).end(), res.centroids.row(c).begin());
    };

    // Farthest-point initialization.
    Rng rng(seed);
    set_centroid(0, static_cast<std::size_t>(rng.below(n)));
    std::vector<double> min_dist(n);
    for (std::size_t i = 0; i < n; ++i) min_dist[i] = squared_distance(points.row(i), res.centroids.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        const auto far = static_cast<std::size_t>(
            std::distance(min_dist.begin(), std::max_element(min_dist.begin(), min_dist.end())));
        set_centroid(c, far);
        for (std::size_t i = 0; i < n; ++i) {
            min_dist[i] = std::min(min_dist[i], squared_distance(points.row(i), res.centroids.row(c)));
        }
    }

    res.assignment.assign(n, -1);
    std::vector<double> dist(n);
    for (int iter = 0;; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(points.row(i), res.centroids.row(0));
            for (std::size_t c = 1; c < k; ++c) {
                const double dc = squared_distance(points.row(i), res.centroids.row(c));
                if (dc < best_d) {
                    best_d = dc;
                    best = static_cast<int>(c);
                }
            }
            if (res.assignment[i] != best) changed = true;
            res.assignment[i] = best;
            dist[i] = best_d;
            inertia += best_d;
        }
        res.inertia_trace.push_back(inertia);
        res.inertia = inertia;
        res.iterations = iter + 1;
        if (!changed && iter > 0) {
            res.converged = true;
            break;
        }
        if (iter + 1 >= max_iterations) break;

        // Update step.
        Matrix sums(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignment[i]);
            ++counts[c];
            auto s = sums.row(c);
            const auto p = points.row(i);
            for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                auto out = res.centroids.row(c);
                const auto s = sums.row(c);
                for (std::size_t j = 0; j < d; ++j) out[j] = s[j] / static_cast<double>(counts[c]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = true;
            set_centroid(c, far);
        }
    }
    return res;
}

}  // namespace

ClusterResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations, int restarts) {
    const std::size_t n = points.rows();
    if (k == 0) throw ShapeMismatch("kmeans: k must be >= 1");
    if (k > n) {
        throw ShapeMismatch("kmeans: k = " + std::to_string(k) + " exceeds instance count " + std::to_string(n));
    }
    if (restarts < 1) throw ShapeMismatch("kmeans: restarts must be >= 1");
    ClusterResult best = lloyd(points, k, seed, max_iterations);
    for (int r = 1; r < restarts; ++r) {
        auto res = lloyd(points, k, derive_seed(seed, "kmeans.restart." + std::to_string(r)), max_iterations);
        if (res.inertia < best.inertia) best = std::move(res);
    }
    return best;
}

PseudoLabeledSet assign_pseudo_labels(const ClusterResult& result, int label_base, std::span<const Example> pool,
                                      std::size_t expected_clusters) {
    if (result.centroids.rows() != expected_clusters) {
        throw ShapeMismatch("assign_pseudo_labels: " + std::to_string(result.centroids.rows()) +
                            " clusters, expected n*N = " + std::to_string(expected_clusters));
    }
    if (result.assignment.size() != pool.size()) {
        throw ShapeMismatch("assign_pseudo_labels: assignment length does not match pool");
    }
    PseudoLabeledSet out;
    out.label_base = label_base;
    out.clusters = static_cast<int>(expected_clusters);
    out.examples.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Example ex = pool[i];
        ex.label = label_base + result.assignment[i];
        out.examples.push_back(std::move(ex));
    }
    return out;
}

namespace {

using Wide = __int128;

Wide choose2(Wide x) { return x * (x - 1) / 2; }

}  // namespace

double ari(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ShapeMismatch("ari: partitions differ in length");
    if (a.size() < 2) throw ShapeMismatch("ari: need at least two elements");

    std::map<std::pair<int, int>, long long> cells;
    std::map<int, long long> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++cells[{a[i], b[i]}];
        ++rows[a[i]];
        ++cols[b[i]];
    }
    Wide index = 0, sum_a = 0, sum_b = 0;
    for (const auto& [key, count] : cells) index += choose2(count);
    for (const auto& [key, count] : rows) sum_a += choose2(count);
    for (const auto& [key, count] : cols) sum_b += choose2(count);
    const Wide total = choose2(static_cast<Wide>(a.size()));

    // (index - E) / (mean - E) with E = sum_a * sum_b / total, scaled by 2 * total.
    const Wide num = 2 * (total * index - sum_a * sum_b);
    const Wide den = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if (den == 0) return 1.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weights) {
    const std::size_t rows = weights.size();
    if (rows == 0) return {};
    const std::size_t cols = weights.front().size();
    if (cols == 0) return std::vector<int>(rows, -1);

    if (rows > cols) {
        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) t[c][r] = weights[r][c];
        const auto col_match = max_weight_matching(t);
        std::vector<int> out(rows, -1);
        for (std::size_t c = 0; c < cols; ++c) {
            if (col_match[c] >= 0) out[static_cast<std::size_t>(col_match[c])] = static_cast<int>(c);
        }
        return out;
    }

    // Shortest augmenting path Hungarian method on cost = -weight, n <= m, 1-based.
    const std::size_t n = rows, m = cols;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(n, -1);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) out[p[j] - 1] = static_cast<int>(j - 1);
    }
    return out;
}

AccuracyResult clustering_accuracy(std::span<const int> assignment, std::span<const int> truth) {
    if (assignment.size() != truth.size()) throw ShapeMismatch("clustering_accuracy: length mismatch");
    if (assignment.empty()) throw ShapeMismatch("clustering_accuracy: empty input");

    auto compact = [](std::span<const int> labels) {
        std::map<int, int> ids;
        for (int l : labels) ids.emplace(l, 0);
        int next = 0;
        for (auto& [label, id] : ids) id = next++;
        return ids;
    };
    const auto cluster_ids = compact(assignment);
    const auto class_ids = compact(truth);

    std::vector<std::vector<double>> table(cluster_ids.size(), std::vector<double>(class_ids.size(), 0.0));
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        table[static_cast<std::size_t>(cluster_ids.at(assignment[i]))]
             [static_cast<std::size_t>(class_ids.at(truth[i]))] += 1.0;
    }
    const auto match = max_weight_matching(table);
    double hits = 0.0;
    for (std::size_t r = 0; r < match.size(); ++r) {
        if (match[r] >= 0) hits += table[r][static_cast<std::size_t>(match[r])];
    }
    return {hits / static_cast<double>(assignment.size()), cluster_ids.size() != class_ids.size()};
}

std::string format_cluster_dump(const PseudoLabeledSet& pseudo, const ClusterResult& result) {
    std::ostringstream out;
    out << "uid,cluster,pseudo_label\n";
    for (std::size_t i = 0; i < pseudo.examples.size(); ++i) {
        out << pseudo.examples[i].uid << ',' << result.assignment[i] << ',' << *pseudo.examples[i].label << '\n';
    }
    return out.str();
}

}  // namespace lwpk
