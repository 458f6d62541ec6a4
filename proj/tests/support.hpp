#pragma once
// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "lwpk/matrix.hpp"
#include "lwpk/random.hpp"

namespace lwpk::testing {

// Central differences of a scalar function of a flat parameter vector.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// max |a - n| / max(max |a|, max |n|, 1e-8)
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return diff / scale;
}

inline std::vector<double> flatten(const Matrix& m) { return {m.flat().begin(), m.flat().end()}; }

inline Matrix reshape(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.flat().begin());
    return m;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.flat()) v = scale * rng.normal();
    return m;
}

// Adjusted Rand index by walking every unordered pair once.
inline double pair_count_ari(const std::vector<int>& a, const std::vector<int>& b) {
    long long n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            if (sa && sb) ++n11;
            else if (sa) ++n10;
            else if (sb) ++n01;
            else ++n00;
        }
    }
    const long long num = 2 * (n00 * n11 - n01 * n10);
    const long long den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if (den == 0) return 1.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

// Best hit count over every injective relabeling of clusters onto classes.
inline double exhaustive_accuracy(const std::vector<int>& assignment, const std::vector<int>& truth) {
    std::map<int, int> cid, tid;
    for (int c : assignment) cid.emplace(c, static_cast<int>(cid.size()));
    for (int t : truth) tid.emplace(t, static_cast<int>(tid.size()));
    const int width = static_cast<int>(std::max(cid.size(), tid.size()));
    std::vector<int> perm(width);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (perm[cid[assignment[i]]] == tid[truth[i]]) ++hits;
        }
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(assignment.size());
}

inline std::vector<int> random_partition(Rng& rng, std::size_t n, int max_labels) {
    std::vector<int> out(n);
    for (auto& v : out) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_labels)));
    return out;
}

}  // namespace lwpk::testing
