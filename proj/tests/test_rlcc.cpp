#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lwpk/datastream.hpp"
#include "lwpk/errors.hpp"
#include "lwpk/rlcc.hpp"
#include "support.hpp"

using namespace lwpk;
using namespace lwpk::testing;

namespace {

EmbeddingBatch unit_rows(Matrix m) {
    normalize_rows(m);
    return {std::move(m), true};
}

MemoryBank random_bank(Rng& rng, std::size_t rows, std::size_t dim, double t1) {
    return make_bank(unit_rows(random_matrix(rng, rows, dim)), 0.5, t1);
}

}  // namespace

TEST_CASE("L1 single-row bank is zero") {
    const auto v = unit_rows(stack_rows({{0.6, 0.8}}));
    const auto bank = make_bank(v, 0.5, 0.1);
    const std::vector<std::size_t> idx{0};
    CHECK(instance_discrimination_loss(bank, v, idx).loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("L1 with orthonormal bank at t1 = 1") {
    Matrix rows(4, 4);
    for (std::size_t i = 0; i < 4; ++i) rows(i, i) = 1.0;
    const MemoryBank bank{rows, 0.5, 1.0};
    const EmbeddingBatch q{stack_rows({{1, 0, 0, 0}}), true};
    const std::vector<std::size_t> idx{0};
    const double e = std::exp(1.0);
    CHECK(instance_discrimination_loss(bank, q, idx).loss == doctest::Approx(-std::log(e / (e + 3.0))).epsilon(1e-12));
}

TEST_CASE("L1 rejects out-of-range indices") {
    Rng rng(1);
    const auto bank = random_bank(rng, 3, 4, 0.1);
    const auto v = unit_rows(random_matrix(rng, 1, 4));
    const std::vector<std::size_t> idx{3};
    CHECK_THROWS_AS(instance_discrimination_loss(bank, v, idx), ShapeMismatch);
}

TEST_CASE("L1 gradient matches finite differences on a 6-row bank") {
    Rng rng(7);
    const auto bank = random_bank(rng, 6, 5, 0.3);
    const Matrix raw = random_matrix(rng, 3, 5);
    const std::vector<std::size_t> idx{0, 4, 2};
    // as a function of the unit embedding itself (no renormalisation inside)
    auto f = [&](const std::vector<double>& x) {
        return instance_discrimination_loss(bank, {reshape(x, 3, 5), true}, idx).loss;
    };
    const auto v = unit_rows(raw);
    const auto g = instance_discrimination_loss(bank, v, idx).grad;
    CHECK(relative_error(flatten(g), numeric_gradient(f, flatten(v.values))) < 1e-4);
}

TEST_CASE("losses are non-negative and softmax rows sum to one") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto bank = random_bank(rng, 8, 4, 0.1);
        const auto v = unit_rows(random_matrix(rng, 5, 4));
        const std::vector<std::size_t> idx{0, 1, 2, 3, 7};
        CHECK(instance_discrimination_loss(bank, v, idx).loss >= 0.0);
        CHECK(feature_decorrelation_loss(v.values, {2.0, 1.0}).loss >= 0.0);

        for (std::size_t b = 0; b < 5; ++b) {
            std::vector<double> e(8);
            double mx = -1e300, s = 0.0;
            for (std::size_t j = 0; j < 8; ++j) mx = std::max(mx, dot(bank.rows.row(j), v.values.row(b)) / 0.1);
            for (std::size_t j = 0; j < 8; ++j) s += (e[j] = std::exp(dot(bank.rows.row(j), v.values.row(b)) / 0.1 - mx));
            double total = 0.0;
            for (double x : e) total += x / s;
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("bank update rules") {
    const auto a = unit_rows(stack_rows({{1, 0}}));
    const auto b = unit_rows(stack_rows({{0, 1}}));
    const std::vector<std::size_t> idx{0};

    auto bank = make_bank(a, 0.0, 0.1);
    update_bank(bank, b, idx);
    CHECK(bank.rows == b.values);

    bank = make_bank(a, 1.0, 0.1);
    update_bank(bank, b, idx);
    CHECK(bank.rows == a.values);

    bank = make_bank(a, 0.5, 0.1);
    update_bank(bank, b, idx);
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(bank.rows(0, 0) == doctest::Approx(h).epsilon(1e-15));
    CHECK(bank.rows(0, 1) == doctest::Approx(h).epsilon(1e-15));
    CHECK(std::abs(norm2(bank.rows.row(0)) - 1.0) < 1e-6);
}

TEST_CASE("L2 on orthogonal dimension vectors at t2 = 1") {
    // columns are orthogonal unit vectors of length 4
    const Matrix m = stack_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 3}, {0, 0, 0}});
    const auto r = feature_decorrelation_loss(m, {1.0, 1.0});
    const double e = std::exp(1.0);
    CHECK(r.loss == doctest::Approx(-3.0 * std::log(e / (e + 2.0))).epsilon(1e-12));
    CHECK(r.skipped_dims.empty());
}

TEST_CASE("L2 single dimension and skipped dimensions") {
    const Matrix one = stack_rows({{0.3}, {-1.2}, {2.0}});
    CHECK(feature_decorrelation_loss(one, {2.0, 1.0}).loss == doctest::Approx(0.0).epsilon(1e-15));

    const Matrix dead = stack_rows({{1.0, 0.0, 2.0}, {3.0, 0.0, -1.0}});
    const auto r = feature_decorrelation_loss(dead, {2.0, 1.0});
    REQUIRE(r.skipped_dims.size() == 1);
    CHECK(r.skipped_dims[0] == 1);
    CHECK(r.grad(0, 1) == 0.0);
    CHECK(r.grad(1, 1) == 0.0);

    CHECK_THROWS_AS(feature_decorrelation_loss(stack_rows({{1.0, 2.0}}), {2.0, 1.0}), ShapeMismatch);
}

TEST_CASE("L2 gradient matches finite differences on an 8x4 batch") {
    Rng rng(11);
    const Matrix m = random_matrix(rng, 8, 4);
    auto f = [&](const std::vector<double>& x) { return feature_decorrelation_loss(reshape(x, 8, 4), {2.0, 1.0}).loss; };
    const auto g = feature_decorrelation_loss(m, {2.0, 1.0}).grad;
    CHECK(relative_error(flatten(g), numeric_gradient(f, flatten(m))) < 1e-4);
}

TEST_CASE("combined loss and gradient") {
    CHECK(combined_loss(2.0, 0.5, 1.0) == 2.5);
    CHECK(combined_loss(2.0, 0.5, 0.0) == 2.0);
    Rng rng(4);
    const Matrix g1 = random_matrix(rng, 3, 2), g2 = random_matrix(rng, 3, 2);
    const auto c = combined_gradient(g1, g2, 0.25);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.flat()[i] == g1.flat()[i] + 0.25 * g2.flat()[i]);
}

TEST_CASE("zero epochs returns the initial parameters") {
    Rng rng(8);
    const Matrix pool = random_matrix(rng, 12, 8);
    RlccConfig cfg;
    cfg.epochs = 0;
    const auto r = train_representation(pool, EncoderConfig{}, cfg, 5);
    CHECK(r.params == init_params(EncoderConfig{}.dims, derive_seed(5, "rlcc.init")));
    CHECK(r.trace.size() == 1);
}

TEST_CASE("training lowers L_u on a separated 4-class pool") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SyntheticSpec spec;
        spec.class_count = 4;
        spec.spread = 10.0;
        spec.seed = seed;
        Protocol p{2, 10, 1, 1, 2, 15};
        spec.samples_per_class = 30;
        const auto s = generate_synthetic(spec, p);
        const Matrix pool = feature_matrix(draw_unlabeled(s));
        RlccConfig cfg;
        cfg.epochs = 50;
        cfg.learning_rate = 0.01;
        const auto r = train_representation(pool, EncoderConfig{}, cfg, seed);
        REQUIRE(r.trace.size() == 51);
        CHECK(r.trace.back().lu < r.trace.front().lu);
    }
}

TEST_CASE("training is deterministic per seed") {
    Rng rng(9);
    const Matrix pool = random_matrix(rng, 20, 8);
    RlccConfig cfg;
    cfg.epochs = 3;
    const auto a = train_representation(pool, EncoderConfig{}, cfg, 1);
    const auto b = train_representation(pool, EncoderConfig{}, cfg, 1);
    CHECK(format_checkpoint(a.params) == format_checkpoint(b.params));
    CHECK(format_loss_trace(a.trace) == format_loss_trace(b.trace));
    CHECK(format_loss_trace(a.trace).rfind("epoch,L1,L2,L_u\n", 0) == 0);
}
