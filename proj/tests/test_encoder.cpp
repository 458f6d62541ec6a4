#include <doctest.h>

#include <cmath>
#include <limits>

#include "lwpk/encoder.hpp"
#include "lwpk/errors.hpp"
#include "support.hpp"

using namespace lwpk;
using namespace lwpk::testing;

namespace {

std::vector<double> flat_params(const EncoderParams& p) {
    std::vector<double> out;
    for (const auto& l : p.layers) {
        out.insert(out.end(), l.weight.flat().begin(), l.weight.flat().end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

EncoderParams with_flat(EncoderParams p, const std::vector<double>& v) {
    std::size_t k = 0;
    for (auto& l : p.layers) {
        for (auto& w : l.weight.flat()) w = v[k++];
        for (auto& b : l.bias) b = v[k++];
    }
    return p;
}

// sum of upstream (.) output, a linear functional whose gradient is `upstream`
double probe(const EncoderParams& p, const Matrix& x, const Matrix& upstream, bool normalize) {
    const auto out = forward(p, x, normalize);
    double s = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) s += out.values.flat()[i] * upstream.flat()[i];
    return s;
}

}  // namespace

TEST_CASE("init shapes and determinism") {
    const std::vector<std::size_t> dims{4, 8, 3};
    const auto p = init_params(dims, 1);
    REQUIRE(p.layers.size() == 2);
    CHECK(p.layers[0].weight.rows() == 8);
    CHECK(p.layers[0].weight.cols() == 4);
    CHECK(p.layers[0].bias.size() == 8);
    CHECK(p.layers[1].weight.rows() == 3);
    CHECK(p.layers[1].weight.cols() == 8);
    CHECK(p.layers[1].bias.size() == 3);
    for (double b : p.layers[0].bias) CHECK(b == 0.0);
    CHECK(p == init_params(dims, 1));
    CHECK_FALSE(p == init_params(dims, 2));

    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4}, 1), ShapeMismatch);
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4, 0, 2}, 1), ShapeMismatch);
}

TEST_CASE("identity layer passes input through") {
    auto p = init_params(std::vector<std::size_t>{3, 3}, 0);
    p.layers[0].weight = Matrix(3, 3);
    for (std::size_t i = 0; i < 3; ++i) p.layers[0].weight(i, i) = 1.0;
    const Matrix x = stack_rows({{1.5, -2.0, 0.25}, {0.0, 3.0, -1.0}});
    CHECK(forward(p, x, false).values == x);
}

TEST_CASE("zero input, zero bias gives the guarded zero row") {
    const auto p = init_params(std::vector<std::size_t>{5, 4, 3}, 3);
    const auto out = forward(p, Matrix(2, 5), true);
    CHECK(out.normalized);
    for (double v : out.values.flat()) CHECK(v == 0.0);
}

TEST_CASE("forward matches a straight-line re-evaluation") {
    Rng rng(17);
    for (auto act : {Activation::relu, Activation::tanh}) {
        auto p = init_params(std::vector<std::size_t>{5, 7, 4}, 9, act);
        for (auto& b : p.layers[0].bias) b = rng.normal();
        for (auto& b : p.layers[1].bias) b = rng.normal();
        const Matrix x = random_matrix(rng, 5, 5);
        const auto got = forward(p, x, false).values;
        for (std::size_t r = 0; r < 5; ++r) {
            double h[7];
            for (std::size_t j = 0; j < 7; ++j) {
                double s = p.layers[0].bias[j];
                for (std::size_t i = 0; i < 5; ++i) s += p.layers[0].weight(j, i) * x(r, i);
                h[j] = act == Activation::relu ? std::max(0.0, s) : std::tanh(s);
            }
            for (std::size_t k = 0; k < 4; ++k) {
                double s = p.layers[1].bias[k];
                for (std::size_t j = 0; j < 7; ++j) s += p.layers[1].weight(k, j) * h[j];
                CHECK(got(r, k) == doctest::Approx(s).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("forward is deterministic and normalized rows are unit") {
    Rng rng(2);
    const auto p = init_params(std::vector<std::size_t>{6, 10, 5}, 4);
    const Matrix x = random_matrix(rng, 9, 6);
    CHECK(forward(p, x, true).values == forward(p, x, true).values);
    const auto z = forward(p, x, true).values;
    for (std::size_t r = 0; r < z.rows(); ++r) CHECK(std::abs(norm2(z.row(r)) - 1.0) < 1e-6);
}

TEST_CASE("backward matches finite differences") {
    for (int cfg = 0; cfg < 20; ++cfg) {
        Rng rng(100 + static_cast<std::uint64_t>(cfg));
        const auto act = cfg % 2 == 0 ? Activation::tanh : Activation::relu;
        auto p = init_params(std::vector<std::size_t>{4, 6, 3}, 50 + static_cast<std::uint64_t>(cfg), act);
        for (auto& b : p.layers[0].bias) b = 0.3 * rng.normal();
        const Matrix x = random_matrix(rng, 5, 4);
        const Matrix up = random_matrix(rng, 5, 3);
        for (bool normalize : {false, true}) {
            const auto at = normalize ? GradientAt::normalized_output : GradientAt::raw_output;
            const auto g = backward(p, x, up, at);
            const auto num_p = numeric_gradient(
                [&](const std::vector<double>& v) { return probe(with_flat(p, v), x, up, normalize); }, flat_params(p));
            CHECK(relative_error(flat_params(g.params), num_p) < 1e-4);
            const auto num_x = numeric_gradient(
                [&](const std::vector<double>& v) { return probe(p, reshape(v, 5, 4), up, normalize); }, flatten(x));
            CHECK(relative_error(flatten(g.inputs), num_x) < 1e-4);
        }
    }
}

TEST_CASE("zero upstream gives zero gradients") {
    Rng rng(5);
    const auto p = init_params(std::vector<std::size_t>{3, 4, 2}, 5);
    const auto g = backward(p, random_matrix(rng, 4, 3), Matrix(4, 2), GradientAt::raw_output);
    for (double v : flat_params(g.params)) CHECK(v == 0.0);
    CHECK_THROWS_AS(backward(p, Matrix(4, 3), Matrix(4, 3), GradientAt::raw_output), ShapeMismatch);
}

TEST_CASE("sgd step rules") {
    std::vector<double> w{1.0, -2.0}, buf{0.0, 0.0};
    const std::vector<double> g{0.5, 1.0};
    sgd_step(w, g, buf, 0.1, 0.0);
    CHECK(w[0] == doctest::Approx(0.95));
    CHECK(w[1] == doctest::Approx(-2.1));

    std::vector<double> v{0.0}, carry{2.0};
    const std::vector<double> zero{0.0};
    sgd_step(v, zero, carry, 0.1, 0.5);
    CHECK(v[0] == doctest::Approx(-0.1 * 0.5 * 2.0));

    // f(x) = x^2 / 2, g = x; hand-unrolled heavy-ball recurrence
    std::vector<double> x{1.0}, b{0.0};
    double ex = 1.0, eb = 0.0;
    for (int i = 0; i < 3; ++i) {
        const std::vector<double> grad{x[0]};
        sgd_step(x, grad, b, 0.1, 0.9);
        eb = 0.9 * eb + ex;
        ex = ex - 0.1 * eb;
    }
    CHECK(x[0] == ex);
    // 1 -> 0.9 -> 0.72 -> 0.486
    CHECK(x[0] == doctest::Approx(0.486).epsilon(1e-12));
}

TEST_CASE("poisoned step leaves state untouched") {
    auto p = init_params(std::vector<std::size_t>{3, 2}, 1);
    auto opt = make_optimizer(p, 0.1, 0.9);
    auto g = p.zeros_like();
    g.layers[0].weight(0, 0) = 1.0;
    sgd_step(p, g, opt);
    const auto before = p;
    const auto buffer_before = opt.buffer;
    g.layers[0].bias[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_step(p, g, opt), PoisonedStep);
    CHECK(p == before);
    CHECK(opt.buffer == buffer_before);
}

TEST_CASE("checkpoint round trip is exact") {
    auto p = init_params(std::vector<std::size_t>{5, 9, 4, 3}, 12, Activation::tanh);
    p.layers[1].bias[2] = 1.0 / 3.0;
    const auto back = parse_checkpoint(format_checkpoint(p));
    CHECK(back == p);
    CHECK(format_checkpoint(back) == format_checkpoint(p));
    CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), Error);
}
