#include "lwpk/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw Error("unknown activation '" + std::string(name) + "'");
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z;
    z.dims = dims;
    z.activations = activations;
    for (const auto& l : layers) {
        z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size())});
    }
    return z;
}

bool EncoderParams::all_finite() const noexcept {
    for (const auto& l : layers) {
        for (double v : l.weight.flat()) if (!std::isfinite(v)) return false;
        for (double v : l.bias) if (!std::isfinite(v)) return false;
    }
    return true;
}

bool EncoderParams::same_shape(const EncoderParams& other) const noexcept {
    if (dims != other.dims || layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
            layers[i].weight.cols() != other.layers[i].weight.cols() ||
            layers[i].bias.size() != other.layers[i].bias.size()) {
            return false;
        }
    }
    return true;
}

EncoderParams init_params(std::span<const std::size_t> dims, std::uint64_t seed, Activation hidden) {
    if (dims.size() < 2) throw ShapeMismatch("init_params: need at least input and output dims");
    for (auto d : dims) if (d == 0) throw ShapeMismatch("init_params: dims must be positive");

    EncoderParams p;
    p.dims.assign(dims.begin(), dims.end());
    p.activations.assign(dims.size() - 2, hidden);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer{Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1], 0.0)};
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (auto& w : layer.weight.flat()) w = scale * rng.normal();
        p.layers.push_back(std::move(layer));
    }
    return p;
}

void normalize_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const double n = norm2(row);
        if (n < kNormGuard) {
            std::fill(row.begin(), row.end(), 0.0);
        } else {
            for (auto& v : row) v /= n;
        }
    }
}

namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

// Derivative expressed through the pre-activation value.
double activate_grad(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

Matrix affine(const DenseLayer& layer, const Matrix& in) {
    Matrix out(in.rows(), layer.weight.rows());
    for (std::size_t b = 0; b < in.rows(); ++b) {
        const auto x = in.row(b);
        for (std::size_t o = 0; o < layer.weight.rows(); ++o) {
            out(b, o) = dot(layer.weight.row(o), x) + layer.bias[o];
        }
    }
    return out;
}

struct Trace {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
};

Trace run(const EncoderParams& params, const Matrix& inputs) {
    if (params.layers.empty()) throw ShapeMismatch("forward: encoder has no layers");
    if (inputs.cols() != params.input_dim()) {
        throw ShapeMismatch("forward: input dim " + std::to_string(inputs.cols()) + " != encoder input dim " +
                            std::to_string(params.input_dim()));
    }
    Trace t;
    Matrix current = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Matrix pre = affine(params.layers[l], current);
        t.inputs.push_back(std::move(current));
        current = pre;
        if (l + 1 < params.layers.size()) {
            for (auto& v : current.flat()) v = activate(params.activations[l], v);
        }
        t.pre.push_back(std::move(pre));
    }
    t.inputs.push_back(std::move(current));  // final output
    return t;
}

}  // namespace

EmbeddingBatch forward(const EncoderParams& params, const Matrix& inputs, bool normalize) {
    Trace t = run(params, inputs);
    EmbeddingBatch out{std::move(t.inputs.back()), normalize};
    if (normalize) normalize_rows(out.values);
    return out;
}

BackwardResult backward(const EncoderParams& params, const Matrix& inputs, const Matrix& upstream,
                        GradientAt at) {
    Trace t = run(params, inputs);
    const Matrix& output = t.inputs.back();
    if (upstream.rows() != output.rows() || upstream.cols() != output.cols()) {
        throw ShapeMismatch("backward: upstream gradient shape does not match encoder output");
    }

    Matrix grad = upstream;
    if (at == GradientAt::normalized_output) {
        for (std::size_t b = 0; b < output.rows(); ++b) {
            const auto x = output.row(b);
            auto g = grad.row(b);
            const double n = norm2(x);
            if (n < kNormGuard) {
                std::fill(g.begin(), g.end(), 0.0);
                continue;
            }
            // d(x/|x|) = (I - y y^T) / |x|
            double yg = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) yg += x[j] * g[j];
            yg /= n;
            for (std::size_t j = 0; j < x.size(); ++j) g[j] = (g[j] - (x[j] / n) * yg) / n;
        }
    }

    BackwardResult result{params.zeros_like(), Matrix()};
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        if (l + 1 < params.layers.size()) {
            const Matrix& pre = t.pre[l];
            for (std::size_t i = 0; i < grad.size(); ++i) {
                grad.flat()[i] *= activate_grad(params.activations[l], pre.flat()[i]);
            }
        }
        const Matrix& in = t.inputs[l];
        const auto& layer = params.layers[l];
        auto& g_layer = result.params.layers[l];
        for (std::size_t b = 0; b < grad.rows(); ++b) {
            const auto gb = grad.row(b);
            const auto xb = in.row(b);
            for (std::size_t o = 0; o < gb.size(); ++o) {
                g_layer.bias[o] += gb[o];
                auto wrow = g_layer.weight.row(o);
                for (std::size_t i = 0; i < xb.size(); ++i) wrow[i] += gb[o] * xb[i];
            }
        }
        Matrix g_in(grad.rows(), layer.weight.cols());
        for (std::size_t b = 0; b < grad.rows(); ++b) {
            for (std::size_t o = 0; o < layer.weight.rows(); ++o) {
                const double go = grad(b, o);
                const auto wrow = layer.weight.row(o);
                for (std::size_t i = 0; i < wrow.size(); ++i) g_in(b, i) += go * wrow[i];
            }
        }
        grad = std::move(g_in);
    }
    result.inputs = std::move(grad);
    return result;
}

OptimizerState make_optimizer(const EncoderParams& params, double learning_rate, double momentum) {
    return {params.zeros_like(), learning_rate, momentum};
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> buffer,
              double learning_rate, double momentum) {
    if (params.size() != grads.size() || params.size() != buffer.size()) {
        throw ShapeMismatch("sgd_step: parameter, gradient and buffer sizes differ");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) throw PoisonedStep("sgd_step: non-finite gradient entry");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        buffer[i] = momentum * buffer[i] + grads[i];
        params[i] -= learning_rate * buffer[i];
    }
}

void sgd_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.buffer)) {
        throw ShapeMismatch("sgd_step: gradient or buffer shape does not mirror parameters");
    }
    if (!grads.all_finite()) throw PoisonedStep("sgd_step: non-finite gradient entry");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        auto& b = state.buffer.layers[l];
        const auto& g = grads.layers[l];
        sgd_step(p.weight.flat(), g.weight.flat(), b.weight.flat(), state.learning_rate, state.momentum);
        sgd_step(p.bias, g.bias, b.bias, state.learning_rate, state.momentum);
    }
}

std::string format_checkpoint(const EncoderParams& params) {
    std::ostringstream out;
    out << "lwpk-encoder 1\n";
    out << "dims";
    for (auto d : params.dims) out << ' ' << d;
    out << "\nactivations";
    for (auto a : params.activations) out << ' ' << to_string(a);
    out << '\n';
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        out << "layer " << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
        for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
            const auto row = layer.weight.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << format_double(row[c]);
            out << '\n';
        }
        out << "bias";
        for (double v : layer.bias) out << ' ' << format_double(v);
        out << '\n';
    }
    return out.str();
}

EncoderParams parse_checkpoint(std::string_view text) {
    std::istringstream in{std::string(text)};
    auto fail = [](const std::string& what) -> EncoderParams { throw Error("checkpoint: " + what); };
    auto number = [&](double& v) {
        std::string tok;
        if (!(in >> tok)) return false;
        const auto parsed = parse_double(tok);
        if (!parsed) return false;
        v = *parsed;
        return true;
    };

    std::string magic, tag;
    int version = 0;
    if (!(in >> magic >> version) || magic != "lwpk-encoder") return fail("bad header");
    if (version != 1) return fail("unsupported version " + std::to_string(version));

    std::string line;
    std::getline(in, line);
    EncoderParams p;
    if (!std::getline(in, line)) return fail("missing dims");
    {
        std::istringstream ls(line);
        ls >> tag;
        if (tag != "dims") return fail("expected dims");
        std::size_t d;
        while (ls >> d) p.dims.push_back(d);
    }
    if (p.dims.size() < 2) return fail("need at least two dims");
    if (!std::getline(in, line)) return fail("missing activations");
    {
        std::istringstream ls(line);
        ls >> tag;
        if (tag != "activations") return fail("expected activations");
        std::string a;
        while (ls >> a) p.activations.push_back(parse_activation(a));
    }
    if (p.activations.size() != p.dims.size() - 2) return fail("activation count mismatch");

    for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
        std::size_t index, rows, cols;
        if (!(in >> tag >> index >> rows >> cols) || tag != "layer" || index != l) return fail("bad layer header");
        if (rows != p.dims[l + 1] || cols != p.dims[l]) return fail("layer shape does not chain");
        DenseLayer layer{Matrix(rows, cols), std::vector<double>(rows)};
        for (auto& v : layer.weight.flat()) if (!number(v)) return fail("bad weight value");
        if (!(in >> tag) || tag != "bias") return fail("expected bias");
        for (auto& v : layer.bias) if (!number(v)) return fail("bad bias value");
        p.layers.push_back(std::move(layer));
    }
    return p;
}

}  // namespace lwpk
