#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lwpk/matrix.hpp"

namespace lwpk {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
    Matrix weight;              // out x in
    std::vector<double> bias;   // out

    bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward embedding network. Hidden layers apply their activation;
/// the output layer is linear.
struct EncoderParams {
    std::vector<std::size_t> dims;         // input, hidden..., embedding
    std::vector<Activation> activations;   // one per hidden layer
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const noexcept { return dims.front(); }
    std::size_t output_dim() const noexcept { return dims.back(); }

    /// Same shape, all entries zero. Used for gradients and momentum buffers.
    EncoderParams zeros_like() const;
    bool all_finite() const noexcept;
    bool same_shape(const EncoderParams& other) const noexcept;

    bool operator==(const EncoderParams&) const = default;
};

struct EncoderConfig {
    std::vector<std::size_t> dims{8, 32, 8};
    Activation activation = Activation::relu;
};

EncoderParams init_params(std::span<const std::size_t> dims, std::uint64_t seed,
                          Activation hidden = Activation::relu);

inline constexpr double kNormGuard = 1e-12;

struct EmbeddingBatch {
    Matrix values;            // batch x d
    bool normalized = false;
};

/// Scales each row to unit length; rows with norm below kNormGuard become zero.
void normalize_rows(Matrix& m);

EmbeddingBatch forward(const EncoderParams& params, const Matrix& inputs, bool normalize);

/// Where the upstream gradient attaches: the raw output layer or the
/// unit-normalized embedding.
enum class GradientAt { raw_output, normalized_output };

struct BackwardResult {
    EncoderParams params;   // d loss / d parameters
    Matrix inputs;          // d loss / d inputs
};

BackwardResult backward(const EncoderParams& params, const Matrix& inputs, const Matrix& upstream,
                        GradientAt at);

struct OptimizerState {
    EncoderParams buffer;
    double learning_rate = 0.1;
    double momentum = 0.9;
};

OptimizerState make_optimizer(const EncoderParams& params, double learning_rate, double momentum);

/// buffer <- momentum * buffer + grad; param <- param - lr * buffer.
/// Throws PoisonedStep (leaving both untouched) if any gradient is non-finite.
void sgd_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state);

/// The same update for a flat parameter block (e.g. a classifier head).
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> buffer,
              double learning_rate, double momentum);

/// Versioned text checkpoint; values round-trip exactly.
std::string format_checkpoint(const EncoderParams& params);
EncoderParams parse_checkpoint(std::string_view text);

}  // namespace lwpk
