#pragma once

// Representation learning for clustering: instance discrimination against a
// memory bank plus feature decorrelation, trained jointly.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lwpk/datastream.hpp"
#include "lwpk/encoder.hpp"
#include "lwpk/matrix.hpp"

namespace lwpk {

/// One unit-norm feature per pool instance, the softmax support of L1.
struct MemoryBank {
    Matrix rows;
    double momentum = 0.5;
    double temperature = 0.1;  // t1
};

MemoryBank make_bank(const EmbeddingBatch& embeddings, double momentum, double temperature);

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d embeddings
};

/// L1 = -sum_b log P(i_b | v_b) with P(i|v) = softmax_j(v_j . v / t1) over
/// every bank row. The bank is treated as a constant.
LossAndGrad instance_discrimination_loss(const MemoryBank& bank, const EmbeddingBatch& embeddings,
                                         std::span<const std::size_t> indices);

/// row_i <- normalize(m * row_i + (1 - m) * v).
void update_bank(MemoryBank& bank, const EmbeddingBatch& embeddings, std::span<const std::size_t> indices);

struct DecorrelationConfig {
    double temperature = 2.0;  // t2
    double beta = 1.0;
};

struct DecorrelationResult {
    double loss = 0.0;
    Matrix grad;
    std::vector<std::size_t> skipped_dims;  // dimension vectors below the norm guard
};

/// L2 over the d dimension-vectors (columns) of the batch, each normalized
/// to unit length: L2 = -sum_i log softmax_j(f_j . f_i / t2)[i].
DecorrelationResult feature_decorrelation_loss(const Matrix& embeddings, const DecorrelationConfig& config);

/// L_u = L1 + beta * L2.
double combined_loss(double l1, double l2, double beta);
Matrix combined_gradient(const Matrix& g1, const Matrix& g2, double beta);

struct RlccConfig {
    double t1 = 0.1;
    double t2 = 2.0;
    double beta = 1.0;
    double bank_momentum = 0.5;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.0;
    bool include_base = false;  // also train on the labeled base set (labels unused)
    int kmeans_restarts = 100;
};

struct LossTraceRow {
    int epoch = 0;
    double l1 = 0.0;
    double l2 = 0.0;
    double lu = 0.0;
};

struct RepresentationResult {
    EncoderParams params;
    std::vector<LossTraceRow> trace;  // epoch 0 is the untrained model
};

/// Full-pool evaluation of (L1, L2, L_u) for the current encoder and bank.
LossTraceRow evaluate_representation(const EncoderParams& params, const Matrix& pool, const MemoryBank& bank,
                                     const RlccConfig& config);

RepresentationResult train_representation(const Matrix& pool, const EncoderConfig& encoder,
                                          const RlccConfig& config, std::uint64_t seed);

/// Delimited text: epoch,L1,L2,L_u.
std::string format_loss_trace(std::span<const LossTraceRow> trace);

}  // namespace lwpk
