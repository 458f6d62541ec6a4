#include "lwpk/rlcc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

namespace {

// Stable log-sum-exp; fills `probs` with the softmax.
double log_softmax_into(std::span<const double> logits, std::span<double> probs) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        probs[j] = std::exp(logits[j] - mx);
        sum += probs[j];
    }
    for (auto& p : probs) p /= sum;
    return mx + std::log(sum);
}

}  // namespace

MemoryBank make_bank(const EmbeddingBatch& embeddings, double momentum, double temperature) {
    MemoryBank bank{embeddings.values, momentum, temperature};
    if (!embeddings.normalized) normalize_rows(bank.rows);
    return bank;
}

LossAndGrad instance_discrimination_loss(const MemoryBank& bank, const EmbeddingBatch& embeddings,
                                         std::span<const std::size_t> indices) {
    const Matrix& v = embeddings.values;
    if (!embeddings.normalized) throw ShapeMismatch("instance_discrimination_loss: embeddings must be normalized");
    if (indices.size() != v.rows()) throw ShapeMismatch("instance_discrimination_loss: one index per batch row");
    if (v.cols() != bank.rows.cols()) throw ShapeMismatch("instance_discrimination_loss: dim mismatch with bank");
    for (auto i : indices) {
        if (i >= bank.rows.rows()) {
            throw ShapeMismatch("instance_discrimination_loss: index " + std::to_string(i) + " outside bank of " +
                                std::to_string(bank.rows.rows()));
        }
    }

    const double t1 = bank.temperature;
    const std::size_t n = bank.rows.rows();
    LossAndGrad out{0.0, Matrix(v.rows(), v.cols())};
    std::vector<double> logits(n), probs(n);
    for (std::size_t b = 0; b < v.rows(); ++b) {
        const auto vb = v.row(b);
        for (std::size_t j = 0; j < n; ++j) logits[j] = dot(bank.rows.row(j), vb) / t1;
        const double lse = log_softmax_into(logits, probs);
        const std::size_t target = indices[b];
        out.loss += lse - logits[target];

        auto g = out.grad.row(b);
        for (std::size_t j = 0; j < n; ++j) {
            const double coeff = (probs[j] - (j == target ? 1.0 : 0.0)) / t1;
            const auto vj = bank.rows.row(j);
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += coeff * vj[k];
        }
    }
    return out;
}

void update_bank(MemoryBank& bank, const EmbeddingBatch& embeddings, std::span<const std::size_t> indices) {
    const Matrix& v = embeddings.values;
    if (indices.size() != v.rows() || v.cols() != bank.rows.cols()) {
        throw ShapeMismatch("update_bank: batch does not match bank");
    }
    const double m = bank.momentum;
    for (std::size_t b = 0; b < v.rows(); ++b) {
        auto row = bank.rows.row(indices[b]);
        const auto vb = v.row(b);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = m * row[k] + (1.0 - m) * vb[k];
        const double n = norm2(row);
        if (n < kNormGuard) {
            std::fill(row.begin(), row.end(), 0.0);
        } else {
            for (auto& x : row) x /= n;
        }
    }
}

DecorrelationResult feature_decorrelation_loss(const Matrix& embeddings, const DecorrelationConfig& config) {
    const std::size_t batch = embeddings.rows();
    const std::size_t d = embeddings.cols();
    if (batch < 2) throw ShapeMismatch("feature_decorrelation_loss: batch size must be >= 2");

    DecorrelationResult out{0.0, Matrix(batch, d), {}};
    // Dimension vectors: column k of the batch.
    std::vector<std::size_t> active;
    std::vector<double> norms(d);
    Matrix unit(d, batch);
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += embeddings(b, k) * embeddings(b, k);
        norms[k] = std::sqrt(s);
        if (norms[k] < kNormGuard) {
            out.skipped_dims.push_back(k);
            continue;
        }
        active.push_back(k);
        for (std::size_t b = 0; b < batch; ++b) unit(k, b) = embeddings(b, k) / norms[k];
    }

    const std::size_t a = active.size();
    if (a == 0) return out;
    const double t2 = config.temperature;

    // coeff(i, j) = P(i, j) - [i == j], over active dims.
    Matrix coeff(a, a);
    std::vector<double> logits(a), probs(a);
    for (std::size_t i = 0; i < a; ++i) {
        const auto fi = unit.row(active[i]);
        for (std::size_t j = 0; j < a; ++j) logits[j] = dot(unit.row(active[j]), fi) / t2;
        const double lse = log_softmax_into(logits, probs);
        out.loss += lse - logits[i];
        for (std::size_t j = 0; j < a; ++j) coeff(i, j) = probs[j] - (i == j ? 1.0 : 0.0);
    }

    std::vector<double> g_unit(batch);
    for (std::size_t i = 0; i < a; ++i) {
        std::fill(g_unit.begin(), g_unit.end(), 0.0);
        for (std::size_t j = 0; j < a; ++j) {
            const double c = (coeff(i, j) + coeff(j, i)) / t2;
            const auto fj = unit.row(active[j]);
            for (std::size_t b = 0; b < batch; ++b) g_unit[b] += c * fj[b];
        }
        // Back through f / |f|.
        const auto fi = unit.row(active[i]);
        const double proj = dot(fi, g_unit);
        const std::size_t k = active[i];
        for (std::size_t b = 0; b < batch; ++b) out.grad(b, k) = (g_unit[b] - fi[b] * proj) / norms[k];
    }
    return out;
}

double combined_loss(double l1, double l2, double beta) { return l1 + beta * l2; }

Matrix combined_gradient(const Matrix& g1, const Matrix& g2, double beta) {
    if (g1.rows() != g2.rows() || g1.cols() != g2.cols()) throw ShapeMismatch("combined_gradient: shape mismatch");
    Matrix out = g1;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] += beta * g2.flat()[i];
    return out;
}

LossTraceRow evaluate_representation(const EncoderParams& params, const Matrix& pool, const MemoryBank& bank,
                                     const RlccConfig& config) {
    const auto emb = forward(params, pool, true);
    std::vector<std::size_t> all(pool.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    LossTraceRow row;
    row.l1 = instance_discrimination_loss(bank, emb, all).loss;
    row.l2 = pool.rows() >= 2 ? feature_decorrelation_loss(emb.values, {config.t2, config.beta}).loss : 0.0;
    row.lu = combined_loss(row.l1, row.l2, config.beta);
    return row;
}

RepresentationResult train_representation(const Matrix& pool, const EncoderConfig& encoder,
                                          const RlccConfig& config, std::uint64_t seed) {
    if (pool.rows() == 0) throw ProtocolInfeasible("train_representation: empty pool");
    if (config.batch_size < 1) throw ShapeMismatch("train_representation: batch size must be >= 1");

    RepresentationResult result;
    result.params = init_params(encoder.dims, derive_seed(seed, "rlcc.init"), encoder.activation);
    MemoryBank bank = make_bank(forward(result.params, pool, true), config.bank_momentum, config.t1);
    result.trace.push_back(evaluate_representation(result.params, pool, bank, config));
    if (config.epochs <= 0) return result;

    auto opt = make_optimizer(result.params, config.learning_rate, config.momentum);
    Rng rng(derive_seed(seed, "rlcc.batches"));
    std::vector<std::size_t> order(pool.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            Matrix xb(idx.size(), pool.cols());
            for (std::size_t b = 0; b < idx.size(); ++b) {
                std::copy(pool.row(idx[b]).begin(), pool.row(idx[b]).end(), xb.row(b).begin());
            }

            const auto emb = forward(result.params, xb, true);
            auto l1 = instance_discrimination_loss(bank, emb, idx);
            Matrix grad = std::move(l1.grad);
            if (idx.size() >= 2 && config.beta != 0.0) {
                const auto l2 = feature_decorrelation_loss(emb.values, {config.t2, config.beta});
                grad = combined_gradient(grad, l2.grad, config.beta);
            }
            // Step on the batch mean so the learning rate is batch-size independent.
            const double scale = 1.0 / static_cast<double>(idx.size());
            for (auto& g : grad.flat()) g *= scale;

            const auto bw = backward(result.params, xb, grad, GradientAt::normalized_output);
            sgd_step(result.params, bw.params, opt);
            update_bank(bank, emb, idx);
        }
        auto row = evaluate_representation(result.params, pool, bank, config);
        row.epoch = epoch;
        result.trace.push_back(row);
    }
    return result;
}

std::string format_loss_trace(std::span<const LossTraceRow> trace) {
    std::ostringstream out;
    out << "epoch,L1,L2,L_u\n";
    for (const auto& r : trace) {
        out << r.epoch << ',' << format_double(r.l1) << ',' << format_double(r.l2) << ','
            << format_double(r.lu) << '\n';
    }
    return out.str();
}

}  // namespace lwpk
