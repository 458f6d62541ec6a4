#pragma once

// Joint pretraining on base plus pseudo-labeled data, prototype installation
// and cosine-softmax inference across incremental sessions.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lwpk/clustering.hpp"
#include "lwpk/datastream.hpp"
#include "lwpk/encoder.hpp"
#include "lwpk/matrix.hpp"
#include "lwpk/metrics.hpp"

namespace lwpk {

enum class RowSource { uninstalled, trained, prototype };

/// One row per class id. Only installed rows (trained or prototype) may be scored.
struct ClassifierHead {
    Matrix weights;
    std::vector<RowSource> source;

    std::size_t classes() const noexcept { return weights.rows(); }
    std::size_t installed_count() const noexcept;
    bool operator==(const ClassifierHead&) const = default;
};

ClassifierHead make_head(std::size_t classes, std::size_t dim);

struct WeightedLoss {
    double loss = 0.0;
    Matrix grad;  // d loss / d logits
};

/// sum_s w_s * -log softmax(logits_s)[target_s] / batch.
///
/// Reductions across classes are order-invariant, so permuting class
/// columns permutes the gradient columns and leaves the loss bit-identical.
WeightedLoss weighted_cross_entropy(const Matrix& logits, std::span<const int> targets,
                                    std::span<const double> weights);

struct PretrainConfig {
    double omega = 1.0;  // weight on pseudo-labeled samples
    int epochs = 40;
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    EncoderParams encoder;
    ClassifierHead head;
    std::vector<double> loss_trace;  // mean step loss per epoch
};

/// Trains encoder and linear head jointly. Every step pairs a base
/// mini-batch with a slice of the pseudo-labeled set drawn from an
/// independent schedule; the step loss is
///   CE_base(weights 1) + CE_pseudo(weights omega).
/// Base rows come out tagged `trained`; pseudo-class rows stay uninstalled.
PretrainResult joint_pretrain(std::span<const Example> base, const PseudoLabeledSet& pseudo, int total_classes,
                              const EncoderConfig& encoder, const PretrainConfig& config);

struct Prototype {
    int class_id = 0;
    std::vector<double> mean;
    std::size_t shots = 0;
};

/// Mean raw (unnormalized) embedding of one class.
Prototype compute_prototype(const EncoderParams& encoder, std::span<const Example> examples);

void replace_head_rows(ClassifierHead& head, std::span<const Prototype> prototypes);

/// Softmax over cosine similarities with the first `seen_classes` rows.
std::vector<double> infer(const EncoderParams& encoder, const ClassifierHead& head, std::span<const double> x,
                          std::size_t seen_classes);

/// Row-wise `infer` over a batch.
Matrix infer_batch(const EncoderParams& encoder, const ClassifierHead& head, const Matrix& inputs,
                   std::size_t seen_classes);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

struct IncrementalConfig {
    bool keep_trained_base_rows = false;
    bool finetune = false;
    double finetune_lr = 5e-3;
    double finetune_momentum = 0.9;
    int finetune_epochs = 5;
};

struct SessionPrediction {
    std::uint64_t uid = 0;
    int truth = 0;
    int predicted = 0;
    double max_probability = 0.0;
};

struct IncrementalRun {
    RunMetrics metrics;
    std::vector<std::vector<SessionPrediction>> predictions;  // per session
    EncoderParams encoder;
    ClassifierHead head;
};

IncrementalRun run_incremental(const SessionStream& stream, const PretrainResult& pretrained,
                               const IncrementalConfig& config);

/// Delimited text: uid,true_label,predicted_label,max_probability.
std::string format_predictions(std::span<const SessionPrediction> predictions);

std::string format_head(const ClassifierHead& head);

}  // namespace lwpk
