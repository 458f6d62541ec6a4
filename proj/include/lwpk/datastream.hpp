#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lwpk/matrix.hpp"

namespace lwpk {

struct Example {
    std::vector<double> features;
    std::optional<int> label;  // absent for the unlabeled pool
    std::uint64_t uid = 0;
};

/// Shape of a few-shot class-incremental stream.
struct Protocol {
    int base_classes = 6;         // B
    int base_shots = 20;          // M
    int ways = 2;                 // N
    int shots = 3;                // K
    int sessions = 3;             // n
    int unlabeled_per_class = 5;  // U

    int total_classes() const noexcept { return base_classes + sessions * ways; }
    /// Number of classes scored after `session` (0 = base session).
    int classes_seen(int session) const noexcept { return base_classes + session * ways; }
    /// Throws ProtocolInfeasible when a field is out of range.
    void validate() const;
};

/// Parameters of the isotropic Gaussian class generator.
struct SyntheticSpec {
    int class_count = 12;
    int dim = 8;
    double spread = 1.5;   // scale of class centers
    double stddev = 1.0;   // within-class standard deviation
    int samples_per_class = 40;
    int test_per_class = 10;
    std::uint64_t seed = 0;
};

/// Ground-truth labels of the unlabeled pool. Scoring code may read them;
/// nothing on the training path takes a SealedTruth.
class SealedTruth {
public:
    SealedTruth() = default;
    explicit SealedTruth(std::vector<int> labels) : labels_(std::move(labels)) {}
    const std::vector<int>& reveal_for_scoring() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }

private:
    std::vector<int> labels_;
};

struct SessionStream {
    Protocol protocol;
    std::size_t dim = 0;
    std::vector<Example> base;
    std::vector<std::vector<Example>> increments;  // sessions 1..n
    std::vector<Example> unlabeled;                 // labels stripped, U per incremental class
    SealedTruth unlabeled_truth;                    // parallel to `unlabeled`
    std::vector<std::vector<Example>> tests;        // sessions 0..n, cumulative
};

/// Generates seeded Gaussian classes and carves them into a stream.
SessionStream generate_synthetic(const SyntheticSpec& spec, const Protocol& protocol);

/// Splits labeled examples per protocol. Classes are shuffled with `seed`
/// and relabeled to their shuffled position. `test_cap` limits test examples
/// per class (0 keeps the whole remainder).
SessionStream split_protocol(std::span<const Example> examples, const Protocol& protocol,
                             std::uint64_t seed, int test_cap = 0);

/// The unlabeled pool, labels stripped.
std::vector<Example> draw_unlabeled(const SessionStream& stream);

/// Keeps the first `per_class` unlabeled examples of every incremental class.
SessionStream restrict_unlabeled(const SessionStream& stream, int per_class);

/// Comma-separated table: features, then an integer label (-1 when absent).
std::vector<Example> load_feature_table(const std::filesystem::path& path);
std::vector<Example> parse_feature_table(std::string_view text);
std::string format_feature_table(std::span<const Example> examples);

/// Plain-text list of uids per partition.
std::string stream_manifest(const SessionStream& stream);
/// Manifest plus every partition's feature table; stable byte-for-byte.
std::string serialize_stream(const SessionStream& stream);

Matrix feature_matrix(std::span<const Example> examples);
std::vector<int> labels_of(std::span<const Example> examples);

}  // namespace lwpk
