#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lwpk/clustering.hpp"
#include "lwpk/config.hpp"
#include "lwpk/datastream.hpp"
#include "lwpk/fscil.hpp"
#include "lwpk/metrics.hpp"
#include "lwpk/rlcc.hpp"

namespace lwpk {

enum class Stage { synth = 0, cluster = 1, pretrain = 2, run = 3 };

std::string_view to_string(Stage stage);

/// Knobs the ablation runner varies on top of an ExperimentConfig.
struct PipelineVariant {
    bool use_prior = true;                     // false: pseudo-labeled data is not used
    std::optional<int> unlabeled_per_class;    // keep only this many per class
    std::optional<std::uint64_t> permute_seed; // shuffle pseudo-label ids before pretraining
};

struct ClusteringScore {
    double accuracy = 0.0;
    bool accuracy_flagged = false;
    double ari = 0.0;
    TheoryProbe probe;
};

struct PipelineState {
    SessionStream stream;
    std::vector<std::string> stage_log;  // "<stage> ran|skipped[: reason]"
    std::optional<RepresentationResult> representation;
    std::optional<ClusterResult> clusters;
    PseudoLabeledSet pseudo;
    std::optional<ClusteringScore> clustering_score;
    std::optional<PretrainResult> pretrained;
    std::optional<IncrementalRun> run;
};

/// Per-stage seeds, all split from the root seed by fixed labels.
struct StageSeeds {
    std::uint64_t synth, rlcc, kmeans, pretrain, permute;
};
StageSeeds stage_seeds(std::uint64_t root);

/// Runs the stages in memory up to and including `last`.
PipelineState execute(const ExperimentConfig& config, Stage last, const PipelineVariant& variant = {});

/// Runs the stages and writes every artifact under config.out_dir. On
/// failure writes a FAILED marker naming the stage and rethrows.
PipelineState run_pipeline(const ExperimentConfig& config, Stage last = Stage::run);

/// Machine-readable summary of a finished state.
std::string format_summary_json(const ExperimentConfig& config, const PipelineState& state);

}  // namespace lwpk
