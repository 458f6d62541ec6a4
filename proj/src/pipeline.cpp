#include "lwpk/pipeline.hpp"

#include <functional>
#include <numeric>

#include <json.hpp>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::synth: return "synth";
        case Stage::cluster: return "cluster";
        case Stage::pretrain: return "pretrain";
        case Stage::run: return "run";
    }
    return "?";
}

StageSeeds stage_seeds(std::uint64_t root) {
    return {derive_seed(root, "synth"), derive_seed(root, "rlcc"), derive_seed(root, "kmeans"),
            derive_seed(root, "pretrain"), derive_seed(root, "permute")};
}

namespace {

void stage_synth(const ExperimentConfig& config, const PipelineVariant& variant, PipelineState& state) {
    SyntheticSpec spec = config.synthetic;
    spec.seed = stage_seeds(config.seed).synth;
    state.stream = generate_synthetic(spec, config.protocol);
    if (variant.unlabeled_per_class) state.stream = restrict_unlabeled(state.stream, *variant.unlabeled_per_class);
    state.stage_log.emplace_back("synth ran");
}

void stage_cluster(const ExperimentConfig& config, const PipelineVariant& variant, PipelineState& state) {
    const auto& proto = config.protocol;
    const auto seeds = stage_seeds(config.seed);
    state.pseudo = PseudoLabeledSet{{}, proto.base_classes, proto.sessions * proto.ways};

    const auto pool = draw_unlabeled(state.stream);
    if (!variant.use_prior) {
        state.stage_log.emplace_back("cluster skipped: prior knowledge disabled");
        return;
    }
    if (pool.empty()) {
        state.stage_log.emplace_back("cluster skipped: unlabeled pool is empty");
        return;
    }

    const Matrix pool_x = feature_matrix(pool);
    Matrix train_x = pool_x;
    if (config.rlcc.include_base) {
        std::vector<Example> both = pool;
        both.insert(both.end(), state.stream.base.begin(), state.stream.base.end());
        train_x = feature_matrix(both);
    }
    state.representation = train_representation(train_x, config.encoder(), config.rlcc, seeds.rlcc);

    const auto k = static_cast<std::size_t>(proto.sessions * proto.ways);
    const auto embedded = forward(state.representation->params, pool_x, true);
    state.clusters = kmeans(embedded.values, k, seeds.kmeans, 300, config.rlcc.kmeans_restarts);
    state.pseudo = assign_pseudo_labels(*state.clusters, proto.base_classes, pool, k);

    if (variant.permute_seed) {
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(*variant.permute_seed);
        rng.shuffle(perm);
        for (auto& ex : state.pseudo.examples) {
            ex.label = proto.base_classes + perm[static_cast<std::size_t>(*ex.label - proto.base_classes)];
        }
    }

    // Scoring only: the sealed truth never reaches training.
    const auto& truth = state.stream.unlabeled_truth.reveal_for_scoring();
    ClusteringScore score;
    const auto acc = clustering_accuracy(state.clusters->assignment, truth);
    score.accuracy = acc.accuracy;
    score.accuracy_flagged = acc.flagged;
    if (truth.size() >= 2) score.ari = ari(state.clusters->assignment, truth);
    const auto raw = forward(state.representation->params, pool_x, false);
    if (truth.size() >= 2) {
        const auto probe = class_distance_probe(raw.values, truth);
        score.probe = {probe.d_in, probe.d_out, score.accuracy,
                       offset_distance(score.accuracy, probe.d_in, probe.d_out).d};
    }
    state.clustering_score = score;
    state.stage_log.emplace_back("cluster ran");
}

void stage_pretrain(const ExperimentConfig& config, PipelineState& state) {
    PretrainConfig pc = config.pretrain;
    pc.seed = stage_seeds(config.seed).pretrain;
    state.pretrained = joint_pretrain(state.stream.base, state.pseudo, config.protocol.total_classes(),
                                      config.encoder(), pc);
    state.stage_log.emplace_back("pretrain ran");
}

void stage_run(const ExperimentConfig& config, PipelineState& state) {
    IncrementalConfig inc = config.incremental;
    inc.finetune = !config.freeze_encoder;
    state.run = run_incremental(state.stream, *state.pretrained, inc);
    state.stage_log.emplace_back("run ran");
}

using StageHook = std::function<void(Stage, const PipelineState&)>;

PipelineState execute_with(const ExperimentConfig& config, Stage last, const PipelineVariant& variant,
                           Stage& current, const StageHook& after) {
    PipelineState state;
    for (int s = 0; s <= static_cast<int>(last); ++s) {
        current = static_cast<Stage>(s);
        switch (current) {
            case Stage::synth: stage_synth(config, variant, state); break;
            case Stage::cluster: stage_cluster(config, variant, state); break;
            case Stage::pretrain: stage_pretrain(config, state); break;
            case Stage::run: stage_run(config, state); break;
        }
        if (after) after(current, state);
    }
    return state;
}

void write_artifacts(const std::filesystem::path& out, Stage stage, const PipelineState& state) {
    switch (stage) {
        case Stage::synth:
            write_file_atomic(out / "stream_manifest.txt", stream_manifest(state.stream));
            write_file_atomic(out / "base.csv", format_feature_table(state.stream.base));
            break;
        case Stage::cluster:
            if (state.representation) {
                write_file_atomic(out / "rlcc_loss_trace.csv", format_loss_trace(state.representation->trace));
                write_file_atomic(out / "encoder_rlcc.ckpt", format_checkpoint(state.representation->params));
            }
            if (state.clusters) {
                write_file_atomic(out / "clusters.csv", format_cluster_dump(state.pseudo, *state.clusters));
            }
            break;
        case Stage::pretrain: {
            write_file_atomic(out / "encoder.ckpt", format_checkpoint(state.pretrained->encoder));
            write_file_atomic(out / "head.txt", format_head(state.pretrained->head));
            std::string trace = "epoch,loss\n";
            for (std::size_t e = 0; e < state.pretrained->loss_trace.size(); ++e) {
                trace += std::to_string(e + 1) + "," + format_double(state.pretrained->loss_trace[e]) + "\n";
            }
            write_file_atomic(out / "pretrain_loss.csv", trace);
            break;
        }
        case Stage::run:
            for (std::size_t s = 0; s < state.run->predictions.size(); ++s) {
                write_file_atomic(out / ("predictions_session_" + std::to_string(s) + ".csv"),
                                  format_predictions(state.run->predictions[s]));
            }
            write_file_atomic(out / "metrics.csv", format_metrics_table(state.run->metrics));
            write_file_atomic(out / "summary.csv", format_summary_table(state.run->metrics));
            break;
    }
    std::string log;
    for (const auto& line : state.stage_log) log += line + "\n";
    write_file_atomic(out / "stages.txt", log);
}

}  // namespace

PipelineState execute(const ExperimentConfig& config, Stage last, const PipelineVariant& variant) {
    Stage current = Stage::synth;
    return execute_with(config, last, variant, current, {});
}

PipelineState run_pipeline(const ExperimentConfig& config, Stage last) {
    validate(config);
    const auto& out = config.out_dir;
    std::filesystem::create_directories(out);
    std::filesystem::remove(out / "FAILED");
    write_file_atomic(out / "effective_config.txt", format_config(config));

    Stage current = Stage::synth;
    try {
        auto state = execute_with(config, last, {}, current,
                                  [&](Stage s, const PipelineState& st) { write_artifacts(out, s, st); });
        write_file_atomic(out / "summary.json", format_summary_json(config, state));
        return state;
    } catch (const std::exception& e) {
        write_file_atomic(out / "FAILED", std::string(to_string(current)) + ": " + e.what() + "\n");
        throw Error(std::string("stage ") + std::string(to_string(current)) + ": " + e.what());
    }
}

std::string format_summary_json(const ExperimentConfig& config, const PipelineState& state) {
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["stages"] = state.stage_log;
    const auto& p = state.stream.protocol;
    j["protocol"] = {{"B", p.base_classes}, {"M", p.base_shots}, {"N", p.ways},
                     {"K", p.shots},        {"n", p.sessions},   {"U", p.unlabeled_per_class}};
    if (state.clustering_score) {
        const auto& c = *state.clustering_score;
        j["clustering"] = {{"accuracy", c.accuracy}, {"accuracy_flagged", c.accuracy_flagged}, {"ari", c.ari},
                           {"d_in", c.probe.d_in},   {"d_out", c.probe.d_out},                {"offset", c.probe.offset}};
    }
    if (state.run) {
        const auto& m = state.run->metrics;
        j["metrics"] = {{"accuracies", m.accuracies}, {"acc_first", m.acc_first}, {"acc_last", m.acc_last},
                        {"acc_avg", m.acc_avg},       {"pd", m.pd}};
    }
    return j.dump(2) + "\n";
}

}  // namespace lwpk
