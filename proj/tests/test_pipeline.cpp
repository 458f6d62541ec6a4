#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "lwpk/ablation.hpp"
#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/pipeline.hpp"

using namespace lwpk;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick(std::uint64_t seed, const fs::path& out = {}) {
    ExperimentConfig c;
    c.seed = seed;
    c.rlcc.epochs = 3;
    c.rlcc.kmeans_restarts = 5;
    c.pretrain.epochs = 5;
    c.out_dir = out;
    return c;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("lwpk_pipe_" + name);
    fs::remove_all(p);
    return p;
}

bool logged(const PipelineState& s, const std::string& line) {
    return std::find(s.stage_log.begin(), s.stage_log.end(), line) != s.stage_log.end();
}

}  // namespace

TEST_CASE("stage seeds are distinct and stable") {
    const auto a = stage_seeds(5), b = stage_seeds(5);
    CHECK(a.synth == b.synth);
    CHECK(a.synth != a.rlcc);
    CHECK(a.rlcc != a.kmeans);
    CHECK(a.pretrain != a.permute);
    CHECK(stage_seeds(6).synth != a.synth);
}

TEST_CASE("empty unlabeled pool skips clustering") {
    auto c = quick(1);
    c.protocol.unlabeled_per_class = 0;
    const auto s = execute(c, Stage::run);
    CHECK(logged(s, "cluster skipped: unlabeled pool is empty"));
    CHECK(s.pseudo.examples.empty());
    CHECK(s.run->metrics.accuracies.size() == 4);

    PipelineVariant off;
    off.use_prior = false;
    CHECK(logged(execute(quick(1), Stage::cluster, off), "cluster skipped: prior knowledge disabled"));
}

TEST_CASE("pipeline artifacts and byte-identical reruns") {
    const auto a = scratch("a"), b = scratch("b");
    run_pipeline(quick(2, a));
    run_pipeline(quick(2, b));
    for (const char* f : {"metrics.csv", "summary.csv", "clusters.csv", "rlcc_loss_trace.csv", "encoder.ckpt",
                          "head.txt", "predictions_session_3.csv", "stream_manifest.txt", "stages.txt"}) {
        INFO(f);
        REQUIRE(fs::exists(a / f));
        CHECK(read_file(a / f) == read_file(b / f));
    }
    CHECK(fs::exists(a / "effective_config.txt"));
    CHECK(fs::exists(a / "summary.json"));
    CHECK_FALSE(fs::exists(a / "FAILED"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("partial runs match the full run prefix") {
    const auto a = scratch("prefix"), b = scratch("full");
    run_pipeline(quick(3, a), Stage::cluster);
    run_pipeline(quick(3, b));
    CHECK(read_file(a / "clusters.csv") == read_file(b / "clusters.csv"));
    CHECK_FALSE(fs::exists(a / "metrics.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a failing stage leaves a FAILED marker") {
    const auto dir = scratch("fail");
    auto c = quick(4, dir);
    c.pretrain.learning_rate = 1e12;
    CHECK_THROWS_AS(run_pipeline(c), Error);
    REQUIRE(fs::exists(dir / "FAILED"));
    CHECK(read_file(dir / "FAILED").rfind("pretrain: ", 0) == 0);

    c.pretrain.learning_rate = 0.01;
    run_pipeline(c);
    CHECK_FALSE(fs::exists(dir / "FAILED"));
    fs::remove_all(dir);
}

TEST_CASE("label mismatch changes nothing") {
    auto base = quick(0);
    const auto r = run_ablation("label_mismatch", base, {0, 1}, 1);
    REQUIRE(r.arms.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) CHECK(r.arms[0].runs[s] == r.arms[1].runs[s]);
    for (const auto& d : r.comparisons[0].deltas) {
        CHECK(d.mean_diff == 0.0);
        CHECK(d.ties == 2);
    }
}

TEST_CASE("ablation scenarios and formats") {
    auto base = quick(0);
    base.ablation.upc = {0, 2, 5};
    const auto sweep = run_ablation("upc_sweep", base, {7}, 2);
    REQUIRE(sweep.arms.size() == 3);
    CHECK(sweep.arms[0].name == "upc_0");
    CHECK(sweep.arms[2].name == "upc_5");
    CHECK(sweep.comparisons.size() == 2);

    const auto one = run_ablation("pk_on_off", base, {7, 8}, 1);
    const auto two = run_ablation("pk_on_off", base, {7, 8}, 2);
    CHECK(format_ablation_runs(one) == format_ablation_runs(two));
    CHECK(format_ablation_deltas(one) == format_ablation_deltas(two));
    CHECK(one.arms[0].name == "no_pk");
    CHECK(format_ablation_runs(one).rfind("scenario,arm,seed,session,accuracy\n", 0) == 0);
    CHECK(format_ablation_summary(one).rfind("arm,Acc_f,Acc_l,Acc_avg,PD\n", 0) == 0);
    CHECK(format_ablation_deltas(one).rfind("arm,metric,mean_diff,spread,wins,losses,ties,p_value\n", 0) == 0);

    CHECK_THROWS_AS(run_ablation("nope", base, {1}, 1), ConfigError);
}
