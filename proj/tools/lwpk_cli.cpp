#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lwpk/ablation.hpp"
#include "lwpk/config.hpp"
#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/metrics.hpp"
#include "lwpk/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;
    std::string scenario;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "config file (section.key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "root seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--set", f.sets, "override, key=value (repeatable)");
    cmd->add_option("--workers", f.workers, "concurrent ablation arms");
}

lwpk::ExperimentConfig load(const CommonFlags& f) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw lwpk::ConfigError(s, "expected key=value");
        overrides.emplace_back(std::string(lwpk::trim(s.substr(0, eq))), std::string(lwpk::trim(s.substr(eq + 1))));
    }
    // flags win over --set, which wins over the file
    if (f.seed) overrides.emplace_back("run.seed", std::to_string(*f.seed));
    if (!f.out.empty()) overrides.emplace_back("run.out", f.out);
    if (f.workers) overrides.emplace_back("run.workers", std::to_string(*f.workers));
    if (!f.scenario.empty()) overrides.emplace_back("ablation.scenario", f.scenario);
    std::optional<std::filesystem::path> path;
    if (!f.config.empty()) path = f.config;
    return lwpk::parse_config(path, overrides);
}

int run_stage(const CommonFlags& f, lwpk::Stage last) {
    const auto config = load(f);
    const auto state = lwpk::run_pipeline(config, last);
    for (const auto& line : state.stage_log) std::cout << line << '\n';
    if (state.run) std::cout << lwpk::format_summary_table(state.run->metrics);
    std::cout << "artifacts: " << config.out_dir.string() << '\n';
    return 0;
}

int run_ablate(const CommonFlags& f) {
    const auto config = load(f);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < config.ablation.seeds; ++i) seeds.push_back(config.seed + static_cast<std::uint64_t>(i));
    const auto report = lwpk::run_ablation(config.ablation.scenario, config, seeds, config.workers);

    std::filesystem::create_directories(config.out_dir);
    lwpk::write_file_atomic(config.out_dir / "effective_config.txt", lwpk::format_config(config));
    lwpk::write_file_atomic(config.out_dir / "ablation_runs.csv", lwpk::format_ablation_runs(report));
    lwpk::write_file_atomic(config.out_dir / "ablation_summary.csv", lwpk::format_ablation_summary(report));
    lwpk::write_file_atomic(config.out_dir / "ablation_deltas.csv", lwpk::format_ablation_deltas(report));
    std::cout << lwpk::format_ablation_summary(report) << lwpk::format_ablation_deltas(report);
    return 0;
}

std::vector<double> parse_accuracy_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = lwpk::parse_double(lwpk::trim(item));
        if (!v) throw lwpk::ParseError(out.size() + 1, "bad accuracy '" + item + "'");
        out.push_back(*v);
    }
    return out;
}

std::vector<double> read_metrics_table(const std::filesystem::path& path) {
    std::stringstream ss(lwpk::read_file(path));
    std::string line;
    std::getline(ss, line);
    if (lwpk::trim(line) != "session,accuracy") throw lwpk::ParseError(1, "unexpected header in " + path.string());
    std::vector<double> out;
    std::size_t row = 1;
    while (std::getline(ss, line)) {
        ++row;
        if (lwpk::trim(line).empty()) continue;
        const auto comma = line.find(',');
        const auto v = comma == std::string::npos ? std::nullopt : lwpk::parse_double(lwpk::trim(line.substr(comma + 1)));
        if (!v) throw lwpk::ParseError(row, "bad row in " + path.string());
        out.push_back(*v);
    }
    return out;
}

int run_report(const std::string& dir, const std::string& accuracies) {
    std::vector<double> acc;
    if (!accuracies.empty()) {
        acc = parse_accuracy_list(accuracies);
    } else {
        std::filesystem::path root = dir;
        if (root.empty()) {
            const char* env = std::getenv(lwpk::kOutRootEnv);
            root = env ? env : "lwpk-out";
        }
        if (std::filesystem::exists(root / "ablation_summary.csv")) {
            std::cout << lwpk::read_file(root / "ablation_summary.csv");
            if (std::filesystem::exists(root / "ablation_deltas.csv"))
                std::cout << lwpk::read_file(root / "ablation_deltas.csv");
            return 0;
        }
        if (std::filesystem::exists(root / "FAILED")) {
            std::cerr << "run failed: " << lwpk::read_file(root / "FAILED");
            return 1;
        }
        acc = read_metrics_table(root / "metrics.csv");
    }
    const auto m = lwpk::summarize(acc);
    std::cout << lwpk::format_metrics_table(m) << lwpk::format_summary_table(m);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lwpk: few-shot class-incremental learning with unlabeled prior data"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto* synth = app.add_subcommand("synth", "generate the session stream");
    auto* cluster = app.add_subcommand("cluster", "synth, then representation learning and k-means pseudo-labels");
    auto* pretrain = app.add_subcommand("pretrain", "... then joint pretraining on base and pseudo-labeled data");
    auto* run = app.add_subcommand("run", "full pipeline through the incremental sessions");
    auto* ablate = app.add_subcommand("ablate", "paired-seed ablation");
    for (auto* c : {synth, cluster, pretrain, run, ablate}) add_common(c, flags);
    ablate->add_option("--scenario", flags.scenario, "pk_on_off | label_mismatch | upc_sweep | omega_on_off");

    auto* report = app.add_subcommand("report", "summarize metrics of a finished run");
    std::string report_dir, accuracies;
    report->add_option("--out", report_dir, "run directory (default: $" + std::string(lwpk::kOutRootEnv) + ")");
    report->add_option("--accuracies", accuracies, "comma-separated per-session accuracies");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_stage(flags, lwpk::Stage::synth);
        if (*cluster) return run_stage(flags, lwpk::Stage::cluster);
        if (*pretrain) return run_stage(flags, lwpk::Stage::pretrain);
        if (*run) return run_stage(flags, lwpk::Stage::run);
        if (*ablate) return run_ablate(flags);
        if (*report) return run_report(report_dir, accuracies);
    } catch (const lwpk::ConfigError& e) {
        std::cerr << "config error [" << e.key() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
