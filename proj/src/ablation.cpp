#include "lwpk/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/pipeline.hpp"

namespace lwpk {

namespace {

struct ArmSpec {
    std::string name;
    ExperimentConfig config;
    PipelineVariant variant;
};

std::vector<ArmSpec> arms_for(const std::string& scenario, const ExperimentConfig& base) {
    std::vector<ArmSpec> arms;
    if (scenario == "pk_on_off") {
        PipelineVariant off;
        off.use_prior = false;
        arms.push_back({"no_pk", base, off});
        arms.push_back({"pk", base, {}});
    } else if (scenario == "label_mismatch") {
        arms.push_back({"aligned", base, {}});
        PipelineVariant permuted;
        permuted.permute_seed = 0;  // filled per seed
        arms.push_back({"permuted", base, permuted});
    } else if (scenario == "upc_sweep") {
        ExperimentConfig cfg = base;
        cfg.protocol.unlabeled_per_class = *std::max_element(base.ablation.upc.begin(), base.ablation.upc.end());
        for (int u : base.ablation.upc) {
            PipelineVariant v;
            v.unlabeled_per_class = u;
            arms.push_back({"upc_" + std::to_string(u), cfg, v});
        }
    } else if (scenario == "omega_on_off") {
        ExperimentConfig without = base;
        without.pretrain.omega = 1.0;
        ExperimentConfig with = base;
        with.pretrain.omega = base.ablation.omega;
        arms.push_back({"without_omega", without, {}});
        arms.push_back({"with_omega", with, {}});
    } else {
        throw ConfigError("ablation.scenario", "unknown scenario '" + scenario + "'");
    }
    return arms;
}

double metric_of(const RunMetrics& m, std::size_t which) {
    switch (which) {
        case 0: return m.acc_first;
        case 1: return m.acc_last;
        case 2: return m.acc_avg;
        default: return m.pd;
    }
}

constexpr const char* kMetricNames[] = {"Acc_f", "Acc_l", "Acc_avg", "PD"};

}  // namespace

AblationReport run_ablation(const std::string& scenario, const ExperimentConfig& base_config,
                            const std::vector<std::uint64_t>& seeds, int workers) {
    if (seeds.empty()) throw ConfigError("ablation.seeds", "need at least one seed");
    const auto specs = arms_for(scenario, base_config);

    AblationReport report;
    report.scenario = scenario;
    report.seeds = seeds;
    for (const auto& s : specs) report.arms.push_back({s.name, std::vector<RunMetrics>(seeds.size())});

    const std::size_t jobs = specs.size() * seeds.size();
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
            const std::size_t arm = j / seeds.size();
            const std::size_t si = j % seeds.size();
            try {
                ExperimentConfig cfg = specs[arm].config;
                cfg.seed = seeds[si];
                PipelineVariant variant = specs[arm].variant;
                if (variant.permute_seed) variant.permute_seed = stage_seeds(seeds[si]).permute;
                report.arms[arm].runs[si] = execute(cfg, Stage::run, variant).run->metrics;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(n_threads, jobs); ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    const auto& control = report.arms.front();
    for (std::size_t a = 1; a < report.arms.size(); ++a) {
        ArmComparison cmp{report.arms[a].name, {}};
        for (std::size_t m = 0; m < 4; ++m) {
            MetricDelta d;
            d.metric = kMetricNames[m];
            std::vector<double> diffs;
            for (std::size_t s = 0; s < seeds.size(); ++s) {
                const double diff = metric_of(report.arms[a].runs[s], m) - metric_of(control.runs[s], m);
                diffs.push_back(diff);
                if (diff > 0) ++d.wins;
                else if (diff < 0) ++d.losses;
                else ++d.ties;
            }
            double sum = 0.0;
            for (double x : diffs) sum += x;
            d.mean_diff = sum / static_cast<double>(diffs.size());
            if (diffs.size() > 1) {
                double ss = 0.0;
                for (double x : diffs) ss += (x - d.mean_diff) * (x - d.mean_diff);
                d.spread = std::sqrt(ss / static_cast<double>(diffs.size() - 1));
            }
            d.p_value = sign_test_p_value(d.wins, d.losses);
            cmp.deltas.push_back(d);
        }
        report.comparisons.push_back(std::move(cmp));
    }
    return report;
}

std::string format_ablation_runs(const AblationReport& report) {
    std::ostringstream out;
    out << "scenario,arm,seed,session,accuracy\n";
    for (const auto& arm : report.arms) {
        for (std::size_t s = 0; s < report.seeds.size(); ++s) {
            const auto& acc = arm.runs[s].accuracies;
            for (std::size_t i = 0; i < acc.size(); ++i) {
                out << report.scenario << ',' << arm.name << ',' << report.seeds[s] << ',' << i << ','
                    << format_double(acc[i]) << '\n';
            }
        }
    }
    return out.str();
}

std::string format_ablation_summary(const AblationReport& report) {
    std::ostringstream out;
    out << "arm,Acc_f,Acc_l,Acc_avg,PD\n";
    for (const auto& arm : report.arms) {
        out << arm.name;
        for (std::size_t m = 0; m < 4; ++m) {
            double sum = 0.0;
            for (const auto& r : arm.runs) sum += metric_of(r, m);
            out << ',' << format_double(sum / static_cast<double>(arm.runs.size()));
        }
        out << '\n';
    }
    return out.str();
}

std::string format_ablation_deltas(const AblationReport& report) {
    std::ostringstream out;
    out << "arm,metric,mean_diff,spread,wins,losses,ties,p_value\n";
    for (const auto& cmp : report.comparisons) {
        for (const auto& d : cmp.deltas) {
            out << cmp.arm << ',' << d.metric << ',' << format_double(d.mean_diff) << ',' << format_double(d.spread)
                << ',' << d.wins << ',' << d.losses << ',' << d.ties << ',' << format_double(d.p_value) << '\n';
        }
    }
    return out.str();
}

}  // namespace lwpk
