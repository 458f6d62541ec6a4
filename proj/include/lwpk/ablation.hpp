#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lwpk/config.hpp"
#include "lwpk/metrics.hpp"

namespace lwpk {

struct AblationArm {
    std::string name;
    std::vector<RunMetrics> runs;  // parallel to AblationReport::seeds
};

/// Paired (arm - control) differences for one summary metric.
struct MetricDelta {
    std::string metric;
    double mean_diff = 0.0;
    double spread = 0.0;  // sample standard deviation of the per-seed differences
    int wins = 0;
    int losses = 0;
    int ties = 0;
    double p_value = 1.0;  // one-sided sign test, arm > control
};

struct ArmComparison {
    std::string arm;
    std::vector<MetricDelta> deltas;
};

struct AblationReport {
    std::string scenario;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationArm> arms;  // arms[0] is the control
    std::vector<ArmComparison> comparisons;
};

/// Scenarios: pk_on_off, label_mismatch, upc_sweep, omega_on_off. Each seed
/// is a root seed shared by every arm, so arms see the same stream, stage
/// seeds and batch schedules. Arms run on up to `workers` threads.
AblationReport run_ablation(const std::string& scenario, const ExperimentConfig& base_config,
                            const std::vector<std::uint64_t>& seeds, int workers = 1);

/// Delimited text: scenario,arm,seed,session,accuracy.
std::string format_ablation_runs(const AblationReport& report);
/// Delimited text: arm,Acc_f,Acc_l,Acc_avg,PD (means over seeds).
std::string format_ablation_summary(const AblationReport& report);
/// Delimited text: arm,metric,mean_diff,spread,wins,losses,ties,p_value.
std::string format_ablation_deltas(const AblationReport& report);

}  // namespace lwpk
