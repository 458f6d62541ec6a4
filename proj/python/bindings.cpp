#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lwpk/ablation.hpp"
#include "lwpk/clustering.hpp"
#include "lwpk/config.hpp"
#include "lwpk/errors.hpp"
#include "lwpk/metrics.hpp"
#include "lwpk/pipeline.hpp"

namespace py = pybind11;
using namespace lwpk;

namespace {

using Overrides = std::map<std::string, std::string>;

ExperimentConfig make_config(const Overrides& overrides) {
    std::vector<std::pair<std::string, std::string>> kv(overrides.begin(), overrides.end());
    return parse_config(std::nullopt, kv);
}

py::dict metrics_dict(const RunMetrics& m) {
    py::dict d;
    d["accuracies"] = m.accuracies;
    d["acc_first"] = m.acc_first;
    d["acc_last"] = m.acc_last;
    d["acc_avg"] = m.acc_avg;
    d["pd"] = m.pd;
    return d;
}

Stage parse_stage(const std::string& s) {
    for (auto st : {Stage::synth, Stage::cluster, Stage::pretrain, Stage::run})
        if (to_string(st) == s) return st;
    throw ConfigError("stage", "unknown stage '" + s + "'");
}

py::dict run(const Overrides& overrides, const std::string& stage, bool write) {
    const auto config = make_config(overrides);
    PipelineState state;
    {
        py::gil_scoped_release release;
        state = write ? run_pipeline(config, parse_stage(stage)) : execute(config, parse_stage(stage));
    }
    py::dict out;
    out["stages"] = state.stage_log;
    if (state.clustering_score) {
        py::dict c;
        c["accuracy"] = state.clustering_score->accuracy;
        c["ari"] = state.clustering_score->ari;
        c["d_in"] = state.clustering_score->probe.d_in;
        c["d_out"] = state.clustering_score->probe.d_out;
        out["clustering"] = c;
    }
    if (state.run) out["metrics"] = metrics_dict(state.run->metrics);
    return out;
}

py::dict ablate(const std::string& scenario, const Overrides& overrides, const std::vector<std::uint64_t>& seeds,
                int workers) {
    const auto config = make_config(overrides);
    AblationReport r;
    {
        py::gil_scoped_release release;
        r = run_ablation(scenario, config, seeds, workers);
    }
    py::dict out;
    out["summary"] = format_ablation_summary(r);
    out["deltas"] = format_ablation_deltas(r);
    py::dict arms;
    for (const auto& a : r.arms) {
        py::list runs;
        for (const auto& m : a.runs) runs.append(metrics_dict(m));
        arms[py::str(a.name)] = runs;
    }
    out["arms"] = arms;
    return out;
}

}  // namespace

PYBIND11_MODULE(_lwpk, m) {
    py::register_exception<Error>(m, "LwpkError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("summarize", [](const std::vector<double>& acc) { return metrics_dict(summarize(acc)); });
    m.def("ari", [](const std::vector<int>& a, const std::vector<int>& b) { return ari(a, b); });
    m.def("clustering_accuracy", [](const std::vector<int>& assignment, const std::vector<int>& truth) {
        const auto r = clustering_accuracy(assignment, truth);
        return py::make_tuple(r.accuracy, r.flagged);
    });
    m.def("sign_test_p_value", &sign_test_p_value);
    m.def("offset_distance", [](double a, double d_in, double d_out) { return offset_distance(a, d_in, d_out).d; });
    m.def("config_text", [](const Overrides& o) { return format_config(make_config(o)); },
          py::arg("overrides") = Overrides{});
    m.def("run", &run, py::arg("overrides") = Overrides{}, py::arg("stage") = "run", py::arg("write") = false);
    m.def("ablate", &ablate, py::arg("scenario"), py::arg("overrides") = Overrides{},
          py::arg("seeds") = std::vector<std::uint64_t>{0, 1, 2}, py::arg("workers") = 1);
}
