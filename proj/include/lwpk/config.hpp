#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lwpk/datastream.hpp"
#include "lwpk/encoder.hpp"
#include "lwpk/fscil.hpp"
#include "lwpk/rlcc.hpp"

namespace lwpk {

struct AblationSettings {
    std::string scenario = "pk_on_off";
    int seeds = 20;
    std::vector<int> upc{0, 5, 10, 20};
    double omega = 0.5;  // the "with omega" arm; the control uses 1
};

/// Every runtime knob of an experiment. Keys in the text form are
/// `section.key`; see `config_keys()` for the full list.
struct ExperimentConfig {
    Protocol protocol;
    SyntheticSpec synthetic;
    std::vector<std::size_t> hidden{32};
    std::size_t embedding_dim = 8;
    Activation activation = Activation::relu;
    RlccConfig rlcc;
    PretrainConfig pretrain;
    IncrementalConfig incremental;
    bool freeze_encoder = true;
    AblationSettings ablation;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "lwpk-out";
    int workers = 1;

    EncoderConfig encoder() const;
};

/// Environment variable naming the default output root.
inline constexpr const char* kOutRootEnv = "LWPK_OUT_ROOT";

std::vector<std::string> config_keys();

/// Applies `key = value`; throws ConfigError naming the key on unknown
/// keys and malformed values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses `section.key = value` lines ('#' starts a comment). Unknown keys,
/// duplicate keys and bad values throw ConfigError.
ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base = {});

/// File (optional) then overrides, then validation.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

/// Throws ConfigError naming the first offending key.
void validate(const ExperimentConfig& config);

/// Round-trippable text form of the effective configuration.
std::string format_config(const ExperimentConfig& config);

}  // namespace lwpk
