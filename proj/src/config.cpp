#include "lwpk/config.hpp"

#include <cstdlib>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"

namespace lwpk {

EncoderConfig ExperimentConfig::encoder() const {
    EncoderConfig e;
    e.dims.clear();
    e.dims.push_back(static_cast<std::size_t>(synthetic.dim));
    e.dims.insert(e.dims.end(), hidden.begin(), hidden.end());
    e.dims.push_back(embedding_dim);
    e.activation = activation;
    return e;
}

namespace {

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

long long to_integer(const std::string& key, const std::string& v) {
    const auto x = parse_integer(v);
    if (!x) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return *x;
}

double to_real(const std::string& key, const std::string& v) {
    const auto x = parse_double(v);
    if (!x) throw ConfigError(key, "expected a number, got '" + v + "'");
    return *x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::vector<long long> to_integer_list(const std::string& key, const std::string& v) {
    std::vector<long long> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(to_integer(key, std::string(trim(item))));
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

template <class Member>
Field int_field(std::string key, Member member) {
    return {std::move(key),
            [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const auto x = to_integer(k, v);
                if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                    throw ConfigError(k, "integer out of range");
                }
                std::invoke(member, c) = static_cast<int>(x);
            },
            [member](const ExperimentConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <class Member>
Field real_field(std::string key, Member member) {
    return {std::move(key),
            [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::invoke(member, c) = to_real(k, v);
            },
            [member](const ExperimentConfig& c) { return format_double(std::invoke(member, c)); }};
}

template <class Member>
Field bool_field(std::string key, Member member) {
    return {std::move(key),
            [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                std::invoke(member, c) = to_bool(k, v);
            },
            [member](const ExperimentConfig& c) { return std::string(std::invoke(member, c) ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> table = {
        int_field("protocol.B", [](auto& c) -> auto& { return c.protocol.base_classes; }),
        int_field("protocol.M", [](auto& c) -> auto& { return c.protocol.base_shots; }),
        int_field("protocol.N", [](auto& c) -> auto& { return c.protocol.ways; }),
        int_field("protocol.K", [](auto& c) -> auto& { return c.protocol.shots; }),
        int_field("protocol.n", [](auto& c) -> auto& { return c.protocol.sessions; }),
        int_field("protocol.U", [](auto& c) -> auto& { return c.protocol.unlabeled_per_class; }),

        int_field("synthetic.classes", [](auto& c) -> auto& { return c.synthetic.class_count; }),
        int_field("synthetic.dim", [](auto& c) -> auto& { return c.synthetic.dim; }),
        real_field("synthetic.spread", [](auto& c) -> auto& { return c.synthetic.spread; }),
        real_field("synthetic.stddev", [](auto& c) -> auto& { return c.synthetic.stddev; }),
        int_field("synthetic.samples_per_class", [](auto& c) -> auto& { return c.synthetic.samples_per_class; }),
        int_field("synthetic.test_per_class", [](auto& c) -> auto& { return c.synthetic.test_per_class; }),

        {"encoder.hidden",
         [](C& c, const std::string& k, const std::string& v) {
             c.hidden.clear();
             for (auto x : to_integer_list(k, v)) {
                 if (x <= 0) throw ConfigError(k, "hidden widths must be positive");
                 c.hidden.push_back(static_cast<std::size_t>(x));
             }
         },
         [](const C& c) { return join(c.hidden); }},
        {"encoder.embedding",
         [](C& c, const std::string& k, const std::string& v) {
             const auto x = to_integer(k, v);
             if (x <= 0) throw ConfigError(k, "must be positive");
             c.embedding_dim = static_cast<std::size_t>(x);
         },
         [](const C& c) { return std::to_string(c.embedding_dim); }},
        {"encoder.activation",
         [](C& c, const std::string& k, const std::string& v) {
             try {
                 c.activation = parse_activation(v);
             } catch (const Error&) {
                 throw ConfigError(k, "unknown activation '" + v + "'");
             }
         },
         [](const C& c) { return std::string(to_string(c.activation)); }},

        real_field("rlcc.t1", [](auto& c) -> auto& { return c.rlcc.t1; }),
        real_field("rlcc.t2", [](auto& c) -> auto& { return c.rlcc.t2; }),
        real_field("rlcc.beta", [](auto& c) -> auto& { return c.rlcc.beta; }),
        real_field("rlcc.bank_momentum", [](auto& c) -> auto& { return c.rlcc.bank_momentum; }),
        int_field("rlcc.epochs", [](auto& c) -> auto& { return c.rlcc.epochs; }),
        int_field("rlcc.batch_size", [](auto& c) -> auto& { return c.rlcc.batch_size; }),
        real_field("rlcc.lr", [](auto& c) -> auto& { return c.rlcc.learning_rate; }),
        real_field("rlcc.momentum", [](auto& c) -> auto& { return c.rlcc.momentum; }),
        bool_field("rlcc.include_base", [](auto& c) -> auto& { return c.rlcc.include_base; }),
        int_field("rlcc.kmeans_restarts", [](auto& c) -> auto& { return c.rlcc.kmeans_restarts; }),

        real_field("pretrain.omega", [](auto& c) -> auto& { return c.pretrain.omega; }),
        real_field("pretrain.lr", [](auto& c) -> auto& { return c.pretrain.learning_rate; }),
        real_field("pretrain.momentum", [](auto& c) -> auto& { return c.pretrain.momentum; }),
        int_field("pretrain.epochs", [](auto& c) -> auto& { return c.pretrain.epochs; }),
        int_field("pretrain.batch_size", [](auto& c) -> auto& { return c.pretrain.batch_size; }),

        bool_field("incremental.freeze", [](auto& c) -> auto& { return c.freeze_encoder; }),
        real_field("incremental.finetune_lr", [](auto& c) -> auto& { return c.incremental.finetune_lr; }),
        int_field("incremental.finetune_epochs", [](auto& c) -> auto& { return c.incremental.finetune_epochs; }),
        bool_field("incremental.keep_trained_base_rows",
                   [](auto& c) -> auto& { return c.incremental.keep_trained_base_rows; }),

        {"ablation.scenario",
         [](C& c, const std::string&, const std::string& v) { c.ablation.scenario = v; },
         [](const C& c) { return c.ablation.scenario; }},
        int_field("ablation.seeds", [](auto& c) -> auto& { return c.ablation.seeds; }),
        {"ablation.upc",
         [](C& c, const std::string& k, const std::string& v) {
             c.ablation.upc.clear();
             for (auto x : to_integer_list(k, v)) c.ablation.upc.push_back(static_cast<int>(x));
         },
         [](const C& c) { return join(c.ablation.upc); }},
        real_field("ablation.omega", [](auto& c) -> auto& { return c.ablation.omega; }),

        {"run.seed",
         [](C& c, const std::string& k, const std::string& v) {
             const auto x = to_integer(k, v);
             if (x < 0) throw ConfigError(k, "seed must be non-negative");
             c.seed = static_cast<std::uint64_t>(x);
         },
         [](const C& c) { return std::to_string(c.seed); }},
        {"run.out",
         [](C& c, const std::string&, const std::string& v) { c.out_dir = v; },
         [](const C& c) { return c.out_dir.string(); }},
        int_field("run.workers", [](auto& c) -> auto& { return c.workers; }),
    };
    return table;
}

const Field& find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return f;
    }
    throw ConfigError(key, "unknown key");
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
    find_field(key).set(config, key, value);
}

ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig config) {
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no), "expected 'section.key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
        set_config_value(config, key, value);
    }
    return config;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    ExperimentConfig config;
    if (const char* root = std::getenv(kOutRootEnv); root && *root) config.out_dir = root;
    if (path) config = parse_config_text(read_file(*path), config);
    for (const auto& [key, value] : overrides) set_config_value(config, key, value);
    validate(config);
    return config;
}

void validate(const ExperimentConfig& c) {
    auto require = [](bool ok, const char* key, const std::string& what) {
        if (!ok) throw ConfigError(key, what);
    };
    const auto& p = c.protocol;
    require(p.base_classes >= 1, "protocol.B", "must be >= 1");
    require(p.shots >= 1, "protocol.K", "must be >= 1");
    require(p.base_shots >= p.shots, "protocol.M", "must be >= protocol.K");
    require(p.ways >= 1, "protocol.N", "must be >= 1");
    require(p.sessions >= 0, "protocol.n", "must be >= 0");
    require(p.unlabeled_per_class >= 0, "protocol.U", "must be >= 0");

    const auto& s = c.synthetic;
    require(s.dim >= 1, "synthetic.dim", "must be >= 1");
    require(s.spread > 0.0, "synthetic.spread", "must be > 0");
    require(s.stddev > 0.0, "synthetic.stddev", "must be > 0");
    require(s.test_per_class >= 1, "synthetic.test_per_class", "must be >= 1");
    require(s.class_count >= p.total_classes(), "synthetic.classes", "must be >= B + n*N");
    require(s.samples_per_class >= p.base_shots + s.test_per_class, "synthetic.samples_per_class",
            "must be >= M + test_per_class");
    require(p.sessions == 0 || s.samples_per_class >= p.shots + p.unlabeled_per_class + s.test_per_class,
            "synthetic.samples_per_class", "must be >= K + U + test_per_class");

    require(c.embedding_dim >= 1, "encoder.embedding", "must be >= 1");

    const auto& r = c.rlcc;
    require(r.t1 > 0.0, "rlcc.t1", "must be > 0");
    require(r.t2 > 0.0, "rlcc.t2", "must be > 0");
    require(r.beta >= 0.0, "rlcc.beta", "must be >= 0");
    require(r.bank_momentum >= 0.0 && r.bank_momentum <= 1.0, "rlcc.bank_momentum", "must lie in [0, 1]");
    require(r.epochs >= 0, "rlcc.epochs", "must be >= 0");
    require(r.batch_size >= 1, "rlcc.batch_size", "must be >= 1");
    require(r.learning_rate > 0.0, "rlcc.lr", "must be > 0");
    require(r.momentum >= 0.0 && r.momentum < 1.0, "rlcc.momentum", "must lie in [0, 1)");
    require(r.kmeans_restarts >= 1, "rlcc.kmeans_restarts", "must be >= 1");

    const auto& t = c.pretrain;
    require(t.omega >= 0.0, "pretrain.omega", "must be >= 0");
    require(t.learning_rate > 0.0, "pretrain.lr", "must be > 0");
    require(t.momentum >= 0.0 && t.momentum < 1.0, "pretrain.momentum", "must lie in [0, 1)");
    require(t.epochs >= 0, "pretrain.epochs", "must be >= 0");
    require(t.batch_size >= 1, "pretrain.batch_size", "must be >= 1");

    require(c.incremental.finetune_lr > 0.0, "incremental.finetune_lr", "must be > 0");
    require(c.incremental.finetune_epochs >= 0, "incremental.finetune_epochs", "must be >= 0");

    static const std::set<std::string> scenarios{"pk_on_off", "label_mismatch", "upc_sweep", "omega_on_off"};
    require(scenarios.count(c.ablation.scenario) == 1, "ablation.scenario",
            "unknown scenario '" + c.ablation.scenario + "'");
    require(c.ablation.seeds >= 1, "ablation.seeds", "must be >= 1");
    require(!c.ablation.upc.empty(), "ablation.upc", "must list at least one value");
    for (int u : c.ablation.upc) {
        require(u >= 0, "ablation.upc", "values must be >= 0");
        require(p.sessions == 0 || s.samples_per_class >= p.shots + u + s.test_per_class, "ablation.upc",
                "value " + std::to_string(u) + " exceeds what synthetic.samples_per_class can supply");
    }
    require(c.ablation.omega >= 0.0, "ablation.omega", "must be >= 0");
    require(c.workers >= 1, "run.workers", "must be >= 1");
    require(!c.out_dir.empty(), "run.out", "must not be empty");
}

std::string format_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

}  // namespace lwpk
