#include "lwpk/datastream.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"
#include "lwpk/random.hpp"

namespace lwpk {

void Protocol::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ProtocolInfeasible(std::string("protocol: ") + what);
    };
    require(base_classes >= 1, "B must be >= 1");
    require(shots >= 1, "K must be >= 1");
    require(base_shots >= shots, "M must be >= K");
    require(ways >= 1, "N must be >= 1");
    require(sessions >= 0, "n must be >= 0");
    require(unlabeled_per_class >= 0, "U must be >= 0");
}

SessionStream generate_synthetic(const SyntheticSpec& spec, const Protocol& protocol) {
    protocol.validate();
    if (spec.dim < 1) throw ProtocolInfeasible("synthetic: dim must be >= 1");
    if (!(spec.spread > 0.0)) throw ProtocolInfeasible("synthetic: spread must be > 0");
    if (!(spec.stddev > 0.0)) throw ProtocolInfeasible("synthetic: stddev must be > 0");
    if (spec.test_per_class < 1) throw ProtocolInfeasible("synthetic: test_per_class must be >= 1");
    if (spec.class_count < protocol.total_classes()) {
        throw ProtocolInfeasible("synthetic: class_count " + std::to_string(spec.class_count) +
                                 " < B + n*N = " + std::to_string(protocol.total_classes()));
    }
    const int base_need = protocol.base_shots + spec.test_per_class;
    const int incr_need = protocol.shots + protocol.unlabeled_per_class + spec.test_per_class;
    if (spec.samples_per_class < base_need) {
        throw ProtocolInfeasible("synthetic: samples_per_class " +
                                 std::to_string(spec.samples_per_class) +
                                 " < M + test quota = " + std::to_string(base_need));
    }
    if (protocol.sessions > 0 && spec.samples_per_class < incr_need) {
        throw ProtocolInfeasible("synthetic: samples_per_class " +
                                 std::to_string(spec.samples_per_class) +
                                 " < K + U + test quota = " + std::to_string(incr_need));
    }

    Rng rng(derive_seed(spec.seed, "synthetic.points"));
    const auto dim = static_cast<std::size_t>(spec.dim);
    std::vector<Example> examples;
    examples.reserve(static_cast<std::size_t>(spec.class_count) *
                     static_cast<std::size_t>(spec.samples_per_class));
    std::uint64_t uid = 0;
    for (int c = 0; c < spec.class_count; ++c) {
        std::vector<double> center(dim);
        for (auto& x : center) x = spec.spread * rng.normal();
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Example ex;
            ex.features.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) ex.features[j] = center[j] + spec.stddev * rng.normal();
            ex.label = c;
            ex.uid = uid++;
            examples.push_back(std::move(ex));
        }
    }
    return split_protocol(examples, protocol, derive_seed(spec.seed, "synthetic.split"),
                          spec.test_per_class);
}

SessionStream split_protocol(std::span<const Example> examples, const Protocol& protocol,
                             std::uint64_t seed, int test_cap) {
    protocol.validate();
    if (examples.empty()) throw ProtocolInfeasible("split: no examples");

    const std::size_t dim = examples.front().features.size();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (!ex.label) throw ProtocolInfeasible("split: example uid " + std::to_string(ex.uid) + " has no label");
        if (ex.features.size() != dim) throw ShapeMismatch("split: inconsistent feature dimension");
        by_class[*ex.label].push_back(i);
    }

    const int total = protocol.total_classes();
    if (static_cast<int>(by_class.size()) < total) {
        throw ProtocolInfeasible("split: " + std::to_string(by_class.size()) +
                                 " classes available, B + n*N = " + std::to_string(total) + " required");
    }

    Rng rng(seed);
    std::vector<int> class_ids;
    for (const auto& [id, members] : by_class) class_ids.push_back(id);
    rng.shuffle(class_ids);
    class_ids.resize(static_cast<std::size_t>(total));

    // Quota check first, so the error names the first violated quota
    // before any work is done.
    for (int pos = 0; pos < total; ++pos) {
        const int orig = class_ids[static_cast<std::size_t>(pos)];
        const auto have = static_cast<int>(by_class[orig].size());
        const bool is_base = pos < protocol.base_classes;
        const int need = is_base ? protocol.base_shots + 1
                                 : protocol.shots + protocol.unlabeled_per_class + 1;
        if (have < need) {
            std::ostringstream msg;
            msg << "split: class " << orig << " (assigned id " << pos << ") has " << have
                << " examples; "
                << (is_base ? "M + 1 test" : "K + U + 1 test") << " = " << need << " required";
            throw ProtocolInfeasible(msg.str());
        }
    }

    SessionStream stream;
    stream.protocol = protocol;
    stream.dim = dim;
    stream.increments.resize(static_cast<std::size_t>(protocol.sessions));
    std::vector<std::vector<Example>> class_tests(static_cast<std::size_t>(total));
    std::vector<int> truth;

    auto relabeled = [&](std::size_t idx, int label) {
        Example ex = examples[idx];
        ex.label = label;
        return ex;
    };

    for (int pos = 0; pos < total; ++pos) {
        auto members = by_class[class_ids[static_cast<std::size_t>(pos)]];
        rng.shuffle(members);
        std::size_t cursor = 0;
        auto take = [&](std::size_t count, auto&& sink) {
            for (std::size_t i = 0; i < count; ++i) sink(members[cursor++]);
        };

        if (pos < protocol.base_classes) {
            take(static_cast<std::size_t>(protocol.base_shots),
                 [&](std::size_t idx) { stream.base.push_back(relabeled(idx, pos)); });
        } else {
            const auto session = static_cast<std::size_t>((pos - protocol.base_classes) / protocol.ways);
            take(static_cast<std::size_t>(protocol.shots),
                 [&](std::size_t idx) { stream.increments[session].push_back(relabeled(idx, pos)); });
            take(static_cast<std::size_t>(protocol.unlabeled_per_class), [&](std::size_t idx) {
                Example ex = examples[idx];
                ex.label.reset();
                stream.unlabeled.push_back(std::move(ex));
                truth.push_back(pos);
            });
        }

        std::size_t remaining = members.size() - cursor;
        if (test_cap > 0) remaining = std::min(remaining, static_cast<std::size_t>(test_cap));
        auto& tests = class_tests[static_cast<std::size_t>(pos)];
        take(remaining, [&](std::size_t idx) { tests.push_back(relabeled(idx, pos)); });
        std::sort(tests.begin(), tests.end(),
                  [](const Example& a, const Example& b) { return a.uid < b.uid; });
    }

    stream.unlabeled_truth = SealedTruth(std::move(truth));
    for (int s = 0; s <= protocol.sessions; ++s) {
        std::vector<Example> test;
        for (int c = 0; c < protocol.classes_seen(s); ++c) {
            const auto& part = class_tests[static_cast<std::size_t>(c)];
            test.insert(test.end(), part.begin(), part.end());
        }
        stream.tests.push_back(std::move(test));
    }
    return stream;
}

std::vector<Example> draw_unlabeled(const SessionStream& stream) {
    std::vector<Example> pool = stream.unlabeled;
    for (auto& ex : pool) ex.label.reset();
    return pool;
}

SessionStream restrict_unlabeled(const SessionStream& stream, int per_class) {
    const int have = stream.protocol.unlabeled_per_class;
    if (per_class < 0 || per_class > have) {
        throw ProtocolInfeasible("restrict_unlabeled: " + std::to_string(per_class) +
                                 " per class requested, stream holds " + std::to_string(have));
    }
    SessionStream out = stream;
    out.protocol.unlabeled_per_class = per_class;
    out.unlabeled.clear();
    std::vector<int> truth;
    const auto& full_truth = stream.unlabeled_truth.reveal_for_scoring();
    const auto block = static_cast<std::size_t>(have);
    for (std::size_t start = 0; start < stream.unlabeled.size(); start += block) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(per_class); ++i) {
            out.unlabeled.push_back(stream.unlabeled[start + i]);
            truth.push_back(full_truth[start + i]);
        }
    }
    out.unlabeled_truth = SealedTruth(std::move(truth));
    return out;
}

std::vector<Example> parse_feature_table(std::string_view text) {
    std::vector<Example> out;
    std::size_t dim = 0;
    std::size_t row = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const auto line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        if (line.empty()) continue;
        ++row;

        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                                : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (cells.size() < 2) throw ParseError(row, "need at least one feature and a label");
        if (row == 1) dim = cells.size() - 1;
        if (cells.size() - 1 != dim) {
            throw ParseError(row, "expected " + std::to_string(dim + 1) + " columns, found " +
                                      std::to_string(cells.size()));
        }

        Example ex;
        ex.uid = row - 1;
        ex.features.reserve(dim);
        for (std::size_t c = 0; c < dim; ++c) {
            const auto v = parse_double(cells[c]);
            if (!v) {
                throw ParseError(row, "non-numeric cell in column " + std::to_string(c + 1) + ": '" +
                                          std::string(trim(cells[c])) + "'");
            }
            ex.features.push_back(*v);
        }
        const auto label = parse_integer(cells.back());
        if (!label) throw ParseError(row, "label is not an integer: '" + std::string(trim(cells.back())) + "'");
        if (*label >= 0) ex.label = static_cast<int>(*label);
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw ParseError(1, "empty feature table");
    return out;
}

std::vector<Example> load_feature_table(const std::filesystem::path& path) {
    return parse_feature_table(read_file(path));
}

std::string format_feature_table(std::span<const Example> examples) {
    std::string out;
    for (const auto& ex : examples) {
        for (double v : ex.features) {
            out += format_double(v);
            out += ',';
        }
        out += std::to_string(ex.label.value_or(-1));
        out += '\n';
    }
    return out;
}

namespace {

void append_uids(std::ostringstream& out, const std::string& name, std::span<const Example> part) {
    out << name << ' ' << part.size() << ':';
    for (const auto& ex : part) out << ' ' << ex.uid;
    out << '\n';
}

}  // namespace

std::string stream_manifest(const SessionStream& stream) {
    const auto& p = stream.protocol;
    std::ostringstream out;
    out << "# lwpk stream manifest v1\n";
    out << "protocol B=" << p.base_classes << " M=" << p.base_shots << " N=" << p.ways
        << " K=" << p.shots << " n=" << p.sessions << " U=" << p.unlabeled_per_class << '\n';
    out << "dim " << stream.dim << '\n';
    append_uids(out, "base", stream.base);
    for (std::size_t s = 0; s < stream.increments.size(); ++s) {
        append_uids(out, "session_" + std::to_string(s + 1), stream.increments[s]);
    }
    append_uids(out, "unlabeled", stream.unlabeled);
    for (std::size_t s = 0; s < stream.tests.size(); ++s) {
        append_uids(out, "test_" + std::to_string(s), stream.tests[s]);
    }
    return out.str();
}

std::string serialize_stream(const SessionStream& stream) {
    std::string out = stream_manifest(stream);
    auto section = [&](const std::string& name, std::span<const Example> part) {
        out += "[" + name + "]\n";
        out += format_feature_table(part);
    };
    section("base", stream.base);
    for (std::size_t s = 0; s < stream.increments.size(); ++s) {
        section("session_" + std::to_string(s + 1), stream.increments[s]);
    }
    section("unlabeled", stream.unlabeled);
    for (std::size_t s = 0; s < stream.tests.size(); ++s) {
        section("test_" + std::to_string(s), stream.tests[s]);
    }
    return out;
}

Matrix feature_matrix(std::span<const Example> examples) {
    if (examples.empty()) return {};
    Matrix m(examples.size(), examples.front().features.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& f = examples[i].features;
        if (f.size() != m.cols()) throw ShapeMismatch("feature_matrix: inconsistent dimension");
        std::copy(f.begin(), f.end(), m.row(i).begin());
    }
    return m;
}

std::vector<int> labels_of(std::span<const Example> examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label.value_or(-1));
    return out;
}

}  // namespace lwpk
