#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "lwpk/datastream.hpp"
#include "lwpk/errors.hpp"
#include "lwpk/io.hpp"

using namespace lwpk;

namespace {

std::set<std::uint64_t> uids(const std::vector<Example>& xs) {
    std::set<std::uint64_t> out;
    for (const auto& x : xs) out.insert(x.uid);
    return out;
}

std::set<int> classes(const std::vector<Example>& xs) {
    std::set<int> out;
    for (const auto& x : xs) out.insert(*x.label);
    return out;
}

SessionStream desk_stream(std::uint64_t seed = 7) {
    SyntheticSpec spec;
    spec.seed = seed;
    return generate_synthetic(spec, Protocol{});
}

std::vector<Example> gaussian_examples(int classes, int per_class, int dim, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.class_count = classes;
    spec.samples_per_class = per_class;
    spec.dim = dim;
    spec.seed = seed;
    // one session stream is enough to get labeled points back out
    Protocol p{classes, per_class - 1, 1, 1, 0, 0};
    spec.test_per_class = 1;
    auto s = generate_synthetic(spec, p);
    std::vector<Example> out = s.base;
    out.insert(out.end(), s.tests[0].begin(), s.tests[0].end());
    return out;
}

}  // namespace

TEST_CASE("desk stream shape and disjointness") {
    const auto s = desk_stream();
    REQUIRE(s.increments.size() == 3);
    for (const auto& inc : s.increments) CHECK(inc.size() == 6);
    CHECK(s.base.size() == 6 * 20);
    CHECK(s.unlabeled.size() == 30);
    CHECK(s.unlabeled_truth.size() == 30);
    CHECK(draw_unlabeled(s).size() == 30);

    std::vector<std::set<std::uint64_t>> parts{uids(s.base), uids(s.unlabeled)};
    for (const auto& inc : s.increments) parts.push_back(uids(inc));
    parts.push_back(uids(s.tests.back()));
    std::size_t total = 0;
    std::set<std::uint64_t> all;
    for (const auto& p : parts) {
        total += p.size();
        all.insert(p.begin(), p.end());
    }
    CHECK(all.size() == total);
}

TEST_CASE("label ranges per session") {
    const auto s = desk_stream(3);
    const auto& p = s.protocol;
    for (const auto& x : s.base) {
        CHECK(*x.label >= 0);
        CHECK(*x.label < p.base_classes);
    }
    for (int k = 1; k <= p.sessions; ++k) {
        for (const auto& x : s.increments[static_cast<std::size_t>(k - 1)]) {
            CHECK(*x.label >= p.base_classes + (k - 1) * p.ways);
            CHECK(*x.label < p.base_classes + k * p.ways);
        }
    }
    for (const auto& x : s.unlabeled) CHECK_FALSE(x.label.has_value());
    for (int t : s.unlabeled_truth.reveal_for_scoring()) {
        CHECK(t >= p.base_classes);
        CHECK(t < p.total_classes());
    }
}

TEST_CASE("test sets grow monotonically") {
    const auto s = desk_stream(11);
    REQUIRE(s.tests.size() == 4);
    for (std::size_t k = 0; k < s.tests.size(); ++k) {
        const auto c = classes(s.tests[k]);
        CHECK(static_cast<int>(c.size()) == s.protocol.classes_seen(static_cast<int>(k)));
        if (k > 0) {
            const auto prev = classes(s.tests[k - 1]);
            CHECK(std::includes(c.begin(), c.end(), prev.begin(), prev.end()));
            CHECK(c.size() > prev.size());
        }
    }
}

TEST_CASE("stream serialization is deterministic per seed") {
    CHECK(serialize_stream(desk_stream(5)) == serialize_stream(desk_stream(5)));
    CHECK(serialize_stream(desk_stream(5)) != serialize_stream(desk_stream(6)));
}

TEST_CASE("cifar-shaped protocol") {
    SyntheticSpec spec;
    spec.class_count = 100;
    spec.dim = 2;
    spec.samples_per_class = 510;
    spec.test_per_class = 5;
    Protocol p{60, 500, 5, 5, 8, 0};
    const auto s = generate_synthetic(spec, p);
    CHECK(p.total_classes() == 100);
    REQUIRE(s.increments.size() == 8);
    for (const auto& inc : s.increments) CHECK(inc.size() == 25);
    CHECK(s.unlabeled.empty());
}

TEST_CASE("no incremental sessions") {
    SyntheticSpec spec;
    Protocol p{6, 20, 2, 3, 0, 5};
    const auto s = generate_synthetic(spec, p);
    CHECK(s.increments.empty());
    CHECK(s.tests.size() == 1);
    CHECK(s.unlabeled.empty());
}

TEST_CASE("cub-shaped split") {
    const auto xs = gaussian_examples(200, 40, 2, 1);
    Protocol p{100, 30, 10, 5, 10, 0};
    const auto s = split_protocol(xs, p, 9);
    REQUIRE(s.increments.size() == 10);
    for (const auto& inc : s.increments) CHECK(inc.size() == 50);
    CHECK(s.base.size() == 3000);
}

TEST_CASE("split determinism per seed") {
    const auto xs = gaussian_examples(12, 40, 3, 2);
    Protocol p;
    const auto a = split_protocol(xs, p, 1), b = split_protocol(xs, p, 1), c = split_protocol(xs, p, 2);
    CHECK(stream_manifest(a) == stream_manifest(b));
    CHECK(stream_manifest(a) != stream_manifest(c));
}

TEST_CASE("zero unlabeled per class") {
    Protocol p;
    p.unlabeled_per_class = 0;
    const auto s = generate_synthetic(SyntheticSpec{}, p);
    CHECK(draw_unlabeled(s).empty());
    CHECK(s.unlabeled_truth.size() == 0);
}

TEST_CASE("infeasible quota names the class") {
    auto xs = gaussian_examples(12, 40, 3, 4);
    // starve one class
    std::erase_if(xs, [n = 0](const Example& e) mutable { return *e.label == 7 && ++n > 5; });
    Protocol p;
    try {
        split_protocol(xs, p, 0);
        FAIL("expected ProtocolInfeasible");
    } catch (const ProtocolInfeasible& e) {
        CHECK(std::string(e.what()).find("class 7") != std::string::npos);
    }

    SyntheticSpec spec;
    spec.samples_per_class = 10;
    CHECK_THROWS_AS(generate_synthetic(spec, Protocol{}), ProtocolInfeasible);
}

TEST_CASE("restrict_unlabeled keeps a prefix per class") {
    const auto s = desk_stream();
    const auto r = restrict_unlabeled(s, 2);
    REQUIRE(r.unlabeled.size() == 12);
    const auto& full = s.unlabeled_truth.reveal_for_scoring();
    const auto& kept = r.unlabeled_truth.reveal_for_scoring();
    for (std::size_t c = 0; c < 6; ++c) {
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(r.unlabeled[c * 2 + i].uid == s.unlabeled[c * 5 + i].uid);
            CHECK(kept[c * 2 + i] == full[c * 5 + i]);
        }
    }
    CHECK(stream_manifest(restrict_unlabeled(s, 5)) == stream_manifest(s));
    CHECK_THROWS_AS(restrict_unlabeled(s, 6), ProtocolInfeasible);
}

TEST_CASE("feature table parsing") {
    const auto xs = parse_feature_table("1,2,3,4,0\n5,6,7,8,1\n0.5,0.25,-1,2,-1\n");
    REQUIRE(xs.size() == 3);
    CHECK(xs[0].features.size() == 4);
    CHECK(*xs[1].label == 1);
    CHECK_FALSE(xs[2].label.has_value());
    CHECK(xs[2].uid == 2);

    try {
        parse_feature_table("1,2,3,4,0\n1,2,0\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
    }
    try {
        parse_feature_table("1,2,0\n1,x,0\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
    }
    CHECK_THROWS_AS(parse_feature_table(""), ParseError);
}

TEST_CASE("feature table round trip is bit-exact") {
    const auto s = desk_stream(21);
    const auto dir = std::filesystem::temp_directory_path() / "lwpk_ds_roundtrip";
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "base.csv", format_feature_table(s.base));
    const auto back = load_feature_table(dir / "base.csv");
    REQUIRE(back.size() == s.base.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].features == s.base[i].features);
        CHECK(back[i].label == s.base[i].label);
    }
    std::filesystem::remove_all(dir);
}
