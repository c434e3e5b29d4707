#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fairlm/datasets.hpp"
#include "fairlm/tokenizer.hpp"

using namespace fairlm;

#ifndef FAIRLM_DATA_DIR
#error "FAIRLM_DATA_DIR must be defined by the build"
#endif

namespace {

std::string data_path(const std::string& rel) {
    return std::string(FAIRLM_DATA_DIR) + "/" + rel;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << content;
    return path;
}

}  // namespace

TEST_SUITE_BEGIN("datasets");

TEST_CASE("shipped sample parses into 12 triplets, three per domain") {
    const auto triplets = load_triplets(data_path("samples/triplets_sample.jsonl"));
    REQUIRE(triplets.size() == 12);
    std::map<std::string, int> per_domain;
    for (const auto& t : triplets) ++per_domain[t.domain];
    CHECK(per_domain.size() == 4);
    for (const auto& [dom, n] : per_domain) {
        CAPTURE(dom);
        CHECK(n == 3);
    }
}

TEST_CASE("generated corpus is deterministic for a fixed seed") {
    const SynthSpec spec = default_synth_spec();
    const SynthCorpus a = generate_corpus(spec);
    const SynthCorpus b = generate_corpus(spec);
    CHECK(a.train == b.train);
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t i = 0; i < a.pairs.size(); ++i)
        CHECK(a.pairs[i].perturbed == b.pairs[i].perturbed);
}

TEST_CASE("planted pairing frequency tracks the configured skew") {
    SynthSpec spec = default_synth_spec();
    spec.n_sentences = 4000;
    const SynthCorpus c = generate_corpus(spec);

    std::map<std::string, std::pair<std::string, bool>> attr_kind;  // attr -> (axis, stereo?)
    std::map<std::string, std::pair<std::string, bool>> group_side;  // group -> (axis, is_a?)
    for (const auto& ax : spec.axes) {
        for (const auto& a : ax.stereo_attrs) attr_kind[a] = {ax.name, true};
        for (const auto& a : ax.anti_attrs) attr_kind[a] = {ax.name, false};
        group_side[ax.group_a] = {ax.name, true};
        group_side[ax.group_b] = {ax.name, false};
    }

    std::size_t consistent = 0, total = 0;
    for (const auto& s : c.train) {
        std::string group, attr;
        for (const auto& w : Vocab::normalize(s)) {
            if (group_side.count(w)) group = w;
            if (attr_kind.count(w)) attr = w;
        }
        if (group.empty() || attr.empty()) continue;  // noise sentence
        ++total;
        // planted direction: group_a with stereo attrs, group_b with anti attrs
        if (group_side[group].second == attr_kind[attr].second) ++consistent;
    }
    CHECK(total > 3000);
    const double frac = double(consistent) / double(total);
    CHECK(frac == doctest::Approx(spec.skew).epsilon(0.03));
}

TEST_CASE("perturbation pairs differ in exactly the group word") {
    const SynthCorpus c = generate_corpus(default_synth_spec());
    REQUIRE(!c.pairs.empty());
    std::map<std::string, std::string> swap;
    for (const auto& ax : default_synth_spec().axes) {
        swap[ax.group_a] = ax.group_b;
        swap[ax.group_b] = ax.group_a;
    }
    for (const auto& p : c.pairs) {
        const auto ow = Vocab::normalize(p.original);
        const auto pw = Vocab::normalize(p.perturbed);
        REQUIRE(ow.size() == pw.size());
        std::size_t diffs = 0;
        for (std::size_t i = 0; i < ow.size(); ++i) {
            if (ow[i] == pw[i]) continue;
            ++diffs;
            CHECK(swap[ow[i]] == pw[i]);
        }
        CHECK(diffs == 1);
    }
}

TEST_CASE("held-out triplet sentences never appear in the training corpus") {
    const SynthCorpus c = generate_corpus(default_synth_spec());
    std::unordered_set<std::string> train(c.train.begin(), c.train.end());
    for (const auto& t : c.triplets) {
        CHECK(train.count(t.stereotype) == 0);
        CHECK(train.count(t.anti_stereotype) == 0);
        CHECK(train.count(t.unrelated) == 0);
    }
}

TEST_CASE("eval vocabulary is covered by the training corpus") {
    const SynthCorpus c = generate_corpus(default_synth_spec());
    const Vocab v = Vocab::build(c.train);
    for (const auto& t : c.triplets)
        for (const auto& s : {t.stereotype, t.anti_stereotype, t.unrelated})
            for (const auto& w : Vocab::normalize(s)) {
                CAPTURE(w);
                CHECK(v.contains(w));
            }
}

TEST_CASE("triplet count covers axes, groups, eval templates and attributes") {
    const SynthSpec spec = default_synth_spec();
    const SynthCorpus c = generate_corpus(spec);
    CHECK(c.triplets.size() ==
          spec.axes.size() * 2 * spec.eval_templates.size() * spec.axes[0].stereo_attrs.size());
}

TEST_CASE("triplet and pair files round-trip through JSONL") {
    SynthSpec spec = default_synth_spec();
    spec.n_sentences = 300;
    const SynthCorpus c = generate_corpus(spec);

    const std::string tp = std::filesystem::temp_directory_path() / "fairlm_triplets.jsonl";
    const std::string pp = std::filesystem::temp_directory_path() / "fairlm_pairs.jsonl";
    save_triplets(tp, c.triplets);
    save_pairs(pp, c.pairs);
    const auto triplets = load_triplets(tp);
    const auto pairs = load_pairs(pp);
    REQUIRE(triplets.size() == c.triplets.size());
    CHECK(triplets[0].stereotype == c.triplets[0].stereotype);
    REQUIRE(pairs.size() == c.pairs.size());
    CHECK(pairs[0].perturbed == c.pairs[0].perturbed);
    std::remove(tp.c_str());
    std::remove(pp.c_str());
}

TEST_CASE("loader errors carry the offending line number") {
    const std::string path = write_temp(
        "fairlm_bad.jsonl",
        "{\"domain\":\"d\",\"target\":\"t\",\"stereotype\":\"a b\","
        "\"anti_stereotype\":\"a c\",\"unrelated\":\"a d\"}\nnot json\n");
    try {
        (void)load_triplets(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("spec files round-trip") {
    const SynthSpec spec = default_synth_spec();
    const std::string path = std::filesystem::temp_directory_path() / "fairlm_spec.cfg";
    save_synth_spec(path, spec);
    const SynthSpec loaded = load_synth_spec(path);
    CHECK(loaded.skew == spec.skew);
    CHECK(loaded.n_sentences == spec.n_sentences);
    CHECK(loaded.seed == spec.seed);
    CHECK(loaded.train_templates == spec.train_templates);
    CHECK(loaded.eval_templates == spec.eval_templates);
    CHECK(loaded.noise_nouns == spec.noise_nouns);
    REQUIRE(loaded.axes.size() == spec.axes.size());
    CHECK(loaded.axes[0].group_a == spec.axes[0].group_a);
    CHECK(loaded.axes[1].stereo_attrs == spec.axes[1].stereo_attrs);
    // regenerating from the reloaded spec gives the identical corpus
    CHECK(generate_corpus(loaded).train == generate_corpus(spec).train);
    std::remove(path.c_str());
}

TEST_CASE("spec validation rejects structural leaks and bad slots") {
    SynthSpec s = default_synth_spec();
    s.eval_templates.push_back(s.train_templates[0]);
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = default_synth_spec();
    s.train_templates[0] = "no slots here";
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = default_synth_spec();
    s.skew = 0.4;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = default_synth_spec();
    s.axes[0].anti_attrs.pop_back();
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("pair validation rejects identical sides") {
    PerturbationPair p{"same text", "same text", "axis"};
    CHECK_THROWS_AS(p.validate(), InputError);
}

TEST_SUITE_END();
