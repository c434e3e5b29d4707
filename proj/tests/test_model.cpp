#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "fairlm/model.hpp"
#include "helpers.hpp"

using namespace fairlm;

namespace {

ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig c;
    c.n_layers = 1;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.vocab_size = 12;
    c.max_seq_len = 6;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("parameter count matches the closed form") {
    ModelConfig c;
    c.n_layers = 4;
    c.d_model = 128;
    c.n_heads = 4;
    c.d_ff = 512;
    c.vocab_size = 200;
    c.max_seq_len = 16;
    TransformerLM m(c);
    const ParamCount pc = m.param_count();
    CHECK(pc.embeddings == 200 * 128 + 16 * 128);
    CHECK(pc.attention == 4 * 4 * 128 * 128);
    CHECK(pc.mlp == 4 * 2 * 128 * 512);
    CHECK(pc.norms == 4 * 4 * 128 + 2 * 128);
    CHECK(pc.head == 200 * 128);

    std::size_t named_total = 0;
    for (const auto& [name, t] : m.named_parameters()) named_total += t.size();
    CHECK(named_total == pc.total());
}

TEST_CASE("logits at position i ignore tokens after i") {
    TransformerLM m(tiny_config(11));
    NoGradGuard ng;
    const std::vector<int> a = {2, 5, 7, 4, 9};
    std::vector<int> b = a;
    b[3] = 10;
    b[4] = 3;
    Tensor la = m.forward(a);
    Tensor lb = m.forward(b);
    const std::size_t v = m.config().vocab_size;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < v; ++j)
            CHECK(la.values()[i * v + j] == lb.values()[i * v + j]);
}

TEST_CASE("sentence log prob equals softmax chain computed from raw logits") {
    TransformerLM m(tiny_config(5));
    NoGradGuard ng;
    const std::vector<int> toks = {2, 6, 9, 1, 3};
    Tensor logits = m.forward(toks);
    const std::size_t v = m.config().vocab_size;
    double expected = 0.0;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        double mx = -1e300, lse = 0.0;
        for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, logits.values()[i * v + j]);
        for (std::size_t j = 0; j < v; ++j) lse += std::exp(logits.values()[i * v + j] - mx);
        expected += logits.values()[i * v + toks[i + 1]] - mx - std::log(lse);
    }
    CHECK(m.sentence_log_prob(toks, ScoreMode::Sum) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(m.sentence_log_prob(toks, ScoreMode::PerTokenMean) ==
          doctest::Approx(expected / 4.0).epsilon(1e-10));
}

TEST_CASE("full loss gradient matches finite differences end to end") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        TransformerLM m(tiny_config(seed));
        const std::vector<std::vector<int>> seqs = {{2, 5, 7, 4, 9}, {2, 8, 1, 10, 3}};
        const std::vector<int> targets = {5, 7, 4, 9, kIgnoreTarget,
                                          8, 1, 10, 3, kIgnoreTarget};
        auto build = [&] { return cross_entropy(m.forward_batch(seqs), targets); };
        auto rep = testutil::fd_check(build, m.parameters(), rng, 1e-4, 4);
        CHECK(rep.max_rel_err < 1e-3);
    }
}

TEST_CASE("batched forward equals per-sequence forward") {
    TransformerLM m(tiny_config(3));
    NoGradGuard ng;
    const std::vector<std::vector<int>> seqs = {{2, 5, 7, 4}, {2, 8, 1, 10}};
    Tensor batch = m.forward_batch(seqs);
    Tensor one = m.forward(seqs[1]);
    const std::size_t v = m.config().vocab_size;
    for (std::size_t i = 0; i < 4 * v; ++i)
        CHECK(batch.values()[4 * v + i] == doctest::Approx(one.values()[i]).epsilon(1e-12));
}

TEST_CASE("save and load reproduce outputs exactly") {
    TransformerLM m(tiny_config(42));
    const std::string path = std::filesystem::temp_directory_path() / "fairlm_model_test.bin";
    m.save(path);
    TransformerLM n = TransformerLM::load(path);
    NoGradGuard ng;
    const std::vector<int> toks = {2, 6, 9, 1};
    Tensor a = m.forward(toks);
    Tensor b = n.forward(toks);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
    std::remove(path.c_str());
}

TEST_CASE("config validation rejects inconsistent dimensions") {
    ModelConfig c = tiny_config(0);
    c.n_heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(TransformerLM{c}, ConfigError);
    c = tiny_config(0);
    c.vocab_size = 0;
    CHECK_THROWS_AS(TransformerLM{c}, ConfigError);
}

TEST_CASE("sequences longer than max_seq_len are rejected") {
    TransformerLM m(tiny_config(0));
    const std::vector<int> toks = {2, 5, 7, 4, 9, 1, 3};
    CHECK_THROWS_AS((void)m.forward(toks), InputError);
}

TEST_SUITE_END();
