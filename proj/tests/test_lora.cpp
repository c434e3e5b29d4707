#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fairlm/lora.hpp"
#include "fairlm/tensor.hpp"

using namespace fairlm;

namespace {

ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.vocab_size = 12;
    c.max_seq_len = 6;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_SUITE_BEGIN("lora");

TEST_CASE("adapter list covers every targeted matrix once") {
    LoraConfig cfg;
    AdaptedModel am(TransformerLM(tiny_config(1)), cfg);
    CHECK(am.adapters().size() == 2 * 4);
}

TEST_CASE("injection leaves the forward pass exactly unchanged") {
    TransformerLM base(tiny_config(9));
    const std::vector<int> toks = {2, 6, 9, 1, 3};
    NoGradGuard ng;
    Tensor before = base.forward(toks);
    AdaptedModel am(std::move(base), LoraConfig{});
    Tensor after = am.forward(toks);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i)
        CHECK(after.values()[i] == before.values()[i]);
}

TEST_CASE("merged model matches the adapted forward pass after perturbing adapters") {
    AdaptedModel am(TransformerLM(tiny_config(9)), LoraConfig{});
    for (auto& ad : am.adapters())
        for (std::size_t i = 0; i < ad.b.size(); ++i)
            ad.b.values()[i] = 0.01 * static_cast<double>((i % 7) - 3);

    TransformerLM merged = am.merge();
    NoGradGuard ng;
    const std::vector<int> toks = {2, 6, 9, 1, 3};
    Tensor a = am.forward(toks);
    Tensor b = merged.forward(toks);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-6);
}

TEST_CASE("backward touches adapters only, base stays frozen") {
    AdaptedModel am(TransformerLM(tiny_config(4)), LoraConfig{});
    const std::vector<std::vector<int>> seqs = {{2, 5, 7, 4}};
    Tensor loss = cross_entropy(am.forward_batch(seqs), {5, 7, 4, kIgnoreTarget});
    backward(loss);
    for (const auto& [name, p] : am.base().named_parameters()) {
        CAPTURE(name);
        CHECK_FALSE(p.requires_grad());
        CHECK_FALSE(p.has_grad());
    }
    bool any_adapter_grad = false;
    for (const auto& ad : am.adapters())
        if (ad.a.has_grad() || ad.b.has_grad()) any_adapter_grad = true;
    CHECK(any_adapter_grad);
}

TEST_CASE("trainable fraction matches the closed-form count") {
    ModelConfig mc;
    mc.n_layers = 4;
    mc.d_model = 128;
    mc.n_heads = 4;
    mc.d_ff = 512;
    mc.vocab_size = 200;
    mc.max_seq_len = 16;
    AdaptedModel am(TransformerLM(mc), LoraConfig{});

    const std::size_t adapter = 4ul * 4ul * 1ul * (128 + 128);  // layers*targets*r*(din+dout)
    CHECK(am.adapter_param_count() == adapter);
    const std::size_t base = TransformerLM(mc).param_count().total();
    CHECK(am.trainable_fraction() ==
          doctest::Approx(double(adapter) / double(base + adapter)).epsilon(1e-12));
}

TEST_CASE("default adapter budget stays under half a percent") {
    ModelConfig mc;
    mc.n_layers = 4;
    mc.d_model = 128;
    mc.n_heads = 4;
    mc.d_ff = 512;
    mc.vocab_size = 200;
    mc.max_seq_len = 16;
    AdaptedModel am(TransformerLM(mc), LoraConfig{});
    CHECK(am.trainable_fraction() < 0.005);
}

TEST_CASE("adapters save and load round-trip") {
    AdaptedModel am(TransformerLM(tiny_config(7)), LoraConfig{});
    for (auto& ad : am.adapters()) ad.b.values()[0] = 0.25;
    const std::string path = std::filesystem::temp_directory_path() / "fairlm_lora_test.bin";
    am.save_adapters(path);

    AdaptedModel loaded = AdaptedModel::load_adapters(TransformerLM(tiny_config(7)), path);
    NoGradGuard ng;
    const std::vector<int> toks = {2, 6, 9, 1};
    Tensor a = am.forward(toks);
    Tensor b = loaded.forward(toks);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("loading adapters with mismatched dimensions fails") {
    AdaptedModel am(TransformerLM(tiny_config(7)), LoraConfig{});
    const std::string path = std::filesystem::temp_directory_path() / "fairlm_lora_dims.bin";
    am.save_adapters(path);
    ModelConfig other = tiny_config(7);
    other.d_model = 16;
    other.n_heads = 4;
    CHECK_THROWS_AS((void)AdaptedModel::load_adapters(TransformerLM(other), path), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("config validation") {
    LoraConfig cfg;
    cfg.rank = 0;
    CHECK_THROWS_AS(cfg.validate(tiny_config(0)), ConfigError);
    cfg.rank = 9;  // > d_model of 8
    CHECK_THROWS_AS(cfg.validate(tiny_config(0)), ConfigError);
    cfg.rank = 2;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(tiny_config(0)), ConfigError);
}

TEST_SUITE_END();
