#include <doctest.h>

#include <cmath>
#include <random>

#include "fairlm/tensor.hpp"
#include "helpers.hpp"

using namespace fairlm;
using testutil::fd_check;
using testutil::random_values;

namespace {

Tensor rand_param(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    Tensor t(std::move(shape), random_values(n, rng, scale));
    t.set_requires_grad(true);
    return t;
}

constexpr std::size_t kSeeds = 20;

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("elementwise and reduction gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = rand_param({3, 4}, rng);
        Tensor b = rand_param({3, 4}, rng);
        auto build = [&] { return sum(mul(add(a, b), sub(a, scale(b, 0.7)))); };
        auto rep = fd_check(build, {a, b}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("matmul and linear gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = rand_param({3, 5}, rng);
        Tensor b = rand_param({5, 4}, rng);
        Tensor w = rand_param({6, 4}, rng);
        auto build = [&] { return sum(linear(matmul(a, b), w)); };
        auto rep = fd_check(build, {a, b, w}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("slice and concat gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = rand_param({4, 6}, rng);
        Tensor b = rand_param({2, 6}, rng);
        auto build = [&] {
            Tensor top = slice_rows(a, 0, 2);
            Tensor left = slice_cols(a, 0, 3);
            Tensor cat = concat_rows({top, b});
            return add(sum(mul(cat, cat)), sum(concat_cols({left, slice_cols(a, 3, 3)})));
        };
        auto rep = fd_check(build, {a, b}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("softmax rows sum to one and gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor x = rand_param({3, 5}, rng, 2.0);
        Tensor mask({3, 5}, random_values(15, rng));
        {
            NoGradGuard ng;
            Tensor s = softmax_rows(x);
            for (std::size_t r = 0; r < 3; ++r) {
                double row = 0.0;
                for (std::size_t c = 0; c < 5; ++c) row += s.values()[r * 5 + c];
                CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
        auto build = [&] { return sum(mul(softmax_rows(x), mask)); };
        auto rep = fd_check(build, {x}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("causal softmax is exactly zero above the diagonal") {
    std::mt19937_64 rng(3);
    Tensor x = rand_param({4, 4}, rng, 2.0);
    NoGradGuard ng;
    Tensor s = causal_softmax(x);
    for (std::size_t i = 0; i < 4; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j > i) CHECK(s.values()[i * 4 + j] == 0.0);
            row += s.values()[i * 4 + j];
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("causal softmax gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor x = rand_param({4, 4}, rng, 2.0);
        Tensor mask({4, 4}, random_values(16, rng));
        auto build = [&] { return sum(mul(causal_softmax(x), mask)); };
        auto rep = fd_check(build, {x}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("layer norm and gelu gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor x = rand_param({3, 6}, rng);
        Tensor gain = rand_param({6}, rng, 0.5);
        Tensor bias = rand_param({6}, rng, 0.5);
        auto build = [&] { return sum(gelu(layer_norm(x, gain, bias, 1e-5))); };
        auto rep = fd_check(build, {x, gain, bias}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("embedding and cross entropy gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor table = rand_param({7, 5}, rng);
        Tensor w = rand_param({9, 5}, rng);
        const std::vector<int> ids = {1, 4, 4, 0, 6};
        const std::vector<int> targets = {3, 8, 0, kIgnoreTarget, 2};
        auto build = [&] { return cross_entropy(linear(embedding_rows(table, ids), w), targets); };
        auto rep = fd_check(build, {table, w}, rng);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("cross entropy equals hand-computed log-sum-exp value") {
    Tensor logits({2, 3}, {1.0, 2.0, 3.0, 0.5, 0.5, 0.5});
    Tensor loss = cross_entropy(logits, {2, 0});
    const double row0 = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double row1 = std::log(3.0);
    CHECK(loss.item() == doctest::Approx((row0 + row1) / 2.0).epsilon(1e-12));
}

TEST_CASE("ignored targets are excluded from the cross-entropy mean") {
    Tensor logits({2, 3}, {1.0, 2.0, 3.0, 9.0, 9.0, 9.0});
    Tensor loss = cross_entropy(logits, {2, kIgnoreTarget});
    const double row0 = -(3.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    CHECK(loss.item() == doctest::Approx(row0).epsilon(1e-12));
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
    Tensor x({2}, {1.5, -2.0});
    x.set_requires_grad(true);
    backward(sum(add(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("no-grad guard suppresses graph recording") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    NoGradGuard ng;
    Tensor y = sum(mul(x, x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node().parents.empty());
}

TEST_CASE("shape mismatches are rejected") {
    Tensor a({2, 3});
    Tensor b({3, 2});
    CHECK_THROWS_AS((void)add(a, b), ShapeError);
    CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
    CHECK_THROWS_AS((void)cross_entropy(a, {0, 1, 2}), ShapeError);
}

TEST_CASE("cross entropy rejects out-of-range targets") {
    Tensor logits({2, 3});
    CHECK_THROWS_AS((void)cross_entropy(logits, {0, 3}), IndexError);
}

TEST_SUITE_END();
