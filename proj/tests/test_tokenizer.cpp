#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fairlm/tokenizer.hpp"

using namespace fairlm;

TEST_SUITE_BEGIN("tokenizer");

TEST_CASE("normalize lowercases, strips punctuation, splits on whitespace") {
    CHECK(Vocab::normalize("The  cat, sat!") == std::vector<std::string>{"the", "cat", "sat"});
    CHECK(Vocab::normalize("Hello?") == std::vector<std::string>{"hello"});
    CHECK(Vocab::normalize("   ") == std::vector<std::string>{});
}

TEST_CASE("reserved ids come first and token ids are frequency-ordered") {
    Vocab v = Vocab::build({"b b b a a c", "a c"});
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kUnk) == "<unk>");
    CHECK(v.token(Vocab::kBos) == "<bos>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
    CHECK(v.token_id("a") == 4);  // freq 3, lexicographic before b
    CHECK(v.token_id("b") == 5);  // freq 3
    CHECK(v.token_id("c") == 6);  // freq 2
    CHECK(v.size() == 7);
}

TEST_CASE("min_freq filters rare tokens") {
    Vocab v = Vocab::build({"a a b"}, 2);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.token_id("b") == Vocab::kUnk);
}

TEST_CASE("encode wraps with bos and eos, decode drops reserved tokens") {
    Vocab v = Vocab::build({"the cat sat"});
    const auto ids = v.encode("the cat sat");
    REQUIRE(ids.size() == 5);
    CHECK(ids.front() == Vocab::kBos);
    CHECK(ids.back() == Vocab::kEos);
    CHECK(v.decode(ids) == "the cat sat");
}

TEST_CASE("out-of-vocabulary words encode as unk") {
    Vocab v = Vocab::build({"the cat sat"});
    const auto ids = v.encode("the dog sat");
    CHECK(ids[2] == Vocab::kUnk);
}

TEST_CASE("save and load round-trip") {
    Vocab v = Vocab::build({"green ideas sleep furiously green"});
    const std::string path = std::filesystem::temp_directory_path() / "fairlm_vocab_test.tsv";
    v.save(path);
    Vocab w = Vocab::load(path);
    CHECK(w.size() == v.size());
    CHECK(w.encode("green ideas sleep") == v.encode("green ideas sleep"));
    std::remove(path.c_str());
}

TEST_SUITE_END();
