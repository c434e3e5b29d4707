#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fairlm/io.hpp"
#include "fairlm/report.hpp"

using namespace fairlm;

namespace {

std::string fixture_path() {
    return std::string(FAIRLM_DATA_DIR) + "/fixtures/stereoset_results.jsonl";
}

std::vector<ModelRecord> base_only(const std::vector<ModelRecord>& rs, const std::string& prefix) {
    std::vector<ModelRecord> out;
    for (const auto& r : rs)
        if (!r.debiased && r.name.rfind(prefix, 0) == 0) out.push_back(r);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("report");

TEST_CASE("shipped fixture matches its pinned checksum and parses fully") {
    const auto records = load_fixture(fixture_path());
    CHECK(records.size() == 12);
    std::size_t rows = 0;
    for (const auto& r : records) rows += r.domains.size();
    CHECK(rows == 59);
    CHECK(io::sha256_hex(io::read_file(fixture_path())) == fixture_sha256());
}

TEST_CASE("every fixture row passes the icat recomputation") {
    const auto checks = verify_fixture_arithmetic(load_fixture(fixture_path()));
    CHECK(checks.size() == 59);
    for (const auto& c : checks) {
        CAPTURE(c.model);
        CAPTURE(c.domain);
        CHECK(c.ok);
    }
}

TEST_CASE("a corrupted icat value is flagged") {
    auto records = load_fixture(fixture_path());
    records[0].domains.at("all").icat += 0.5;
    const auto checks = verify_fixture_arithmetic(records);
    std::size_t bad = 0;
    for (const auto& c : checks)
        if (!c.ok) ++bad;
    CHECK(bad == 1);
}

TEST_CASE("delta statistics reproduce the published per-domain drops") {
    const DeltaStats ds = debias_delta_stats(load_fixture(fixture_path()));
    REQUIRE(ds.per_domain.size() == 4);

    // frozen from an independent recomputation over the same table
    const std::map<std::string, std::pair<double, double>> expected = {
        {"gender", {0.975, 0.3368}},
        {"profession", {0.25, 0.4275}},
        {"race", {2.3425, 1.7195}},
        {"religion", {1.225, 1.6392}},
    };
    for (const auto& d : ds.per_domain) {
        CAPTURE(d.domain);
        const auto& [mean, stddev] = expected.at(d.domain);
        CHECK(d.n == 4);
        CHECK(d.mean == doctest::Approx(mean).epsilon(1e-3));
        CHECK(d.stddev == doctest::Approx(stddev).epsilon(1e-3));
    }

    // published values: 0.98 (0.34), 0.25 (0.43), 2.34 (1.72), 1.23 (1.64)
    for (const auto& d : ds.per_domain) {
        const std::map<std::string, std::pair<double, double>> printed = {
            {"gender", {0.98, 0.34}},
            {"profession", {0.25, 0.43}},
            {"race", {2.34, 1.72}},
            {"religion", {1.23, 1.64}},
        };
        const auto& [mean, stddev] = printed.at(d.domain);
        CHECK(std::abs(d.mean - mean) <= 0.01);
        CHECK(std::abs(d.stddev - stddev) <= 0.01);
    }

    CHECK(ds.pooled_n == 16);
    CHECK(std::abs(ds.pooled_mean - 1.20) <= 0.01);
    CHECK(std::abs(ds.pooled_std - 1.34) <= 0.01);
    CHECK(ds.pooled_mean == doctest::Approx(1.1981).epsilon(1e-3));
}

TEST_CASE("all-domain rows are excluded from the drops") {
    const DeltaStats ds = debias_delta_stats(load_fixture(fixture_path()));
    for (const auto& d : ds.per_domain) CHECK(d.domain != "all");
}

TEST_CASE("pearson over the OPT rows matches an independent computation") {
    const auto records = load_fixture(fixture_path());
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : base_only(records, "OPT")) {
        const auto& m = r.domains.at("all");
        pts.emplace_back(m.perplexity, m.ss);
    }
    REQUIRE(pts.size() == 5);
    const Correlation c = correlation(pts, CorrTransform::Linear);
    CHECK(c.pearson < 0.0);
    CHECK(c.pearson == doctest::Approx(-0.8587719922277363).epsilon(1e-9));
}

TEST_CASE("spearman handles reversal and ties") {
    const Correlation rev = correlation({{1, 6}, {2, 5}, {3, 4}, {4, 3}}, CorrTransform::Linear);
    CHECK(rev.spearman == doctest::Approx(-1.0).epsilon(1e-12));

    // x ties get average ranks; a monotone y keeps spearman below 1
    const Correlation tied =
        correlation({{1, 1}, {2, 2}, {2, 3}, {3, 4}}, CorrTransform::Linear);
    CHECK(tied.spearman > 0.0);
    CHECK(tied.spearman < 1.0);
}

TEST_CASE("perfect monotone data gives spearman one") {
    const Correlation c =
        correlation({{1, 10}, {2, 40}, {3, 90}, {4, 160}}, CorrTransform::Linear);
    CHECK(c.spearman == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("correlation input validation") {
    CHECK_THROWS_AS((void)correlation({{1, 2}, {3, 4}}, CorrTransform::Linear), InputError);
    CHECK_THROWS_AS((void)correlation({{1, 1}, {1, 2}, {1, 3}}, CorrTransform::Linear),
                    InputError);
    CHECK_THROWS_AS((void)correlation({{-1, 2}, {3, 4}, {5, 6}}, CorrTransform::LogLog),
                    InputError);
}

TEST_CASE("size summary on the three LLaMA models flags small n") {
    const auto llama = base_only(load_fixture(fixture_path()), "LLaMA");
    REQUIRE(llama.size() == 3);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "fairlm_report_test").string();
    const SummaryResult res = size_bias_summary(llama, dir, "llama");
    CHECK(res.small_n);
    CHECK(res.summary_text.find("statistical significance") != std::string::npos);
    REQUIRE(!res.files.empty());
    bool has_svg = false;
    for (const auto& f : res.files) {
        CHECK(std::filesystem::exists(f));
        if (f.size() > 4 && f.substr(f.size() - 4) == ".svg") has_svg = true;
    }
    CHECK(has_svg);
    std::filesystem::remove_all(dir);
}

TEST_CASE("records round-trip through JSONL") {
    const auto records = load_fixture(fixture_path());
    const std::string path =
        (std::filesystem::temp_directory_path() / "fairlm_records.jsonl").string();
    save_records(path, records);
    const auto loaded = load_records(path);
    REQUIRE(loaded.size() == records.size());
    CHECK(loaded[3].name == records[3].name);
    CHECK(loaded[3].domains.at("gender").ss == records[3].domains.at("gender").ss);
    std::remove(path.c_str());
}

TEST_CASE("a tampered fixture file fails verification") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "fairlm_tampered.jsonl").string();
    std::string bytes = io::read_file(fixture_path());
    bytes[bytes.find("65.66")] = '7';
    std::ofstream(path) << bytes;
    CHECK_THROWS_AS((void)load_fixture(path), InputError);
    CHECK_NOTHROW((void)load_fixture(path, false));
    std::remove(path.c_str());
}

TEST_CASE("debiased records must reference an existing base") {
    auto records = load_fixture(fixture_path());
    for (auto& r : records)
        if (r.debiased) r.base = "missing model";
    CHECK_THROWS_AS((void)debias_delta_stats(records), InputError);
}

TEST_SUITE_END();
