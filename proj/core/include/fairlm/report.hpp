#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairlm/errors.hpp"

namespace fairlm {

struct DomainMetrics {
    double lms = 0.0;
    double ss = 0.0;
    double icat = 0.0;
    double perplexity = 0.0;
};

// One evaluated model: per-domain metrics plus bookkeeping linking a
// debiased record to its base model.
struct ModelRecord {
    std::string name;
    std::uint64_t params = 0;
    bool debiased = false;
    std::string base;                             // base record name when debiased
    std::map<std::string, DomainMetrics> domains; // keyed by domain, "all" included
};

std::vector<ModelRecord> load_records(const std::string& path);  // JSONL
void save_records(const std::string& path, const std::vector<ModelRecord>& records);

// SHA-256 of the shipped fixture file, pinned at build time.
const char* fixture_sha256();

// Loads the shipped fixture and, when verify is set, rejects any edit to it.
std::vector<ModelRecord> load_fixture(const std::string& path, bool verify = true);

struct DeltaStats {
    struct DomainDelta {
        std::string domain;
        double mean = 0.0;
        double stddev = 0.0;  // sample (n-1); 0 when n == 1
        std::size_t n = 0;
    };
    std::vector<DomainDelta> per_domain;  // "all" rows are excluded
    double pooled_mean = 0.0;             // over every (domain, pair) drop
    double pooled_std = 0.0;
    std::size_t pooled_n = 0;
    double mean_of_means = 0.0;
};

// Per (base, debiased) pair and domain: drop = ss_base - ss_debiased.
DeltaStats debias_delta_stats(const std::vector<ModelRecord>& records);

enum class CorrTransform { Linear, LogLog };

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
    std::size_t n = 0;
};

Correlation correlation(const std::vector<std::pair<double, double>>& points,
                        CorrTransform transform);

struct FixtureCheck {
    std::string model;
    std::string domain;
    double printed_icat = 0.0;
    double recomputed_icat = 0.0;
    bool ok = false;
};

// Recomputes icat from each row's (lms, ss) and compares at the table's
// two-decimal precision within +-0.01.
std::vector<FixtureCheck> verify_fixture_arithmetic(const std::vector<ModelRecord>& records);

struct SummaryResult {
    std::vector<std::string> files;  // everything written under out_dir
    std::string summary_text;
    bool small_n = false;  // fewer than 10 models: no significance claim
};

// Log-log scatter data for (size, ss) and (perplexity, ss) per domain over
// the non-debiased records, as CSV plus self-contained SVG, with a
// correlation block in the returned summary text.
SummaryResult size_bias_summary(const std::vector<ModelRecord>& records,
                                const std::string& out_dir, const std::string& tag = "models");

}  // namespace fairlm
