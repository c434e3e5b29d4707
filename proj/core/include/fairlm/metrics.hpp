#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fairlm/lora.hpp"
#include "fairlm/model.hpp"
#include "fairlm/tokenizer.hpp"

namespace fairlm {

// One intrasentence item: a target term in a context that is stereotypical,
// anti-stereotypical, or meaningless.
struct Triplet {
    std::string domain;
    std::string target;
    std::string stereotype;
    std::string anti_stereotype;
    std::string unrelated;

    void validate() const;
};

struct TripletScores {
    double s_stereo = 0.0;
    double s_anti = 0.0;
    double s_unrel = 0.0;
};

struct BiasRow {
    std::string domain;
    std::size_t n_triplets = 0;
    double lms = 0.0;
    double ss = 0.0;
    double icat = 0.0;
    double perplexity = 0.0;
};

struct BiasReport {
    std::vector<BiasRow> per_domain;  // sorted by domain name
    BiasRow all;                      // domain == "all"

    std::string to_csv() const;  // header: domain,n,lms,ss,icat,perplexity
};

// Total log-probability of the scored (non-BOS) tokens plus their count,
// enough to derive both score modes and corpus perplexity.
struct SentenceScore {
    double log_prob_sum = 0.0;
    std::size_t n_tokens = 0;

    double score(ScoreMode mode) const {
        return mode == ScoreMode::Sum ? log_prob_sum
                                      : log_prob_sum / static_cast<double>(n_tokens);
    }
};

using SentenceScoreFn = std::function<SentenceScore(const std::string&)>;

SentenceScoreFn make_scorer(const TransformerLM& model, const Vocab& vocab);
SentenceScoreFn make_scorer(const AdaptedModel& model, const Vocab& vocab);

TripletScores score_triplet(const SentenceScoreFn& scorer, const Triplet& t, ScoreMode mode);

// 100 * fraction of triplets whose stereotyped sentence outscores the
// anti-stereotyped one; exact ties count one half. 50 is ideal.
double stereotype_score(const std::vector<TripletScores>& scored);

// Two comparisons per triplet (stereotype vs unrelated, anti vs unrelated);
// 100 * wins / (2n), ties one half. 100 is ideal.
double language_modeling_score(const std::vector<TripletScores>& scored);

// lms * min(ss, 100-ss) / 50.
double icat(double lms, double ss);

// Corpus perplexity, token-weighted: exp(total NLL / total scored tokens).
double perplexity(const SentenceScoreFn& scorer, const std::vector<std::string>& sentences);

// Per-domain rows plus an all-domains row. Perplexity is computed over each
// domain's stereotype and anti-stereotype sentences; pass
// ppl_include_unrelated to widen the population.
BiasReport evaluate(const SentenceScoreFn& scorer, const std::vector<Triplet>& triplets,
                    ScoreMode mode, bool ppl_include_unrelated = false);

BiasReport evaluate(const TransformerLM& model, const Vocab& vocab,
                    const std::vector<Triplet>& triplets, ScoreMode mode,
                    bool ppl_include_unrelated = false);

}  // namespace fairlm
