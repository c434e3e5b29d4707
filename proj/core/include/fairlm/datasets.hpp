#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairlm/metrics.hpp"

namespace fairlm {

// A sentence and its demographic-swapped rewrite; only the perturbed side
// feeds debias fine-tuning.
struct PerturbationPair {
    std::string original;
    std::string perturbed;
    std::string axis;

    void validate() const;
};

// One planted-bias axis: two group words sharing two attribute lists.
// stereo_attrs are planted with group_a, anti_attrs with group_b.
struct AxisSpec {
    std::string name;
    std::string group_a;
    std::string group_b;
    std::vector<std::string> stereo_attrs;
    std::vector<std::string> anti_attrs;
};

// Deterministic synthetic corpus with a known group-attribute skew.
// Templates contain exactly one "{g}" slot and one "{a}" slot; eval templates
// are disjoint from train templates so held-out triplets never leak.
struct SynthSpec {
    std::vector<AxisSpec> axes;
    double skew = 0.9;  // probability a training sentence keeps the planted pairing
    std::vector<std::string> train_templates;
    std::vector<std::string> eval_templates;
    std::vector<std::string> noise_nouns;       // unrelated-slot fillers
    std::vector<std::string> noise_templates;   // "{n}" slot; vocab coverage for nouns
    double noise_fraction = 0.1;
    std::size_t n_sentences = 5000;
    std::uint64_t seed = 7;

    void validate() const;
};

SynthSpec default_synth_spec();

struct SynthCorpus {
    std::vector<std::string> train;
    std::vector<Triplet> triplets;           // held out, built from eval templates
    std::vector<PerturbationPair> pairs;     // group-swapped stereotype-consistent sentences
};

SynthCorpus generate_corpus(const SynthSpec& spec);

// JSON-Lines loaders; parse and schema errors carry the line number.
std::vector<Triplet> load_triplets(const std::string& path);
std::vector<PerturbationPair> load_pairs(const std::string& path);

void save_triplets(const std::string& path, const std::vector<Triplet>& triplets);
void save_pairs(const std::string& path, const std::vector<PerturbationPair>& pairs);

// One sentence per line, UTF-8.
std::vector<std::string> load_lines(const std::string& path);
void save_lines(const std::string& path, const std::vector<std::string>& lines);

// key=value spec file; list values are comma-separated, axes use
// name:group_a:group_b:stereo1,..:anti1,.. and repeatable keys append.
SynthSpec load_synth_spec(const std::string& path);
void save_synth_spec(const std::string& path, const SynthSpec& spec);

}  // namespace fairlm
