#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fairlm/datasets.hpp"
#include "fairlm/io.hpp"
#include "fairlm/lora.hpp"
#include "fairlm/metrics.hpp"
#include "fairlm/model.hpp"
#include "fairlm/report.hpp"
#include "fairlm/tokenizer.hpp"
#include "fairlm/training.hpp"

#ifndef FAIRLM_VERSION
#define FAIRLM_VERSION "0.0.0"
#endif

namespace {

using nlohmann::json;

std::string fmtg(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Manifest recording everything needed to repeat the run: subcommand, the
// fully resolved configuration, input/output paths, and seeds. wall_clock is
// informational and excluded from reproducibility comparisons.
struct Manifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, std::uint64_t> seeds;

    void write(const std::string& path) const {
        json j;
        j["command"] = command;
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["seeds"] = seeds;
        j["version"] = FAIRLM_VERSION;
        const auto now = std::chrono::system_clock::now();
        j["wall_clock"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              now.time_since_epoch())
                              .count();
        fairlm::io::atomic_write(path, j.dump(2) + "\n");
    }
};

std::map<std::string, std::string> read_kv_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fairlm::InputError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw fairlm::ParseError(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

template <typename T>
void apply_kv(const std::map<std::string, std::string>& kv, const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    std::istringstream ss(it->second);
    ss >> out;
    if (ss.fail())
        throw fairlm::ParseError("config value for '" + key + "' is not a number: " +
                                 it->second);
}

struct TrainArgs {
    fairlm::TrainConfig train;
    fairlm::ModelConfig model;
};

TrainArgs resolve_train_args(const std::string& config_path, const fairlm::TrainConfig& base) {
    TrainArgs a;
    a.train = base;
    if (config_path.empty()) return a;
    const auto kv = read_kv_config(config_path);
    const std::vector<std::string> known = {"epochs",     "batch_size", "learning_rate",
                                            "grad_clip",  "seed",       "n_layers",
                                            "d_model",    "n_heads",    "d_ff",
                                            "max_seq_len"};
    for (const auto& [k, v] : kv)
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw fairlm::InputError("unknown config key: " + k);
    apply_kv(kv, "epochs", a.train.epochs);
    apply_kv(kv, "batch_size", a.train.batch_size);
    apply_kv(kv, "learning_rate", a.train.learning_rate);
    apply_kv(kv, "grad_clip", a.train.grad_clip);
    apply_kv(kv, "seed", a.train.seed);
    apply_kv(kv, "n_layers", a.model.n_layers);
    apply_kv(kv, "d_model", a.model.d_model);
    apply_kv(kv, "n_heads", a.model.n_heads);
    apply_kv(kv, "d_ff", a.model.d_ff);
    apply_kv(kv, "max_seq_len", a.model.max_seq_len);
    return a;
}

std::string default_vocab_path(const std::string& ckpt) { return ckpt + ".vocab"; }

int run_gen_synth(const std::string& spec_path, const std::string& out_dir,
                  std::uint64_t seed, bool seed_set) {
    fairlm::SynthSpec spec =
        spec_path.empty() ? fairlm::default_synth_spec() : fairlm::load_synth_spec(spec_path);
    if (seed_set) spec.seed = seed;
    spec.validate();
    const fairlm::SynthCorpus corpus = fairlm::generate_corpus(spec);

    std::filesystem::create_directories(out_dir);
    fairlm::save_lines(out_dir + "/corpus.txt", corpus.train);
    fairlm::save_triplets(out_dir + "/triplets.jsonl", corpus.triplets);
    fairlm::save_pairs(out_dir + "/pairs.jsonl", corpus.pairs);
    fairlm::save_synth_spec(out_dir + "/spec.cfg", spec);

    Manifest m;
    m.command = "gen-synth";
    m.config["skew"] = fmtg(spec.skew);
    m.config["n_sentences"] = std::to_string(spec.n_sentences);
    m.config["noise_fraction"] = fmtg(spec.noise_fraction);
    m.config["spec"] = spec_path.empty() ? "<builtin-default>" : spec_path;
    if (!spec_path.empty()) m.inputs.push_back(spec_path);
    m.outputs = {out_dir + "/corpus.txt", out_dir + "/triplets.jsonl",
                 out_dir + "/pairs.jsonl", out_dir + "/spec.cfg"};
    m.seeds["spec"] = spec.seed;
    m.write(out_dir + "/manifest.json");

    std::cout << "wrote " << corpus.train.size() << " sentences, " << corpus.triplets.size()
              << " triplets, " << corpus.pairs.size() << " pairs to " << out_dir << "\n";
    return 0;
}

int run_pretrain(const std::string& config_path, const std::string& corpus_path,
                 const std::string& out, std::uint64_t seed, bool seed_set) {
    TrainArgs a = resolve_train_args(config_path, fairlm::default_pretrain_config());
    if (seed_set) a.train.seed = seed;
    a.train.validate();

    const auto corpus = fairlm::load_lines(corpus_path);
    if (corpus.empty()) throw fairlm::InputError("empty corpus: " + corpus_path);
    const fairlm::Vocab vocab = fairlm::Vocab::build(corpus);
    a.model.vocab_size = vocab.size();
    a.model.seed = a.train.seed;
    a.model.validate();

    fairlm::TransformerLM model(a.model);
    const auto losses = fairlm::pretrain(model, vocab, corpus, a.train);

    if (const auto dir = std::filesystem::path(out).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    model.save(out);
    vocab.save(default_vocab_path(out));
    fairlm::io::atomic_write(out + ".train_log.csv",
                             fairlm::train_log_csv(losses, "pretrain"));

    Manifest m;
    m.command = "pretrain";
    m.config["epochs"] = std::to_string(a.train.epochs);
    m.config["batch_size"] = std::to_string(a.train.batch_size);
    m.config["learning_rate"] = fmtg(a.train.learning_rate);
    m.config["grad_clip"] = fmtg(a.train.grad_clip);
    m.config["n_layers"] = std::to_string(a.model.n_layers);
    m.config["d_model"] = std::to_string(a.model.d_model);
    m.config["n_heads"] = std::to_string(a.model.n_heads);
    m.config["d_ff"] = std::to_string(a.model.d_ff);
    m.config["max_seq_len"] = std::to_string(a.model.max_seq_len);
    m.config["vocab_size"] = std::to_string(a.model.vocab_size);
    m.inputs = {corpus_path};
    if (!config_path.empty()) m.inputs.push_back(config_path);
    m.outputs = {out, default_vocab_path(out), out + ".train_log.csv"};
    m.seeds["train"] = a.train.seed;
    m.seeds["model_init"] = a.model.seed;
    m.write(out + ".manifest.json");

    std::cout << "final loss " << fmtg(losses.empty() ? 0.0 : losses.back()) << ", saved "
              << out << "\n";
    return 0;
}

int run_eval_bias(const std::string& ckpt, const std::string& vocab_path,
                  const std::string& triplets_path, const std::string& mode_str,
                  const std::string& out) {
    const fairlm::TransformerLM model = fairlm::TransformerLM::load(ckpt);
    const fairlm::Vocab vocab = fairlm::Vocab::load(
        vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path);
    const auto triplets = fairlm::load_triplets(triplets_path);
    const fairlm::ScoreMode mode = fairlm::score_mode_from_string(mode_str);

    const fairlm::BiasReport report = fairlm::evaluate(model, vocab, triplets, mode);
    fairlm::io::atomic_write(out, report.to_csv());

    Manifest m;
    m.command = "eval-bias";
    m.config["mode"] = mode_str;
    m.inputs = {ckpt, vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path,
                triplets_path};
    m.outputs = {out};
    m.write(out + ".manifest.json");

    std::cout << report.to_csv();
    return 0;
}

int run_perplexity(const std::string& ckpt, const std::string& vocab_path,
                   const std::string& sentences_path, const std::string& out) {
    const fairlm::TransformerLM model = fairlm::TransformerLM::load(ckpt);
    const fairlm::Vocab vocab = fairlm::Vocab::load(
        vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path);
    const auto sentences = fairlm::load_lines(sentences_path);
    const double ppl = fairlm::perplexity(fairlm::make_scorer(model, vocab), sentences);
    std::cout << fmtg(ppl) << "\n";
    if (!out.empty()) {
        fairlm::io::atomic_write(out, fmtg(ppl) + "\n");
        Manifest m;
        m.command = "perplexity";
        m.inputs = {ckpt, vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path,
                    sentences_path};
        m.outputs = {out};
        m.write(out + ".manifest.json");
    }
    return 0;
}

int run_debias(const std::string& ckpt, const std::string& vocab_path,
               const std::string& pairs_path, std::size_t rank, double alpha, bool merge,
               const std::string& out, const std::string& config_path, std::uint64_t seed,
               bool seed_set) {
    TrainArgs a = resolve_train_args(config_path, fairlm::default_debias_config());
    if (seed_set) a.train.seed = seed;
    a.train.validate();

    fairlm::TransformerLM model = fairlm::TransformerLM::load(ckpt);
    const fairlm::Vocab vocab = fairlm::Vocab::load(
        vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path);
    const auto pairs = fairlm::load_pairs(pairs_path);

    std::vector<std::string> perturbed;
    perturbed.reserve(pairs.size());
    for (const auto& p : pairs) perturbed.push_back(p.perturbed);

    fairlm::LoraConfig lcfg;
    lcfg.rank = rank;
    lcfg.alpha = alpha;
    lcfg.seed = a.train.seed;
    lcfg.validate(model.config());

    fairlm::AdaptedModel adapted(std::move(model), lcfg);
    const auto losses = fairlm::debias_finetune(adapted, vocab, perturbed, a.train);

    if (const auto dir = std::filesystem::path(out).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    adapted.save_adapters(out);
    fairlm::io::atomic_write(out + ".train_log.csv",
                             fairlm::train_log_csv(losses, "debias"));

    Manifest m;
    m.command = "debias";
    m.config["lora_rank"] = std::to_string(rank);
    m.config["lora_alpha"] = fmtg(alpha);
    m.config["epochs"] = std::to_string(a.train.epochs);
    m.config["batch_size"] = std::to_string(a.train.batch_size);
    m.config["learning_rate"] = fmtg(a.train.learning_rate);
    m.config["grad_clip"] = fmtg(a.train.grad_clip);
    m.config["merge"] = merge ? "true" : "false";
    m.inputs = {ckpt, vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path, pairs_path};
    if (!config_path.empty()) m.inputs.push_back(config_path);
    m.outputs = {out, out + ".train_log.csv"};
    m.seeds["train"] = a.train.seed;
    m.seeds["adapter_init"] = lcfg.seed;

    if (merge) {
        const std::string merged_path = out + ".merged";
        adapted.merge().save(merged_path);
        m.outputs.push_back(merged_path);
    }
    m.write(out + ".manifest.json");

    std::cout << "trainable fraction " << fmtg(adapted.trainable_fraction()) << ", saved "
              << out << "\n";
    return 0;
}

int run_probe(const std::string& ckpt, const std::string& vocab_path,
              const std::string& task_path, std::uint64_t seed, const std::string& out) {
    const fairlm::TransformerLM model = fairlm::TransformerLM::load(ckpt);
    const fairlm::Vocab vocab = fairlm::Vocab::load(
        vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path);
    const fairlm::ProbeTask task = fairlm::load_probe_task(task_path);
    const double acc = fairlm::downstream_probe(model, vocab, task, seed);
    std::cout << fmtg(acc) << "\n";
    if (!out.empty()) {
        fairlm::io::atomic_write(out, fmtg(acc) + "\n");
        Manifest m;
        m.command = "probe";
        m.inputs = {ckpt, vocab_path.empty() ? default_vocab_path(ckpt) : vocab_path,
                    task_path};
        m.outputs = {out};
        m.seeds["probe"] = seed;
        m.write(out + ".manifest.json");
    }
    return 0;
}

int run_report(const std::vector<std::string>& record_files, bool use_fixtures,
               const std::string& fixture_file, const std::string& out_dir) {
    std::vector<fairlm::ModelRecord> records;
    std::vector<std::string> inputs;
    if (use_fixtures) {
        auto fx = fairlm::load_fixture(fixture_file);
        records.insert(records.end(), fx.begin(), fx.end());
        inputs.push_back(fixture_file);
    }
    for (const auto& f : record_files) {
        auto rs = fairlm::load_records(f);
        records.insert(records.end(), rs.begin(), rs.end());
        inputs.push_back(f);
    }
    if (records.empty())
        throw fairlm::InputError("no records: pass --records and/or --fixtures");

    std::filesystem::create_directories(out_dir);
    std::ostringstream summary;
    std::vector<std::string> outputs;

    const auto checks = fairlm::verify_fixture_arithmetic(records);
    std::size_t failures = 0;
    std::string check_csv = "model,domain,printed_icat,recomputed_icat,ok\n";
    for (const auto& c : checks) {
        if (!c.ok) ++failures;
        check_csv += c.model + "," + c.domain + "," + fmtg(c.printed_icat) + "," +
                     fmtg(c.recomputed_icat) + "," + (c.ok ? "1" : "0") + "\n";
    }
    fairlm::io::atomic_write(out_dir + "/icat_checks.csv", check_csv);
    outputs.push_back(out_dir + "/icat_checks.csv");
    summary << "icat arithmetic: " << (checks.size() - failures) << "/" << checks.size()
            << " rows pass\n";

    bool has_pairs = false;
    for (const auto& r : records)
        if (r.debiased) has_pairs = true;
    if (has_pairs) {
        const fairlm::DeltaStats ds = fairlm::debias_delta_stats(records);
        std::string csv = "domain,n,mean_drop,std_drop\n";
        for (const auto& d : ds.per_domain)
            csv += d.domain + "," + std::to_string(d.n) + "," + fmtg(d.mean) + "," +
                   fmtg(d.stddev) + "\n";
        csv += "pooled," + std::to_string(ds.pooled_n) + "," + fmtg(ds.pooled_mean) + "," +
               fmtg(ds.pooled_std) + "\n";
        csv += "mean_of_means,," + fmtg(ds.mean_of_means) + ",\n";
        fairlm::io::atomic_write(out_dir + "/delta_stats.csv", csv);
        outputs.push_back(out_dir + "/delta_stats.csv");
        summary << "pooled ss drop: " << fmtg(ds.pooled_mean) << " (std "
                << fmtg(ds.pooled_std) << ", n=" << ds.pooled_n << ")\n";
    } else {
        summary << "no (base, debiased) pairs, delta stats skipped\n";
    }

    const fairlm::SummaryResult sr = fairlm::size_bias_summary(records, out_dir);
    outputs.insert(outputs.end(), sr.files.begin(), sr.files.end());
    summary << sr.summary_text;

    fairlm::io::atomic_write(out_dir + "/summary.txt", summary.str());
    outputs.push_back(out_dir + "/summary.txt");

    Manifest m;
    m.command = "report";
    m.config["fixtures"] = use_fixtures ? "true" : "false";
    m.inputs = inputs;
    m.outputs = outputs;
    m.write(out_dir + "/manifest.json");

    std::cout << summary.str();
    if (failures > 0) {
        std::cerr << failures << " icat rows failed verification\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* t = std::getenv("FAIRLM_THREADS")) {
        const int n = std::atoi(t);
#ifdef _OPENMP
        if (n > 0) omp_set_num_threads(n);
#else
        (void)n;
#endif
    }

    CLI::App app{"bias measurement and low-rank debiasing for small causal LMs"};
    app.set_version_flag("--version", FAIRLM_VERSION);
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, corpus_path, out, ckpt, vocab_path;
    std::string triplets_path, mode_str = "mean", sentences_path, pairs_path, task_path;
    std::string fixture_file = "data/fixtures/stereoset_results.jsonl";
    std::vector<std::string> record_files;
    std::uint64_t seed = 0;
    std::size_t rank = 1;
    double alpha = 2.0;
    bool merge = false, use_fixtures = false;

    auto* gen = app.add_subcommand("gen-synth", "generate a planted-bias corpus");
    gen->add_option("--spec", spec_path, "spec file (key=value); omit for built-in default");
    gen->add_option("--out-dir", out_dir)->required();
    auto* gen_seed = gen->add_option("--seed", seed);

    auto* pre = app.add_subcommand("pretrain", "train a causal LM from scratch");
    pre->add_option("--config", config_path, "key=value training/model config");
    pre->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
    pre->add_option("--out", out)->required();
    auto* pre_seed = pre->add_option("--seed", seed);

    auto* ev = app.add_subcommand("eval-bias", "score triplets and write a bias report");
    ev->add_option("--model", ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--vocab", vocab_path, "defaults to <model>.vocab");
    ev->add_option("--triplets", triplets_path)->required()->check(CLI::ExistingFile);
    ev->add_option("--mode", mode_str)->check(CLI::IsMember({"mean", "sum"}));
    ev->add_option("--out", out)->required();

    auto* ppl = app.add_subcommand("perplexity", "corpus perplexity of a checkpoint");
    ppl->add_option("--model", ckpt)->required()->check(CLI::ExistingFile);
    ppl->add_option("--vocab", vocab_path, "defaults to <model>.vocab");
    ppl->add_option("--sentences", sentences_path)->required()->check(CLI::ExistingFile);
    ppl->add_option("--out", out, "also write the value to a file");

    auto* deb = app.add_subcommand("debias", "adapter fine-tuning on perturbed sentences");
    deb->add_option("--model", ckpt)->required()->check(CLI::ExistingFile);
    deb->add_option("--vocab", vocab_path, "defaults to <model>.vocab");
    deb->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
    deb->add_option("--lora-rank", rank);
    deb->add_option("--lora-alpha", alpha);
    deb->add_flag("--merge", merge, "also write <out>.merged with adapters baked in");
    deb->add_option("--out", out)->required();
    deb->add_option("--config", config_path, "key=value training config");
    auto* deb_seed = deb->add_option("--seed", seed);

    auto* prb = app.add_subcommand("probe", "logistic probe accuracy on frozen features");
    prb->add_option("--model", ckpt)->required()->check(CLI::ExistingFile);
    prb->add_option("--vocab", vocab_path, "defaults to <model>.vocab");
    prb->add_option("--task", task_path)->required()->check(CLI::ExistingFile);
    prb->add_option("--seed", seed);
    prb->add_option("--out", out, "also write the accuracy to a file");

    auto* rep = app.add_subcommand("report", "aggregate records, deltas, correlations, plots");
    rep->add_option("--records", record_files)->check(CLI::ExistingFile);
    rep->add_flag("--fixtures", use_fixtures, "include the shipped results fixture");
    rep->add_option("--fixture-file", fixture_file);
    rep->add_option("--out-dir", out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return run_gen_synth(spec_path, out_dir, seed, gen_seed->count() > 0);
        if (pre->parsed())
            return run_pretrain(config_path, corpus_path, out, seed, pre_seed->count() > 0);
        if (ev->parsed()) return run_eval_bias(ckpt, vocab_path, triplets_path, mode_str, out);
        if (ppl->parsed()) return run_perplexity(ckpt, vocab_path, sentences_path, out);
        if (deb->parsed())
            return run_debias(ckpt, vocab_path, pairs_path, rank, alpha, merge, out,
                              config_path, seed, deb_seed->count() > 0);
        if (prb->parsed()) return run_probe(ckpt, vocab_path, task_path, seed, out);
        if (rep->parsed()) return run_report(record_files, use_fixtures, fixture_file, out_dir);
    } catch (const fairlm::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fairlm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fairlm::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
