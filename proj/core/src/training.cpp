#include "fairlm/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>

#include "fairlm/io.hpp"

namespace fairlm {

namespace {

using BatchForwardFn =
    std::function<Tensor(const std::vector<std::vector<int>>&)>;  // [B*t, V] logits

double global_grad_norm(const std::vector<Tensor>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.requires_grad() || !p.has_grad()) continue;
        for (real g : p.node().grad) sq += g * g;
    }
    return std::sqrt(sq);
}

void scale_grads(std::vector<Tensor>& params, double factor) {
    for (auto& p : params) {
        if (!p.requires_grad() || !p.has_grad()) continue;
        for (real& g : p.node().grad) g *= factor;
    }
}

// One loss implementation shared by pretraining and debias fine-tuning.
std::vector<double> train_loop(const BatchForwardFn& fwd, std::vector<Tensor> trainable,
                               const Vocab& vocab, const std::vector<std::string>& sentences,
                               const TrainConfig& cfg) {
    cfg.validate();
    if (sentences.empty()) throw InputError("training: empty sentence list");

    std::vector<std::vector<int>> encoded;
    encoded.reserve(sentences.size());
    for (const auto& s : sentences) encoded.push_back(vocab.encode(s));

    // Batches hold sequences of one shared length.
    std::map<std::size_t, std::vector<std::size_t>> by_len;
    for (std::size_t i = 0; i < encoded.size(); ++i) by_len[encoded[i].size()].push_back(i);

    AdamOptimizer opt(trainable, cfg);
    std::vector<double> epoch_losses;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(cfg.seed + epoch);
        std::vector<std::vector<std::size_t>> batches;
        for (auto& [len, idxs] : by_len) {
            std::shuffle(idxs.begin(), idxs.end(), rng);
            for (std::size_t off = 0; off < idxs.size(); off += cfg.batch_size) {
                const std::size_t end = std::min(off + cfg.batch_size, idxs.size());
                batches.emplace_back(idxs.begin() + off, idxs.begin() + end);
            }
        }
        std::shuffle(batches.begin(), batches.end(), rng);

        double nll = 0.0;
        std::size_t scored = 0;
        for (const auto& batch : batches) {
            std::vector<std::vector<int>> seqs;
            std::vector<int> targets;
            seqs.reserve(batch.size());
            for (std::size_t idx : batch) {
                const auto& ids = encoded[idx];
                seqs.push_back(ids);
                for (std::size_t i = 1; i < ids.size(); ++i) targets.push_back(ids[i]);
                targets.push_back(kIgnoreTarget);
            }
            Tensor loss = cross_entropy(fwd(seqs), targets);
            backward(loss);
            if (cfg.grad_clip > 0.0) {
                const double norm = global_grad_norm(trainable);
                if (norm > cfg.grad_clip) scale_grads(trainable, cfg.grad_clip / norm);
            }
            opt.step();
            opt.zero_grad();
            const std::size_t n_scored = targets.size() - batch.size();
            nll += loss.item() * static_cast<double>(n_scored);
            scored += n_scored;
        }
        epoch_losses.push_back(nll / static_cast<double>(scored));
    }
    return epoch_losses;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
    if (grad_clip < 0.0) throw ConfigError("training: grad_clip must be >= 0 (0 disables clipping)");
}

TrainConfig default_pretrain_config() {
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 32;
    c.learning_rate = 3e-4;
    c.grad_clip = 1.0;
    return c;
}

TrainConfig default_debias_config() {
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 32;
    c.learning_rate = 1e-4;
    c.grad_clip = 1.0;
    return c;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        slots_[i].m.assign(params_[i].size(), 0.0);
        slots_[i].v.assign(params_[i].size(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.requires_grad() || !p.has_grad()) continue;
        auto& node = p.node();
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        for (std::size_t j = 0; j < node.value.size(); ++j) {
            const real g = node.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const real mhat = m[j] / bc1;
            const real vhat = v[j] / bc2;
            node.value[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<double> pretrain(TransformerLM& model, const Vocab& vocab,
                             const std::vector<std::string>& corpus, const TrainConfig& cfg) {
    if (corpus.empty()) throw InputError("pretrain: empty corpus");
    model.set_requires_grad(true);
    model.zero_grad();
    return train_loop(
        [&model](const std::vector<std::vector<int>>& seqs) { return model.forward_batch(seqs); },
        model.parameters(), vocab, corpus, cfg);
}

std::vector<double> debias_finetune(AdaptedModel& adapted, const Vocab& vocab,
                                    const std::vector<std::string>& perturbed_sentences,
                                    const TrainConfig& cfg) {
    if (adapted.adapters().empty())
        throw ContractError("debias_finetune: model has no injected adapters");
    if (perturbed_sentences.empty())
        throw InputError("debias_finetune: empty perturbed sentence list");
    adapted.zero_grad();
    return train_loop(
        [&adapted](const std::vector<std::vector<int>>& seqs) {
            return adapted.forward_batch(seqs);
        },
        adapted.trainable_parameters(), vocab, perturbed_sentences, cfg);
}

std::string train_log_csv(const std::vector<double>& epoch_losses, const std::string& split) {
    std::string out = "epoch,split,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f\n", i + 1, split.c_str(), epoch_losses[i]);
        out += buf;
    }
    return out;
}

std::string frozen_param_hash(const TransformerLM& model) {
    std::string bytes;
    for (const auto& [name, t] : model.named_parameters()) {
        if (t.requires_grad()) continue;
        bytes += name;
        bytes.append(reinterpret_cast<const char*>(t.values().data()),
                     t.values().size() * sizeof(real));
    }
    return io::sha256_hex(bytes);
}

ProbeTask make_probe_task(const SynthSpec& spec, std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed) {
    spec.validate();
    if (spec.noise_templates.size() < 2)
        throw ConfigError("probe task: need at least two noise templates");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> noun_pick(0, spec.noise_nouns.size() - 1);

    // the task depends only on non-demographic content words: the label says
    // which of two templates carries the noun, no group or attribute words appear
    auto draw = [&](int label) {
        const std::string& tmpl = spec.noise_templates[label == 1 ? 0 : 1];
        std::string s = tmpl;
        s.replace(s.find("{n}"), 3, spec.noise_nouns[noun_pick(rng)]);
        return ProbeExample{s, label};
    };

    ProbeTask task;
    for (std::size_t i = 0; i < n_train; ++i) task.train.push_back(draw(static_cast<int>(i % 2)));
    for (std::size_t i = 0; i < n_test; ++i) task.test.push_back(draw(static_cast<int>(i % 2)));
    return task;
}

ProbeTask load_probe_task(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    ProbeTask task;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("text") || !j.contains("label") || !j.contains("split"))
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": need fields text, label, split");
        ProbeExample ex{j.at("text").get<std::string>(), j.at("label").get<int>()};
        const std::string split = j.at("split").get<std::string>();
        if (split == "train") task.train.push_back(std::move(ex));
        else if (split == "test") task.test.push_back(std::move(ex));
        else throw InputError(path + ":" + std::to_string(lineno) + ": split must be train|test");
    }
    return task;
}

void save_probe_task(const std::string& path, const ProbeTask& task) {
    std::string out;
    for (const auto& ex : task.train)
        out += nlohmann::json{{"text", ex.text}, {"label", ex.label}, {"split", "train"}}.dump() +
               "\n";
    for (const auto& ex : task.test)
        out += nlohmann::json{{"text", ex.text}, {"label", ex.label}, {"split", "test"}}.dump() +
               "\n";
    io::atomic_write(path, out);
}

double downstream_probe(const TransformerLM& model, const Vocab& vocab, const ProbeTask& task,
                        std::uint64_t seed) {
    if (task.train.empty() || task.test.empty())
        throw InputError("downstream_probe: train and test splits must be non-empty");
    bool has0 = false, has1 = false;
    for (const auto& ex : task.train) (ex.label == 0 ? has0 : has1) = true;
    if (!has0 || !has1)
        throw InputError("downstream_probe: training split contains a single class");

    NoGradGuard ng;
    const std::size_t d = model.config().d_model;
    auto featurize = [&](const ProbeExample& ex) {
        const std::vector<int> ids = vocab.encode(ex.text);
        Tensor h = model.hidden_batch({ids});
        std::vector<double> f(d, 0.0);
        const std::size_t t = ids.size();
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) f[j] += h.values()[i * d + j];
        for (double& v : f) v /= static_cast<double>(t);
        return f;
    };

    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    for (const auto& ex : task.train) {
        xtr.push_back(featurize(ex));
        ytr.push_back(ex.label);
    }
    for (const auto& ex : task.test) {
        xte.push_back(featurize(ex));
        yte.push_back(ex.label);
    }

    // standardize features from train statistics so the fixed-step logistic
    // fit is insensitive to the scale of the residual stream
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (const auto& f : xtr)
        for (std::size_t j = 0; j < d; ++j) mu[j] += f[j];
    for (double& v : mu) v /= static_cast<double>(xtr.size());
    for (const auto& f : xtr)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (f[j] - mu[j]) * (f[j] - mu[j]);
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(xtr.size())) + 1e-8;
    auto standardize = [&](std::vector<std::vector<double>>& xs) {
        for (auto& f : xs)
            for (std::size_t j = 0; j < d; ++j) f[j] = (f[j] - mu[j]) / sd[j];
    };
    standardize(xtr);
    standardize(xte);

    // Full-batch logistic regression; zero init keeps the fit deterministic,
    // the seed is reserved for future stochastic variants.
    (void)seed;
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    const double lr = 0.5;
    const std::size_t iters = 300;
    const std::size_t n = xtr.size();
    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * xtr[i][j];
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double err = p - static_cast<double>(ytr[i]);
            for (std::size_t j = 0; j < d; ++j) gw[j] += err * xtr[i][j];
            gb += err;
        }
        for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(n);
        b -= lr * gb / static_cast<double>(n);
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < xte.size(); ++i) {
        double z = b;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * xte[i][j];
        const int pred = z > 0.0 ? 1 : 0;
        if (pred == yte[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xte.size());
}

}  // namespace fairlm
