#include "fairlm/lora.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "fairlm/io.hpp"

namespace fairlm {

namespace {

constexpr const char* kMagic = "FAIRLM-LORA1";

std::string targets_to_string(const std::vector<AttnMat>& targets) {
    std::string out;
    for (const auto& t : targets) {
        if (!out.empty()) out.push_back(',');
        out += attn_mat_name(t);
    }
    return out;
}

std::vector<AttnMat> targets_from_string(const std::string& s) {
    std::vector<AttnMat> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok == "wq") out.push_back(AttnMat::Wq);
        else if (tok == "wk") out.push_back(AttnMat::Wk);
        else if (tok == "wv") out.push_back(AttnMat::Wv);
        else if (tok == "wo") out.push_back(AttnMat::Wo);
        else throw ParseError("adapter file: unknown target '" + tok + "'");
    }
    return out;
}

std::string real_to_string(real v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void LoraConfig::validate(const ModelConfig& model_cfg) const {
    if (rank < 1) throw ConfigError("lora: rank must be >= 1");
    if (rank > model_cfg.d_model)
        throw ConfigError("lora: rank " + std::to_string(rank) + " exceeds d_model " +
                          std::to_string(model_cfg.d_model));
    if (!(alpha > 0.0)) throw ConfigError("lora: alpha must be positive");
    if (targets.empty()) throw ConfigError("lora: empty target set");
}

AdaptedModel::AdaptedModel(TransformerLM model, const LoraConfig& cfg)
    : base_(std::move(model)), cfg_(cfg) {
    cfg_.validate(base_.config());
    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<real> dist(0.0, 1.0 / std::sqrt(static_cast<real>(cfg_.rank)));
    const std::size_t d = base_.config().d_model;
    base_.set_requires_grad(false);
    for (std::size_t li = 0; li < base_.config().n_layers; ++li) {
        for (AttnMat m : cfg_.targets) {
            LoraAdapter ad;
            ad.layer = li;
            ad.target = m;
            std::vector<real> avals(cfg_.rank * d);
            for (auto& v : avals) v = dist(rng);
            ad.a = Tensor({cfg_.rank, d}, std::move(avals));
            ad.b = Tensor::zeros({d, cfg_.rank});
            ad.a.set_requires_grad(true);
            ad.b.set_requires_grad(true);
            adapters_.push_back(std::move(ad));
        }
    }
}

AdaptedModel::AdaptedModel(TransformerLM model, LoraConfig cfg,
                           std::vector<LoraAdapter> adapters)
    : base_(std::move(model)), cfg_(std::move(cfg)), adapters_(std::move(adapters)) {
    base_.set_requires_grad(false);
    for (auto& ad : adapters_) {
        ad.a.set_requires_grad(true);
        ad.b.set_requires_grad(true);
    }
}

AttnLinearFn AdaptedModel::make_hook() const {
    const real s = cfg_.scale();
    return [this, s](const Tensor& x, const Tensor& w, std::size_t layer,
                     AttnMat m) -> Tensor {
        for (const auto& ad : adapters_) {
            if (ad.layer == layer && ad.target == m) {
                // x (W + s B A)^T = x W^T + s (x A^T) B^T
                Tensor delta = linear(linear(x, ad.a), ad.b);
                return add(linear(x, w), scale(delta, s));
            }
        }
        return linear(x, w);
    };
}

Tensor AdaptedModel::forward_batch(const std::vector<std::vector<int>>& seqs) const {
    AttnLinearFn hook = make_hook();
    return base_.forward_batch(seqs, &hook);
}

Tensor AdaptedModel::forward(const std::vector<int>& tokens) const {
    return forward_batch({tokens});
}

double AdaptedModel::sentence_log_prob(const std::vector<int>& tokens, ScoreMode mode) const {
    AttnLinearFn hook = make_hook();
    return base_.sentence_log_prob(tokens, mode, &hook);
}

std::vector<Tensor> AdaptedModel::trainable_parameters() const {
    std::vector<Tensor> out;
    for (const auto& ad : adapters_) {
        out.push_back(ad.a);
        out.push_back(ad.b);
    }
    return out;
}

std::size_t AdaptedModel::adapter_param_count() const {
    std::size_t n = 0;
    for (const auto& ad : adapters_) n += ad.a.size() + ad.b.size();
    return n;
}

double AdaptedModel::trainable_fraction() const {
    const std::size_t num = adapter_param_count();
    const std::size_t den = base_.param_count().total() + num;
    return static_cast<double>(num) / static_cast<double>(den);
}

TransformerLM AdaptedModel::merge() const {
    // Deep copy so the merged model does not alias the adapted one's storage.
    TransformerLM merged(base_.config());
    auto src = base_.named_parameters();
    auto dst = merged.named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.values() = src[i].second.values();
    const real s = cfg_.scale();
    for (const auto& ad : adapters_) {
        Tensor& w = merged.attn_weight(ad.layer, ad.target);
        const std::size_t dout = ad.b.shape()[0], r = ad.b.shape()[1], din = ad.a.shape()[1];
        for (std::size_t i = 0; i < dout; ++i)
            for (std::size_t k = 0; k < r; ++k) {
                const real bik = ad.b.values()[i * r + k];
                if (bik == 0.0) continue;
                for (std::size_t j = 0; j < din; ++j)
                    w.values()[i * din + j] += s * bik * ad.a.values()[k * din + j];
            }
    }
    merged.set_requires_grad(true);
    return merged;
}

void AdaptedModel::save_adapters(const std::string& path) const {
    io::Container c;
    c.magic = kMagic;
    c.meta["rank"] = std::to_string(cfg_.rank);
    c.meta["alpha"] = real_to_string(cfg_.alpha);
    c.meta["targets"] = targets_to_string(cfg_.targets);
    c.meta["seed"] = std::to_string(cfg_.seed);
    c.meta["d_model"] = std::to_string(base_.config().d_model);
    c.meta["n_layers"] = std::to_string(base_.config().n_layers);
    for (const auto& ad : adapters_) {
        const std::string p =
            "layer" + std::to_string(ad.layer) + "." + attn_mat_name(ad.target);
        c.arrays.emplace_back(p + ".a", ad.a);
        c.arrays.emplace_back(p + ".b", ad.b);
    }
    io::write_container(path, c);
}

AdaptedModel AdaptedModel::load_adapters(TransformerLM model, const std::string& path) {
    io::Container c = io::read_container(path, kMagic);
    LoraConfig cfg;
    cfg.rank = std::stoul(c.meta.at("rank"));
    cfg.alpha = std::stod(c.meta.at("alpha"));
    cfg.targets = targets_from_string(c.meta.at("targets"));
    cfg.seed = std::stoull(c.meta.at("seed"));
    const std::size_t d = model.config().d_model;
    if (std::stoul(c.meta.at("d_model")) != d)
        throw ConfigError("adapter file " + path + ": d_model " + c.meta.at("d_model") +
                          " incompatible with model d_model " + std::to_string(d));
    if (std::stoul(c.meta.at("n_layers")) != model.config().n_layers)
        throw ConfigError("adapter file " + path + ": layer count mismatch");
    cfg.validate(model.config());

    std::vector<LoraAdapter> adapters;
    std::size_t idx = 0;
    for (std::size_t li = 0; li < model.config().n_layers; ++li) {
        for (AttnMat m : cfg.targets) {
            const std::string p = "layer" + std::to_string(li) + "." + attn_mat_name(m);
            if (idx + 2 > c.arrays.size() || c.arrays[idx].first != p + ".a" ||
                c.arrays[idx + 1].first != p + ".b")
                throw ParseError("adapter file " + path + ": expected arrays for " + p);
            LoraAdapter ad;
            ad.layer = li;
            ad.target = m;
            ad.a = c.arrays[idx].second;
            ad.b = c.arrays[idx + 1].second;
            if (ad.a.shape() != std::vector<std::size_t>{cfg.rank, d} ||
                ad.b.shape() != std::vector<std::size_t>{d, cfg.rank})
                throw ConfigError("adapter file " + path + ": shape mismatch for " + p);
            adapters.push_back(std::move(ad));
            idx += 2;
        }
    }
    if (idx != c.arrays.size())
        throw ParseError("adapter file " + path + ": trailing arrays");
    return AdaptedModel(std::move(model), std::move(cfg), std::move(adapters));
}

void AdaptedModel::zero_grad() {
    for (auto& t : trainable_parameters()) t.zero_grad();
}

}  // namespace fairlm
