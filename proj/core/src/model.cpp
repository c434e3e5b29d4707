#include "fairlm/model.hpp"

#include <cmath>
#include <random>

#include "fairlm/io.hpp"

namespace fairlm {

namespace {

constexpr real kInitStd = 0.02;
constexpr real kLnEps = 1e-5;
constexpr const char* kMagic = "FAIRLM1";

Tensor randn(std::vector<std::size_t> shape, std::mt19937_64& rng, real stddev) {
    std::normal_distribution<real> dist(0.0, stddev);
    std::vector<real> vals;
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    vals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) vals.push_back(dist(rng));
    return Tensor(std::move(shape), std::move(vals));
}

}  // namespace

void ModelConfig::validate() const {
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (n_heads < 1) throw ConfigError("model: n_heads must be >= 1");
    if (d_model == 0 || d_model % n_heads != 0)
        throw ConfigError("model: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    if (d_ff == 0) throw ConfigError("model: d_ff must be positive");
    if (vocab_size < 4) throw ConfigError("model: vocab_size must cover reserved tokens");
    if (max_seq_len < 2) throw ConfigError("model: max_seq_len must be >= 2");
}

const char* attn_mat_name(AttnMat m) {
    switch (m) {
        case AttnMat::Wq: return "wq";
        case AttnMat::Wk: return "wk";
        case AttnMat::Wv: return "wv";
        case AttnMat::Wo: return "wo";
    }
    return "?";
}

ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "sum") return ScoreMode::Sum;
    if (s == "mean") return ScoreMode::PerTokenMean;
    throw ConfigError("unknown score mode '" + s + "' (expected mean|sum)");
}

TransformerLM::TransformerLM(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t d = cfg_.d_model;
    tok_emb = randn({cfg_.vocab_size, d}, rng, kInitStd);
    pos_emb = randn({cfg_.max_seq_len, d}, rng, kInitStd);
    layers.resize(cfg_.n_layers);
    for (auto& l : layers) {
        l.ln1_gain = Tensor::full({d}, 1.0);
        l.ln1_bias = Tensor::zeros({d});
        l.wq = randn({d, d}, rng, kInitStd);
        l.wk = randn({d, d}, rng, kInitStd);
        l.wv = randn({d, d}, rng, kInitStd);
        l.wo = randn({d, d}, rng, kInitStd);
        l.ln2_gain = Tensor::full({d}, 1.0);
        l.ln2_bias = Tensor::zeros({d});
        l.mlp_in = randn({cfg_.d_ff, d}, rng, kInitStd);
        l.mlp_out = randn({d, cfg_.d_ff}, rng, kInitStd);
    }
    final_gain = Tensor::full({d}, 1.0);
    final_bias = Tensor::zeros({d});
    head = randn({cfg_.vocab_size, d}, rng, kInitStd);
    set_requires_grad(true);
}

Tensor TransformerLM::forward_batch(const std::vector<std::vector<int>>& seqs,
                                    const AttnLinearFn* attn_override) const {
    return linear(hidden_batch(seqs, attn_override), head);
}

Tensor TransformerLM::hidden_batch(const std::vector<std::vector<int>>& seqs,
                                   const AttnLinearFn* attn_override) const {
    if (seqs.empty()) throw InputError("forward: empty batch");
    const std::size_t t = seqs[0].size();
    if (t == 0) throw InputError("forward: empty sequence");
    if (t > cfg_.max_seq_len)
        throw InputError("forward: sequence length " + std::to_string(t) + " exceeds max " +
                         std::to_string(cfg_.max_seq_len));
    std::vector<int> flat;
    std::vector<int> positions;
    flat.reserve(seqs.size() * t);
    positions.reserve(seqs.size() * t);
    for (const auto& s : seqs) {
        if (s.size() != t) throw InputError("forward: batch sequences must share one length");
        for (std::size_t i = 0; i < t; ++i) {
            if (s[i] < 0 || static_cast<std::size_t>(s[i]) >= cfg_.vocab_size)
                throw IndexError("forward: token id " + std::to_string(s[i]) +
                                 " out of vocabulary of " + std::to_string(cfg_.vocab_size));
            flat.push_back(s[i]);
            positions.push_back(static_cast<int>(i));
        }
    }

    const std::size_t b = seqs.size();
    const std::size_t n_heads = cfg_.n_heads;
    const std::size_t dh = cfg_.d_model / n_heads;
    const real att_scale = 1.0 / std::sqrt(static_cast<real>(dh));

    auto project = [&](const Tensor& x, const Tensor& w, std::size_t layer,
                       AttnMat m) -> Tensor {
        if (attn_override) return (*attn_override)(x, w, layer, m);
        return linear(x, w);
    };

    Tensor x = add(embedding_rows(tok_emb, flat), embedding_rows(pos_emb, positions));
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        Tensor h = layer_norm(x, l.ln1_gain, l.ln1_bias, kLnEps);
        Tensor q = project(h, l.wq, li, AttnMat::Wq);
        Tensor k = project(h, l.wk, li, AttnMat::Wk);
        Tensor v = project(h, l.wv, li, AttnMat::Wv);
        std::vector<Tensor> seq_outs;
        seq_outs.reserve(b);
        for (std::size_t s = 0; s < b; ++s) {
            Tensor qs = slice_rows(q, s * t, t);
            Tensor ks = slice_rows(k, s * t, t);
            Tensor vs = slice_rows(v, s * t, t);
            std::vector<Tensor> head_outs;
            head_outs.reserve(n_heads);
            for (std::size_t hh = 0; hh < n_heads; ++hh) {
                Tensor qh = slice_cols(qs, hh * dh, dh);
                Tensor kh = slice_cols(ks, hh * dh, dh);
                Tensor vh = slice_cols(vs, hh * dh, dh);
                Tensor att = causal_softmax(scale(linear(qh, kh), att_scale));
                head_outs.push_back(matmul(att, vh));
            }
            seq_outs.push_back(concat_cols(head_outs));
        }
        Tensor attn = project(b == 1 ? seq_outs[0] : concat_rows(seq_outs), l.wo, li,
                              AttnMat::Wo);
        x = add(x, attn);
        Tensor h2 = layer_norm(x, l.ln2_gain, l.ln2_bias, kLnEps);
        Tensor m = linear(gelu(linear(h2, l.mlp_in)), l.mlp_out);
        x = add(x, m);
    }
    return layer_norm(x, final_gain, final_bias, kLnEps);
}

Tensor TransformerLM::forward(const std::vector<int>& tokens,
                              const AttnLinearFn* attn_override) const {
    return forward_batch({tokens}, attn_override);
}

double TransformerLM::sentence_log_prob(const std::vector<int>& tokens, ScoreMode mode,
                                        const AttnLinearFn* attn_override) const {
    if (tokens.size() < 2)
        throw InputError("sentence_log_prob: need at least 2 tokens, got " +
                         std::to_string(tokens.size()));
    NoGradGuard ng;
    Tensor logits = forward(tokens, attn_override);
    const std::size_t t = tokens.size();
    const std::size_t v = cfg_.vocab_size;
    const auto& lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 1; i < t; ++i) {
        const real* row = lv.data() + (i - 1) * v;
        real mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        real z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        total += row[static_cast<std::size_t>(tokens[i])] - (mx + std::log(z));
    }
    if (mode == ScoreMode::PerTokenMean) total /= static_cast<double>(t - 1);
    return total;
}

ParamCount TransformerLM::param_count() const {
    ParamCount pc;
    const std::size_t d = cfg_.d_model;
    pc.embeddings = cfg_.vocab_size * d + cfg_.max_seq_len * d;
    pc.attention = cfg_.n_layers * 4 * d * d;
    pc.mlp = cfg_.n_layers * 2 * d * cfg_.d_ff;
    pc.norms = cfg_.n_layers * 4 * d + 2 * d;
    pc.head = cfg_.vocab_size * d;
    return pc;
}

Tensor& TransformerLM::attn_weight(std::size_t layer, AttnMat m) {
    if (layer >= layers.size()) throw IndexError("attn_weight: layer out of range");
    auto& l = layers[layer];
    switch (m) {
        case AttnMat::Wq: return l.wq;
        case AttnMat::Wk: return l.wk;
        case AttnMat::Wv: return l.wv;
        case AttnMat::Wo: return l.wo;
    }
    throw IndexError("attn_weight: bad matrix");
}

const Tensor& TransformerLM::attn_weight(std::size_t layer, AttnMat m) const {
    return const_cast<TransformerLM*>(this)->attn_weight(layer, m);
}

std::vector<std::pair<std::string, Tensor>> TransformerLM::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        out.emplace_back(p + "ln1_gain", l.ln1_gain);
        out.emplace_back(p + "ln1_bias", l.ln1_bias);
        out.emplace_back(p + "wq", l.wq);
        out.emplace_back(p + "wk", l.wk);
        out.emplace_back(p + "wv", l.wv);
        out.emplace_back(p + "wo", l.wo);
        out.emplace_back(p + "ln2_gain", l.ln2_gain);
        out.emplace_back(p + "ln2_bias", l.ln2_bias);
        out.emplace_back(p + "mlp_in", l.mlp_in);
        out.emplace_back(p + "mlp_out", l.mlp_out);
    }
    out.emplace_back("final_gain", final_gain);
    out.emplace_back("final_bias", final_bias);
    out.emplace_back("head", head);
    return out;
}

std::vector<Tensor> TransformerLM::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

void TransformerLM::set_requires_grad(bool v) {
    for (auto& t : parameters()) t.set_requires_grad(v);
}

void TransformerLM::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

void TransformerLM::save(const std::string& path) const {
    io::Container c;
    c.magic = kMagic;
    c.meta["n_layers"] = std::to_string(cfg_.n_layers);
    c.meta["d_model"] = std::to_string(cfg_.d_model);
    c.meta["n_heads"] = std::to_string(cfg_.n_heads);
    c.meta["d_ff"] = std::to_string(cfg_.d_ff);
    c.meta["vocab_size"] = std::to_string(cfg_.vocab_size);
    c.meta["max_seq_len"] = std::to_string(cfg_.max_seq_len);
    c.meta["seed"] = std::to_string(cfg_.seed);
    c.arrays = named_parameters();
    io::write_container(path, c);
}

TransformerLM TransformerLM::load(const std::string& path) {
    io::Container c = io::read_container(path, kMagic);
    ModelConfig cfg;
    cfg.n_layers = std::stoul(c.meta.at("n_layers"));
    cfg.d_model = std::stoul(c.meta.at("d_model"));
    cfg.n_heads = std::stoul(c.meta.at("n_heads"));
    cfg.d_ff = std::stoul(c.meta.at("d_ff"));
    cfg.vocab_size = std::stoul(c.meta.at("vocab_size"));
    cfg.max_seq_len = std::stoul(c.meta.at("max_seq_len"));
    cfg.seed = std::stoull(c.meta.at("seed"));
    TransformerLM m(cfg);
    auto want = m.named_parameters();
    if (want.size() != c.arrays.size())
        throw ParseError("checkpoint " + path + ": expected " + std::to_string(want.size()) +
                         " arrays, found " + std::to_string(c.arrays.size()));
    for (std::size_t i = 0; i < want.size(); ++i) {
        auto& [name, dst] = want[i];
        auto& [got_name, src] = c.arrays[i];
        if (got_name != name)
            throw ParseError("checkpoint " + path + ": array '" + got_name + "' where '" +
                             name + "' expected");
        if (src.shape() != dst.shape())
            throw ParseError("checkpoint " + path + ": shape mismatch for '" + name + "'");
        dst.values() = src.values();
    }
    return m;
}

}  // namespace fairlm
