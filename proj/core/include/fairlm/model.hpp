#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fairlm/tensor.hpp"
#include "fairlm/tokenizer.hpp"

namespace fairlm {

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t d_ff = 512;
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 16;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class AttnMat { Wq = 0, Wk = 1, Wv = 2, Wo = 3 };
const char* attn_mat_name(AttnMat m);

// Override point for the four attention projections; used by the adapter
// machinery to reroute x*W^T through a low-rank delta.
using AttnLinearFn =
    std::function<Tensor(const Tensor& x, const Tensor& w, std::size_t layer, AttnMat m)>;

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;  // [d_model, d_model], no biases
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_in;   // [d_ff, d_model]
    Tensor mlp_out;  // [d_model, d_ff]
};

struct ParamCount {
    std::size_t embeddings = 0;
    std::size_t attention = 0;
    std::size_t mlp = 0;
    std::size_t norms = 0;
    std::size_t head = 0;
    std::size_t total() const { return embeddings + attention + mlp + norms + head; }
};

enum class ScoreMode { Sum, PerTokenMean };
ScoreMode score_mode_from_string(const std::string& s);

// Decoder-only causal transformer: pre-norm residual blocks, GELU MLP,
// learned positional embeddings, untied LM head.
class TransformerLM {
  public:
    explicit TransformerLM(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    // All sequences must share one length t <= max_seq_len; returns [B*t, V].
    Tensor forward_batch(const std::vector<std::vector<int>>& seqs,
                         const AttnLinearFn* attn_override = nullptr) const;
    Tensor forward(const std::vector<int>& tokens,
                   const AttnLinearFn* attn_override = nullptr) const;  // [t, V]

    // Final-layer-norm output before the LM head; [B*t, d_model].
    Tensor hidden_batch(const std::vector<std::vector<int>>& seqs,
                        const AttnLinearFn* attn_override = nullptr) const;

    // Sum (or per-token mean) of log p(tokens[i] | tokens[<i]), i = 1..t-1.
    double sentence_log_prob(const std::vector<int>& tokens, ScoreMode mode,
                             const AttnLinearFn* attn_override = nullptr) const;

    ParamCount param_count() const;

    Tensor& attn_weight(std::size_t layer, AttnMat m);
    const Tensor& attn_weight(std::size_t layer, AttnMat m) const;

    // Fixed traversal order; names are stable and used by the checkpoint format.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool v);
    void zero_grad();

    void save(const std::string& path) const;  // magic "FAIRLM1"
    static TransformerLM load(const std::string& path);

    Tensor tok_emb;  // [V, d_model]
    Tensor pos_emb;  // [max_seq_len, d_model]
    std::vector<LayerParams> layers;
    Tensor final_gain, final_bias;
    Tensor head;  // [V, d_model]

  private:
    TransformerLM() = default;
    ModelConfig cfg_;
};

}  // namespace fairlm
