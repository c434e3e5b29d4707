#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairlm/model.hpp"

namespace fairlm {

struct LoraConfig {
    std::size_t rank = 1;
    real alpha = 2.0;
    std::vector<AttnMat> targets = {AttnMat::Wq, AttnMat::Wk, AttnMat::Wv, AttnMat::Wo};
    std::uint64_t seed = 0;

    real scale() const { return alpha / static_cast<real>(rank); }
    void validate(const ModelConfig& model_cfg) const;
};

// Low-rank delta on one attention matrix: effective weight W + scale * B * A.
struct LoraAdapter {
    std::size_t layer = 0;
    AttnMat target = AttnMat::Wq;
    Tensor a;  // [r, d_in], trainable, init normal(0, 1/r)
    Tensor b;  // [d_out, r], trainable, init zeros => delta starts at zero
};

// A TransformerLM with frozen base weights and trainable adapters on the
// configured attention matrices. Shares parameter storage with the model it
// was injected into.
class AdaptedModel {
  public:
    AdaptedModel(TransformerLM model, const LoraConfig& cfg);  // inject

    Tensor forward_batch(const std::vector<std::vector<int>>& seqs) const;
    Tensor forward(const std::vector<int>& tokens) const;
    double sentence_log_prob(const std::vector<int>& tokens, ScoreMode mode) const;

    const TransformerLM& base() const { return base_; }
    TransformerLM& base() { return base_; }
    const LoraConfig& config() const { return cfg_; }
    const std::vector<LoraAdapter>& adapters() const { return adapters_; }
    std::vector<LoraAdapter>& adapters() { return adapters_; }

    std::vector<Tensor> trainable_parameters() const;
    std::size_t adapter_param_count() const;

    // (adapter params) / (total params including adapters)
    double trainable_fraction() const;

    // Plain model with W' = W + scale*B*A baked in; deep-copied storage.
    TransformerLM merge() const;

    void save_adapters(const std::string& path) const;  // magic "FAIRLM-LORA1"
    static AdaptedModel load_adapters(TransformerLM model, const std::string& path);

    void zero_grad();

  private:
    AdaptedModel(TransformerLM model, LoraConfig cfg, std::vector<LoraAdapter> adapters);
    AttnLinearFn make_hook() const;

    TransformerLM base_;
    LoraConfig cfg_;
    std::vector<LoraAdapter> adapters_;
};

}  // namespace fairlm
