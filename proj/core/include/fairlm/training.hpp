#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairlm/datasets.hpp"
#include "fairlm/lora.hpp"
#include "fairlm/model.hpp"
#include "fairlm/tokenizer.hpp"

namespace fairlm {

struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // global max-norm; 0 disables clipping
    std::uint64_t seed = 0;

    void validate() const;
};

TrainConfig default_pretrain_config();  // 3 epochs, lr 3e-4, batch 32
TrainConfig default_debias_config();    // 1 epoch, lr 1e-4, batch 32

// Adam with bias correction; parameters with requires-grad off are skipped.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Tensor> params, const TrainConfig& cfg);

    void step();
    void zero_grad();

  private:
    struct Slot {
        std::vector<real> m, v;
    };
    std::vector<Tensor> params_;
    std::vector<Slot> slots_;
    TrainConfig cfg_;
    std::size_t t_ = 0;
};

// Causal-LM training on `model` (all parameters). Returns the per-epoch
// token-weighted mean loss. Deterministic given (model seed, cfg seed).
std::vector<double> pretrain(TransformerLM& model, const Vocab& vocab,
                             const std::vector<std::string>& corpus, const TrainConfig& cfg);

// Same objective, but gradients flow only into the adapters; base weights are
// frozen. Training data is the perturbed sentences only.
std::vector<double> debias_finetune(AdaptedModel& adapted, const Vocab& vocab,
                                    const std::vector<std::string>& perturbed_sentences,
                                    const TrainConfig& cfg);

// "epoch,split,loss" CSV block for a training log.
std::string train_log_csv(const std::vector<double>& epoch_losses, const std::string& split);

// SHA-256 over the serialized values of every frozen (requires-grad off)
// parameter, in fixed traversal order.
std::string frozen_param_hash(const TransformerLM& model);

struct ProbeExample {
    std::string text;
    int label = 0;  // binary
};

struct ProbeTask {
    std::vector<ProbeExample> train;
    std::vector<ProbeExample> test;
};

// Binary task whose label depends only on non-demographic content words: it
// says which of two noise templates carries the noun. Group and attribute
// words never appear, so the task is independent of the demographic axes.
ProbeTask make_probe_task(const SynthSpec& spec, std::size_t n_train, std::size_t n_test,
                          std::uint64_t seed);

ProbeTask load_probe_task(const std::string& path);  // JSONL {"text","label","split"}
void save_probe_task(const std::string& path, const ProbeTask& task);

// Logistic probe on mean-pooled final-layer states (model frozen); returns
// test accuracy in [0,1]. Deterministic given seed.
double downstream_probe(const TransformerLM& model, const Vocab& vocab, const ProbeTask& task,
                        std::uint64_t seed = 0);

}  // namespace fairlm
