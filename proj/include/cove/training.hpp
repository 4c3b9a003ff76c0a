#pragma once
// Next-token cross-entropy training. Two modes: full (every weight trains)
// and lora (adapters + item table + untied head slab only). Freezing is
// enforced at the optimizer, so frozen tensors stay bit-identical.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cove/catalog.hpp"
#include "cove/datasets.hpp"
#include "cove/metrics.hpp"
#include "cove/model.hpp"
#include "cove/prompt.hpp"

namespace cove {

enum class TrainMode { full, lora };

struct TrainConfig {
    double learning_rate = 1e-4;
    int32_t batch_size = 32;
    int32_t max_epochs = 10;
    int64_t max_steps = 0;  // 0 = epoch-bounded only
    TrainMode mode = TrainMode::full;
    int32_t lora_rank = 8;
    double lora_alpha = 16.0;
    bool freeze_item_table = false;
    bool include_titles = true;
    LossScope loss_scope = LossScope::all;
    uint64_t seed = 42;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // global norm; <= 0 disables
    std::string init_checkpoint;  // lora mode: start from this backbone
    int32_t log_every = 20;

    void validate() const;
};

bool is_trainable(ParamGroup group, const TrainConfig& config);

// Mean cross-entropy (softmax over the full expanded vocabulary) at every
// position i >= 1 with mask[i] set; logits row i-1 scores token i. Throws
// when the mask selects nothing.
double next_token_loss(const Matrix<float>& logits, std::span<const TokenId> tokens,
                       std::span<const uint8_t> mask);
double next_token_loss(const Matrix<double>& logits, std::span<const TokenId> tokens,
                       std::span<const uint8_t> mask);

// Loss plus dlogits (scaled by grad_weight / masked-count) for the backward
// pass; dlogits must be pre-zeroed with one row per token.
template <typename T>
T masked_loss_and_dlogits(const Matrix<T>& logits, std::span<const TokenId> tokens,
                          std::span<const uint8_t> mask, T grad_weight, Matrix<T>& dlogits);

struct TrainState {
    TransformerWeights<float> weights;
    LoraSet<float> lora;
    ModelGrads<float> grads;
    ModelGrads<float> adam_m, adam_v;
    TrainConfig config;
    int64_t step = 0;
};

TrainState make_train_state(TransformerWeights<float> weights, LoraSet<float> lora,
                            TrainConfig config);

// One optimizer update over the batch; returns the mean sample loss.
// Aborts (throws) on a non-finite loss.
double train_step(TrainState& state, std::span<const EncodedSample* const> batch);

struct LossPoint {
    int64_t step = 0;
    double train_loss = 0.0;
    double val_loss = -1.0;  // < 0 when not measured at this row
};

struct Checkpoint {
    TransformerWeights<float> weights;
    LoraSet<float> lora;
    ModelGrads<float> adam_m, adam_v;
    int64_t step = 0;
    int32_t epoch = 0;  // completed epochs
    double best_val_loss = 0.0;
    std::string fingerprint;
    TrainMode mode = TrainMode::full;
    bool include_titles = true;
    LossScope loss_scope = LossScope::all;
    uint64_t seed = 0;
    std::string instruction;  // prompt preamble the model was trained with
    BaseTokenizer tokenizer;
    std::vector<LossPoint> curve;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct TrainInputs {
    std::vector<EncodedSample> train;
    std::vector<EncodedSample> validation;  // may be empty
    ModelConfig model;
    TrainConfig config;
    std::filesystem::path out_dir;  // empty = keep everything in memory
    const BaseTokenizer* tokenizer = nullptr;
    std::string fingerprint;
    std::string instruction;
    const Checkpoint* resume = nullptr;  // continue from an epoch boundary
};

struct TrainResult {
    TransformerWeights<float> weights;  // best by validation loss
    LoraSet<float> lora;
    std::vector<LossPoint> curve;
    double best_val_loss = 0.0;
    int32_t best_epoch = 0;
    int64_t steps_run = 0;
};

TrainResult train(const TrainInputs& inputs);

// ---- pipeline helpers ----

// Corpus = every catalog title + the instruction text.
BaseTokenizer build_tokenizer_for(const ItemCatalog& catalog, const std::string& instruction,
                                  int freq_floor = 1);

std::vector<EncodedSample> encode_samples(const ExpandedVocabulary& vocab,
                                          const BaseTokenizer& tok,
                                          const std::vector<PromptSample>& samples,
                                          LossScope scope,
                                          std::optional<bool> include_titles_override = {});

double mean_loss(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                 std::span<const EncodedSample> samples);

// BOTH = titles + trainable table, E = no titles, I = frozen table.
enum class AblationVariant { both, no_titles, frozen_table };
const char* ablation_name(AblationVariant variant);

struct AblationOutcome {
    MetricReport report;
    TrainResult result;
};

AblationOutcome run_ablation(const ItemCatalog& catalog, const DatasetSplit& split,
                             ModelConfig model, TrainConfig config, AblationVariant variant,
                             std::span<const int32_t> ks,
                             const std::filesystem::path& out_dir = {});

}  // namespace cove
