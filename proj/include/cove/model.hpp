#pragma once
// Desk-scale causal decoder: pre-norm blocks (attention + GELU feed-forward),
// learned positional embeddings, a composite embedding layer (dense base
// table + hash-compressed item table), and an output head over
// base_vocab + item_count logits. Optional LoRA adapters wrap the attention
// projections.
//
// float is the training/inference precision; double instantiations exist for
// the finite-difference gradient harness.

#include <cstdint>
#include <optional>
#include <type_traits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cove/hash_embedding.hpp"
#include "cove/mat.hpp"
#include "cove/rng.hpp"
#include "cove/tokenizer.hpp"

namespace cove {

struct ModelConfig {
    int32_t layers = 2;
    int32_t heads = 4;
    int32_t dim = 64;
    int32_t ff_dim = 256;
    int32_t max_seq_len = 256;
    int32_t base_vocab = 0;  // V_base, from the tokenizer
    int32_t item_count = 0;  // |I|
    double rate = 2.0;       // item-table compression
    int32_t k = 2;           // hash functions per item
    bool tied_item_head = true;

    int32_t logit_width() const { return base_vocab + item_count; }
    int32_t head_dim() const { return dim / heads; }
    void validate() const;
};

// Low-rank delta on one weight matrix: W x + (alpha/rank) * B (A x).
// B starts at zero, so a fresh adapter leaves the output unchanged.
template <typename T>
struct LoraAdapter {
    std::string target;  // tensor path of the wrapped matrix, e.g. "layer0.wq"
    int32_t rank = 8;
    T alpha = T(16);
    Matrix<T> a;  // rank x in
    Matrix<T> b;  // out x rank, zero-initialized

    T scaling() const { return alpha / static_cast<T>(rank); }
};

template <typename T>
struct LoraSet {
    std::vector<LoraAdapter<T>> adapters;

    const LoraAdapter<T>* find(const std::string& target) const;
    bool empty() const { return adapters.empty(); }
};

// One adapter per attention projection (wq, wk, wv, wo) per layer.
template <typename T>
LoraSet<T> make_attention_adapters(const ModelConfig& cfg, int32_t rank, T alpha,
                                   rng::Stream& init);

template <typename T>
struct LayerWeights {
    Matrix<T> ln1_g, ln1_b;
    Matrix<T> wq, wk, wv, wo;  // dim x dim, row = output unit
    Matrix<T> ln2_g, ln2_b;
    Matrix<T> ff1;  // ff_dim x dim
    Matrix<T> ff2;  // dim x ff_dim
};

template <typename T>
struct TransformerWeights {
    ModelConfig config;
    Matrix<T> tok_embed;  // base_vocab x dim
    Matrix<T> pos_embed;  // max_seq_len x dim
    CompressedItemTable<T> item_table;
    std::vector<LayerWeights<T>> layers;
    Matrix<T> ln_f_g, ln_f_b;
    Matrix<T> head_base;  // base_vocab x dim
    Matrix<T> head_item;  // item_count x dim, only when !tied_item_head
};

// Substreams "init" (weights) and "hash" (item-table hash functions) of the
// root seed; a fixed draw order makes initialization reproducible.
template <typename T>
TransformerWeights<T> init_weights(const ModelConfig& cfg, uint64_t root_seed);

// ---- spec surface ----

// Token embeddings only (no positions): base rows or hash-averaged item rows.
template <typename T>
Matrix<T> embed_tokens(const TransformerWeights<T>& w, std::span<const TokenId> tokens);

// y = W x + (alpha/rank) * B (A x)
template <typename T>
std::vector<T> apply_lora(const Matrix<T>& w, const LoraAdapter<T>& ad, std::span<const T> x);

enum class LogitsAt { all, last };

// Causal forward pass. Returns one logits row per position (LogitsAt::all)
// or a single row for the final position (LogitsAt::last).
template <typename T>
Matrix<T> forward(const TransformerWeights<T>& w,
                  std::type_identity_t<const LoraSet<T>*> lora, std::span<const TokenId> tokens,
                  LogitsAt at = LogitsAt::all);

template <typename T>
std::vector<T> item_logits(std::span<const T> logits, int32_t item_count);

// Descending score, ties broken by ascending item index; k is clamped to the
// item count.
template <typename T>
std::vector<std::pair<int32_t, T>> rank_items(std::span<const T> item_scores, int32_t k);

template <typename T>
std::vector<std::pair<int32_t, T>> recommend_top_k(const TransformerWeights<T>& w,
                                                   std::type_identity_t<const LoraSet<T>*> lora,
                                                   std::span<const TokenId> prompt, int32_t k);

// ---- training surface (forward with activation cache + manual backward) ----

template <typename T>
struct LayerCache {
    Matrix<T> a_in, xhat1, xn1;
    std::vector<T> inv1;
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> probs;  // per head, n x n, zero above the diagonal
    Matrix<T> attn_concat;
    Matrix<T> zq, zk, zv, zo;  // scaled LoRA intermediates (n x rank), when adapted
    Matrix<T> b_in, xhat2, xn2;
    std::vector<T> inv2;
    Matrix<T> f1, g;  // pre-activation and GELU output
};

template <typename T>
struct ForwardCache {
    std::vector<TokenId> tokens;
    Matrix<T> x0;
    std::vector<LayerCache<T>> layers;
    Matrix<T> x_final, xhatf, xf;
    std::vector<T> invf;
};

template <typename T>
struct ModelGrads {
    Matrix<T> tok_embed, pos_embed;
    Matrix<T> item_shared;
    std::vector<LayerWeights<T>> layers;
    Matrix<T> ln_f_g, ln_f_b;
    Matrix<T> head_base, head_item;
    struct LoraGrad {
        Matrix<T> a, b;
    };
    std::vector<LoraGrad> lora;  // index-aligned with LoraSet::adapters

    void zero();
};

template <typename T>
ModelGrads<T> make_grads(const TransformerWeights<T>& w,
                         std::type_identity_t<const LoraSet<T>*> lora);

template <typename T>
Matrix<T> forward_cached(const TransformerWeights<T>& w,
                         std::type_identity_t<const LoraSet<T>*> lora,
                         std::span<const TokenId> tokens, ForwardCache<T>& cache);

// dlogits is n x logit_width (rows for unmasked positions may be zero);
// gradients accumulate into `grads`.
template <typename T>
void backward(const TransformerWeights<T>& w, std::type_identity_t<const LoraSet<T>*> lora,
              const ForwardCache<T>& cache, const Matrix<T>& dlogits, ModelGrads<T>& grads);

// ---- tensor enumeration (optimizer, checkpoints) ----

enum class ParamGroup {
    base_embed,
    pos_embed,
    item_shared,
    attention,
    feed_forward,
    norm,
    head_base,
    head_item,
    lora_a,
    lora_b,
};

template <typename T>
struct TensorRef {
    std::string path;
    ParamGroup group;
    Matrix<T>* tensor;
};

// Weight and gradient enumerations yield the same paths in the same order.
template <typename T>
std::vector<TensorRef<T>> tensor_refs(TransformerWeights<T>& w,
                                      std::type_identity_t<LoraSet<T>*> lora);
template <typename T>
std::vector<TensorRef<T>> tensor_refs(ModelGrads<T>& g, const ModelConfig& cfg,
                                      std::type_identity_t<const LoraSet<T>*> lora);

extern template struct TransformerWeights<float>;
extern template struct TransformerWeights<double>;

}  // namespace cove
