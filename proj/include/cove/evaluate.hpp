#pragma once
// Held-out evaluation over the trailing item logits of one forward pass,
// the single-pass vs. multi-token-generation throughput benchmark, and the
// ID-to-title memorization probe.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cove/catalog.hpp"
#include "cove/metrics.hpp"
#include "cove/model.hpp"
#include "cove/prompt.hpp"

namespace cove {

struct EvalSample {
    std::vector<TokenId> prompt;  // ends where the target item token would begin
    int32_t truth = -1;
};

std::vector<EvalSample> encode_eval_set(const ExpandedVocabulary& vocab,
                                        const BaseTokenizer& tok,
                                        const std::vector<PromptSample>& samples);

// One forward pass per sample; items ranked by the last-position item logits.
MetricReport evaluate(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                      std::span<const EvalSample> samples, std::span<const int32_t> ks);

// Metrics for a fixed ranking (popularity baseline) or a per-sample ranking
// function (Markov oracle); shares the aggregation with evaluate().
MetricReport score_fixed_ranking(const std::vector<int32_t>& ranked,
                                 std::span<const EvalSample> samples,
                                 std::span<const int32_t> ks, std::string mode);

enum class BenchMode { logits, generative };

struct BenchResult {
    std::string mode;
    double samples_per_second = 0.0;
    uint64_t forward_passes = 0;  // over timed samples
    double mean_passes_per_sample = 0.0;
    double mean_title_tokens = 0.0;  // generative span length; 1 for logits mode
    std::vector<double> per_sample_seconds;

    std::string latency_csv() const;
};

// logits mode: exactly one forward pass per sample, ranking from the trailing
// item logits. generative mode: greedily decodes the target's full title
// token span (finetune-and-retrieval stand-in), one forward per token.
// Requires >= 100 samples beyond warmup.
BenchResult throughput_bench(const TransformerWeights<float>& weights,
                             const LoraSet<float>* lora, std::span<const EvalSample> samples,
                             BenchMode mode, std::span<const int32_t> title_token_lengths,
                             int warmup = 5);

struct ProbeResult {
    double fraction = 0.0;
    int32_t items_probed = 0;
    std::string transcript;
};

// Feeds a prompt ending at an item token and greedily decodes the length of
// the item's title; counts exact token-span matches. Only defined for models
// trained with titles in the prompt.
ProbeResult id_title_probe(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                           const BaseTokenizer& tok, const ExpandedVocabulary& vocab,
                           const ItemCatalog& catalog, const std::string& instruction,
                           int32_t n_items, bool trained_with_titles, uint64_t seed);

}  // namespace cove
