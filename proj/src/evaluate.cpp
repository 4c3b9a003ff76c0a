#include "cove/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cove/rng.hpp"

namespace cove {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void accumulate_rank_metrics(const std::vector<int32_t>& ranked, int32_t truth,
                             std::span<const int32_t> ks, MetricReport& report) {
    for (const int32_t k : ks) {
        report.ng[k] += ndcg_at_k(ranked, truth, k);
        report.hr[k] += hr_at_k(ranked, truth, k);
    }
    ++report.sample_count;
}

void finalize_means(MetricReport& report) {
    for (auto& [k, v] : report.ng) v /= static_cast<double>(report.sample_count);
    for (auto& [k, v] : report.hr) v /= static_cast<double>(report.sample_count);
}

MetricReport empty_report(std::span<const int32_t> ks, std::string mode) {
    MetricReport report;
    report.ks.assign(ks.begin(), ks.end());
    for (const int32_t k : ks) {
        report.ng[k] = 0.0;
        report.hr[k] = 0.0;
    }
    report.mode = std::move(mode);
    return report;
}

std::vector<int32_t> ranked_from_scores(const std::vector<float>& scores) {
    std::vector<int32_t> ranked;
    auto pairs = rank_items(std::span<const float>(scores),
                            static_cast<int32_t>(scores.size()));
    ranked.reserve(pairs.size());
    for (const auto& [idx, score] : pairs) ranked.push_back(idx);
    return ranked;
}

}  // namespace

std::vector<EvalSample> encode_eval_set(const ExpandedVocabulary& vocab,
                                        const BaseTokenizer& tok,
                                        const std::vector<PromptSample>& samples) {
    std::vector<EvalSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        EvalSample e;
        e.prompt = encode_prompt(vocab, tok, s);
        e.truth = s.target;
        out.push_back(std::move(e));
    }
    return out;
}

MetricReport evaluate(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                      std::span<const EvalSample> samples, std::span<const int32_t> ks) {
    if (samples.empty()) throw std::invalid_argument("empty evaluation set");
    MetricReport report = empty_report(ks, "model");
    for (const auto& sample : samples) {
        const Matrix<float> logits = forward(weights, lora, sample.prompt, LogitsAt::last);
        const auto scores = item_logits(std::span<const float>(logits.row(0), logits.cols()),
                                        weights.config.item_count);
        accumulate_rank_metrics(ranked_from_scores(scores), sample.truth, ks, report);
    }
    finalize_means(report);
    return report;
}

MetricReport score_fixed_ranking(const std::vector<int32_t>& ranked,
                                 std::span<const EvalSample> samples,
                                 std::span<const int32_t> ks, std::string mode) {
    if (samples.empty()) throw std::invalid_argument("empty evaluation set");
    MetricReport report = empty_report(ks, std::move(mode));
    for (const auto& sample : samples) accumulate_rank_metrics(ranked, sample.truth, ks, report);
    finalize_means(report);
    return report;
}

std::string BenchResult::latency_csv() const {
    std::ostringstream out;
    out << "sample,seconds\n";
    out.precision(9);
    for (std::size_t i = 0; i < per_sample_seconds.size(); ++i)
        out << i << ',' << std::fixed << per_sample_seconds[i] << '\n';
    return out.str();
}

BenchResult throughput_bench(const TransformerWeights<float>& weights,
                             const LoraSet<float>* lora, std::span<const EvalSample> samples,
                             BenchMode mode, std::span<const int32_t> title_token_lengths,
                             int warmup) {
    if (samples.size() < static_cast<std::size_t>(warmup) + 100)
        throw std::invalid_argument("benchmark needs at least 100 samples after warmup");
    BenchResult result;
    result.mode = mode == BenchMode::logits ? "logits" : "generative";

    auto run_sample = [&](const EvalSample& sample, uint64_t& passes) -> std::vector<int32_t> {
        if (mode == BenchMode::logits) {
            const Matrix<float> logits = forward(weights, lora, sample.prompt, LogitsAt::last);
            ++passes;
            const auto scores = item_logits(
                std::span<const float>(logits.row(0), logits.cols()), weights.config.item_count);
            return ranked_from_scores(scores);
        }
        // generative: greedy-decode the title span of the ground-truth item,
        // one full (uncached) forward per generated token
        const int32_t span = title_token_lengths[static_cast<std::size_t>(sample.truth)];
        std::vector<TokenId> seq = sample.prompt;
        for (int32_t stepi = 0; stepi < span; ++stepi) {
            const Matrix<float> logits = forward(weights, lora, seq, LogitsAt::last);
            ++passes;
            const float* row = logits.row(0);
            TokenId best = 0;
            for (int32_t t = 1; t < weights.config.logit_width(); ++t)
                if (row[t] > row[best]) best = t;
            seq.push_back(best);
            if (static_cast<int32_t>(seq.size()) >= weights.config.max_seq_len) break;
        }
        return {};
    };

    uint64_t warm_passes = 0;
    for (int i = 0; i < warmup; ++i)
        run_sample(samples[static_cast<std::size_t>(i)], warm_passes);

    double total_title_tokens = 0.0;
    const auto timed = samples.subspan(static_cast<std::size_t>(warmup));
    result.per_sample_seconds.reserve(timed.size());
    const auto bench_start = Clock::now();
    for (const auto& sample : timed) {
        const auto t0 = Clock::now();
        run_sample(sample, result.forward_passes);
        result.per_sample_seconds.push_back(seconds_since(t0));
        total_title_tokens +=
            mode == BenchMode::logits
                ? 1.0
                : static_cast<double>(title_token_lengths[static_cast<std::size_t>(sample.truth)]);
    }
    const double elapsed = seconds_since(bench_start);
    result.samples_per_second = static_cast<double>(timed.size()) / elapsed;
    result.mean_passes_per_sample =
        static_cast<double>(result.forward_passes) / static_cast<double>(timed.size());
    result.mean_title_tokens = total_title_tokens / static_cast<double>(timed.size());
    return result;
}

ProbeResult id_title_probe(const TransformerWeights<float>& weights, const LoraSet<float>* lora,
                           const BaseTokenizer& tok, const ExpandedVocabulary& vocab,
                           const ItemCatalog& catalog, const std::string& instruction,
                           int32_t n_items, bool trained_with_titles, uint64_t seed) {
    if (!trained_with_titles)
        throw std::invalid_argument(
            "id_title_probe is undefined for a model trained without titles");
    if (n_items < 1) throw std::invalid_argument("n_items must be >= 1");
    n_items = std::min(n_items, catalog.count());

    std::vector<int32_t> pool(static_cast<std::size_t>(catalog.count()));
    std::iota(pool.begin(), pool.end(), 0);
    auto stream = rng::substream(seed, "probe");
    stream.shuffle(pool.begin(), pool.end());
    pool.resize(static_cast<std::size_t>(n_items));
    std::sort(pool.begin(), pool.end());

    const auto instruction_tokens = tok.encode(instruction);
    ProbeResult result;
    result.items_probed = n_items;
    std::ostringstream transcript;
    int32_t matches = 0;
    for (const int32_t item : pool) {
        const auto expected = tok.encode(catalog.item(item).title);
        std::vector<TokenId> seq;
        seq.push_back(BaseTokenizer::kBos);
        seq.insert(seq.end(), instruction_tokens.begin(), instruction_tokens.end());
        seq.push_back(vocab.item_token_id(item));

        std::vector<TokenId> decoded;
        for (std::size_t stepi = 0; stepi < expected.size(); ++stepi) {
            if (static_cast<int32_t>(seq.size()) >= weights.config.max_seq_len) break;
            const Matrix<float> logits = forward(weights, lora, seq, LogitsAt::last);
            const float* row = logits.row(0);
            TokenId best = 0;
            for (int32_t t = 1; t < weights.config.logit_width(); ++t)
                if (row[t] > row[best]) best = t;
            decoded.push_back(best);
            seq.push_back(best);
        }
        const bool match = decoded == expected;
        matches += match ? 1 : 0;

        std::string decoded_text;
        for (std::size_t i = 0; i < decoded.size(); ++i) {
            if (i > 0) decoded_text += ' ';
            decoded_text += vocab.is_item_token(decoded[i])
                                ? "<|" + std::to_string(*vocab.token_to_item(decoded[i])) + "|>"
                                : tok.decode_token(decoded[i]);
        }
        transcript << "item " << item << " [" << catalog.item(item).external_id << "] expected: '"
                   << catalog.item(item).title << "' decoded: '" << decoded_text << "' "
                   << (match ? "MATCH" : "MISS") << '\n';
    }
    result.fraction = static_cast<double>(matches) / static_cast<double>(n_items);
    result.transcript = transcript.str();
    return result;
}

}  // namespace cove
