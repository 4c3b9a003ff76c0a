#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "cove/datasets.hpp"
#include "cove/evaluate.hpp"
#include "cove/rng.hpp"
#include "cove/training.hpp"

using namespace cove;

namespace {

struct Fixture {
    ItemCatalog catalog;
    BaseTokenizer tok;
    ExpandedVocabulary vocab;
    ModelConfig model;
    TransformerWeights<float> weights;
    std::vector<EvalSample> samples;
    std::vector<int32_t> title_lengths;
};

Fixture make_fixture(int n_items = 12, int n_samples = 120, int title_words = 2,
                     uint64_t seed = 5) {
    Fixture f;
    const char* words[] = {"oak", "pine", "sage", "mint", "rose", "lily",
                           "teal", "gold", "ruby", "opal", "jade", "onyx"};
    for (int i = 0; i < n_items; ++i) {
        std::string title;
        for (int wi = 0; wi < title_words; ++wi) {
            if (wi > 0) title += ' ';
            title += words[(i + wi * 5) % 12];
        }
        f.catalog.add("it-" + std::to_string(i), title);
    }
    f.tok = build_tokenizer_for(f.catalog, "suggest something new");
    f.vocab = expand_vocabulary(f.tok, f.catalog);
    f.model.layers = 1;
    f.model.heads = 2;
    f.model.dim = 16;
    f.model.ff_dim = 32;
    f.model.max_seq_len = 128;
    f.model.base_vocab = f.vocab.base_size;
    f.model.item_count = f.vocab.item_count;
    f.weights = init_weights<float>(f.model, seed);

    auto s = rng::substream(seed, "eval.samples");
    std::vector<PromptSample> prompts;
    for (int i = 0; i < n_samples; ++i) {
        PromptSample p;
        p.instruction = "suggest something new";
        const auto a = static_cast<int32_t>(s.below(static_cast<uint64_t>(n_items)));
        const auto b = static_cast<int32_t>(s.below(static_cast<uint64_t>(n_items)));
        p.history = {{a, f.catalog.item(a).title}, {b, f.catalog.item(b).title}};
        p.target = static_cast<int32_t>(s.below(static_cast<uint64_t>(n_items)));
        prompts.push_back(p);
    }
    f.samples = encode_eval_set(f.vocab, f.tok, prompts);
    for (int i = 0; i < n_items; ++i)
        f.title_lengths.push_back(
            static_cast<int32_t>(f.tok.encode(f.catalog.item(i).title).size()));
    return f;
}

}  // namespace

TEST_CASE("an oracle ranking scores 1.0 everywhere; empty sets are rejected") {
    auto f = make_fixture();
    const std::vector<int32_t> ks = {5, 10};
    // fixed ranking that always places the truth first: per-sample rankings
    // via score_fixed_ranking need a common list, so check with per-sample
    // truths equal to a constant item
    for (auto& s : f.samples) s.truth = 7;
    std::vector<int32_t> ranked(static_cast<std::size_t>(f.model.item_count));
    std::iota(ranked.begin(), ranked.end(), 0);
    std::swap(ranked[0], ranked[7]);
    const auto report = score_fixed_ranking(ranked, f.samples, ks, "oracle");
    for (const int32_t k : ks) {
        CHECK(report.ng.at(k) == 1.0);
        CHECK(report.hr.at(k) == 1.0);
    }
    CHECK(report.sample_count == static_cast<int64_t>(f.samples.size()));
    CHECK_THROWS(score_fixed_ranking(ranked, {}, ks, "oracle"));
    CHECK_THROWS(evaluate(f.weights, nullptr, {}, ks));
}

TEST_CASE("a uniform-random ranker hits HR@10 ~ 10/|I|") {
    // analytic expectation: P(truth in a random 10 of 100) = 0.10; with 2000
    // trials the 4-sigma band is ~0.027
    const int32_t n_items = 100;
    const int trials = 2000;
    auto s = rng::substream(23, "eval.random");
    double hits = 0;
    std::vector<int32_t> ranked(n_items);
    std::iota(ranked.begin(), ranked.end(), 0);
    for (int t = 0; t < trials; ++t) {
        s.shuffle(ranked.begin(), ranked.end());
        const auto truth = static_cast<int32_t>(s.below(n_items));
        hits += hr_at_k(ranked, truth, 10);
    }
    const double hr = hits / trials;
    CHECK(hr == doctest::Approx(0.10).epsilon(0.27));
    CHECK(std::abs(hr - 0.10) < 0.027);
}

TEST_CASE("evaluate ranks by the trailing item logits of one forward pass") {
    auto f = make_fixture(10, 6);
    const std::vector<int32_t> ks = {1, 5, 10};
    const auto report = evaluate(f.weights, nullptr, f.samples, ks);
    CHECK(report.sample_count == 6);
    for (const int32_t k : ks) {
        CHECK(report.ng.at(k) >= 0.0);
        CHECK(report.ng.at(k) <= 1.0);
        CHECK(report.hr.at(k) >= 0.0);
        CHECK(report.hr.at(k) <= 1.0);
    }
    // spot-check one sample against the model surface
    const auto rec = recommend_top_k(f.weights, nullptr, f.samples[0].prompt, 10);
    std::vector<int32_t> ranked;
    for (const auto& [idx, score] : rec) ranked.push_back(idx);
    const double expect_ng = ndcg_at_k(ranked, f.samples[0].truth, 10);
    // recompute evaluate() on just that sample
    const auto solo = evaluate(f.weights, nullptr,
                               std::span<const EvalSample>(&f.samples[0], 1), ks);
    CHECK(solo.ng.at(10) == doctest::Approx(expect_ng).epsilon(1e-12));
}

TEST_CASE("logits mode spends exactly one forward pass per sample") {
    auto f = make_fixture(12, 110);
    const auto r = throughput_bench(f.weights, nullptr, f.samples, BenchMode::logits,
                                    f.title_lengths, 5);
    CHECK(r.forward_passes == 105);  // one per timed sample
    CHECK(r.mean_passes_per_sample == 1.0);
    CHECK(r.samples_per_second > 0.0);
    CHECK(r.per_sample_seconds.size() == 105);
    CHECK(r.mode == "logits");
}

TEST_CASE("generative mode spends one pass per title token") {
    auto f = make_fixture(12, 110, 3);
    const auto r = throughput_bench(f.weights, nullptr, f.samples, BenchMode::generative,
                                    f.title_lengths, 5);
    // every title is exactly 3 tokens here
    CHECK(r.mean_title_tokens == doctest::Approx(3.0));
    CHECK(r.mean_passes_per_sample == doctest::Approx(3.0));
    CHECK(r.forward_passes == 105u * 3u);
    CHECK(r.mode == "generative");

    // pass-count contract needs >= 100 timed samples
    auto small = make_fixture(12, 50, 3);
    CHECK_THROWS(throughput_bench(small.weights, nullptr, small.samples, BenchMode::generative,
                                  small.title_lengths, 5));
}

TEST_CASE("logits mode is measurably faster than generating the title span") {
    auto f = make_fixture(12, 110, 8);
    const auto lg = throughput_bench(f.weights, nullptr, f.samples, BenchMode::logits,
                                     f.title_lengths, 5);
    const auto gen = throughput_bench(f.weights, nullptr, f.samples, BenchMode::generative,
                                      f.title_lengths, 5);
    CHECK(gen.mean_passes_per_sample >= 8.0);
    CHECK(lg.samples_per_second > gen.samples_per_second);
}

TEST_CASE("the probe rejects title-free checkpoints and scores near zero untrained") {
    auto f = make_fixture(10, 6);
    CHECK_THROWS(id_title_probe(f.weights, nullptr, f.tok, f.vocab, f.catalog,
                                "suggest something new", 10, /*trained_with_titles=*/false, 3));

    const auto r = id_title_probe(f.weights, nullptr, f.tok, f.vocab, f.catalog,
                                  "suggest something new", 10, true, 3);
    CHECK(r.items_probed == 10);
    CHECK(r.fraction <= 0.2);  // untrained model decodes noise
    CHECK(r.transcript.find("item") != std::string::npos);
    CHECK(r.transcript.find("expected") != std::string::npos);
}

TEST_CASE("an overfit toy model memorizes every ID-title pair") {
    // 10-item corpus; train hard on samples whose histories carry titles.
    // rate 1 and a collision-checked seed: items with identical hash
    // signatures share an embedding and cannot be told apart by any model.
    auto f = make_fixture(10, 0);
    f.model.rate = 1.0;
    TrainInputs inputs;
    inputs.model = f.model;
    inputs.config.learning_rate = 4e-3;
    inputs.config.batch_size = 30;
    inputs.config.max_epochs = 40;
    inputs.config.seed = 3;
    {
        const auto probe_weights = init_weights<float>(f.model, inputs.config.seed);
        std::set<std::pair<uint32_t, uint32_t>> signatures;
        for (int32_t i = 0; i < 10; ++i)
            REQUIRE(signatures
                        .insert({probe_weights.item_table.code(i, 0),
                                 probe_weights.item_table.code(i, 1)})
                        .second);
    }
    std::vector<PromptSample> prompts;
    auto s = rng::substream(90, "probe.train");
    for (int rep = 0; rep < 30; ++rep) {
        for (int i = 0; i < 10; ++i) {
            PromptSample p;
            p.instruction = "suggest something new";
            const auto other = static_cast<int32_t>(s.below(10));
            p.history = {{i, f.catalog.item(i).title}, {other, f.catalog.item(other).title}};
            p.target = static_cast<int32_t>(s.below(10));
            prompts.push_back(p);
        }
    }
    inputs.train = encode_samples(f.vocab, f.tok, prompts, LossScope::all);
    const auto result = train(inputs);

    const auto r = id_title_probe(result.weights, nullptr, f.tok, f.vocab, f.catalog,
                                  "suggest something new", 10, true, 91);
    CHECK(r.fraction == 1.0);
}
