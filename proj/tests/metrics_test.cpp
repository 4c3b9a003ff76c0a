#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cove/metrics.hpp"
#include "cove/rng.hpp"

using namespace cove;

namespace {

// test-local reference: rank of truth by linear scan, then the closed forms
double ref_ndcg(const std::vector<int32_t>& ranked, int32_t truth, int32_t k) {
    for (int32_t pos = 0; pos < static_cast<int32_t>(ranked.size()); ++pos) {
        if (ranked[static_cast<std::size_t>(pos)] == truth)
            return pos < k ? 1.0 / std::log2(pos + 2.0) : 0.0;
    }
    return 0.0;
}

int ref_hr(const std::vector<int32_t>& ranked, int32_t truth, int32_t k) {
    for (int32_t pos = 0; pos < std::min<int32_t>(k, static_cast<int32_t>(ranked.size())); ++pos)
        if (ranked[static_cast<std::size_t>(pos)] == truth) return 1;
    return 0;
}

std::vector<int32_t> random_ranking(rng::Stream& s, int32_t n) {
    std::vector<int32_t> r(static_cast<std::size_t>(n));
    std::iota(r.begin(), r.end(), 0);
    s.shuffle(r.begin(), r.end());
    return r;
}

}  // namespace

TEST_CASE("closed-form spot values") {
    std::vector<int32_t> ranked = {4, 9, 7, 1, 0, 3};
    // truth at rank 1
    CHECK(ndcg_at_k(ranked, 4, 5) == 1.0);
    CHECK(hr_at_k(ranked, 4, 5) == 1);
    // truth at rank 3, K=5 -> 1/log2(4) = 0.5, exactly
    CHECK(ndcg_at_k(ranked, 7, 5) == 0.5);
    // truth below the cutoff
    CHECK(ndcg_at_k(ranked, 3, 5) == 0.0);
    CHECK(hr_at_k(ranked, 3, 5) == 0);
    // boundary rank K is inclusive
    CHECK(hr_at_k(ranked, 0, 5) == 1);
    CHECK(ndcg_at_k(ranked, 0, 5) == doctest::Approx(1.0 / std::log2(6.0)));
    CHECK_THROWS(ndcg_at_k(ranked, 4, 0));
}

TEST_CASE("the reduced form equals the general DCG/IDCG ratio") {
    auto s = rng::substream(17, "metrics.general");
    for (int trial = 0; trial < 200; ++trial) {
        const int32_t n = 3 + static_cast<int32_t>(s.below(40));
        const auto ranked = random_ranking(s, n);
        const auto truth = static_cast<int32_t>(s.below(static_cast<uint64_t>(n)));
        const auto k = 1 + static_cast<int32_t>(s.below(static_cast<uint64_t>(n)));
        std::vector<double> rel(static_cast<std::size_t>(n), 0.0);
        for (std::size_t pos = 0; pos < ranked.size(); ++pos)
            if (ranked[pos] == truth) rel[pos] = 1.0;
        CHECK(std::abs(ndcg_at_k(ranked, truth, k) - ndcg_general(rel, k)) <= 1e-12);
    }
}

TEST_CASE("1000 randomized cases match the independent reference exactly") {
    auto s = rng::substream(18, "metrics.random");
    for (int trial = 0; trial < 1000; ++trial) {
        const int32_t n = 2 + static_cast<int32_t>(s.below(60));
        const auto ranked = random_ranking(s, n);
        const auto truth = static_cast<int32_t>(s.below(static_cast<uint64_t>(n)));
        const auto k = 1 + static_cast<int32_t>(s.below(25));
        CHECK(std::abs(ndcg_at_k(ranked, truth, k) - ref_ndcg(ranked, truth, k)) <= 1e-12);
        CHECK(hr_at_k(ranked, truth, k) == ref_hr(ranked, truth, k));
    }
}

TEST_CASE("aggregate HR is the mean of the per-user indicators") {
    // 2 hits among 4 users
    std::vector<std::vector<int32_t>> rankings = {
        {1, 2, 3}, {3, 2, 1}, {2, 3, 1}, {1, 3, 2}};
    std::vector<int32_t> truths = {1, 3, 1, 2};
    double total = 0;
    for (std::size_t u = 0; u < rankings.size(); ++u)
        total += hr_at_k(rankings[u], truths[u], 1);
    CHECK(total / 4.0 == 0.5);
}

TEST_CASE("metrics are bounded and monotone in K") {
    auto s = rng::substream(19, "metrics.monotone");
    for (int trial = 0; trial < 100; ++trial) {
        const int32_t n = 5 + static_cast<int32_t>(s.below(30));
        const auto ranked = random_ranking(s, n);
        const auto truth = static_cast<int32_t>(s.below(static_cast<uint64_t>(n)));
        double prev_ng = 0.0;
        int prev_hr = 0;
        for (int32_t k = 1; k <= n; ++k) {
            const double ng = ndcg_at_k(ranked, truth, k);
            const int hr = hr_at_k(ranked, truth, k);
            CHECK(ng >= 0.0);
            CHECK(ng <= 1.0);
            CHECK((hr == 0 || hr == 1));
            CHECK(ng >= prev_ng);
            CHECK(hr >= prev_hr);
            // single-truth identity: HR@K = 1 <=> NG@K > 0
            CHECK((hr == 1) == (ng > 0.0));
            prev_ng = ng;
            prev_hr = hr;
        }
    }
}

TEST_CASE("permuting items ranked strictly below max(K, rank) changes nothing") {
    auto s = rng::substream(20, "metrics.rankshift");
    for (int trial = 0; trial < 100; ++trial) {
        const int32_t n = 10 + static_cast<int32_t>(s.below(20));
        auto ranked = random_ranking(s, n);
        const auto truth = static_cast<int32_t>(s.below(static_cast<uint64_t>(n)));
        const auto k = 1 + static_cast<int32_t>(s.below(8));
        int32_t rank = 0;
        while (ranked[static_cast<std::size_t>(rank)] != truth) ++rank;
        const auto cut = std::max(k, rank + 1);
        if (cut >= n - 1) continue;

        const double ng0 = ndcg_at_k(ranked, truth, k);
        const int hr0 = hr_at_k(ranked, truth, k);
        auto shuffled = ranked;
        auto tail = rng::substream(static_cast<uint64_t>(trial), "tail");
        tail.shuffle(shuffled.begin() + cut, shuffled.end());
        CHECK(ndcg_at_k(shuffled, truth, k) == ng0);
        CHECK(hr_at_k(shuffled, truth, k) == hr0);
    }
}

TEST_CASE("report serialization is deterministic and excludes throughput by default") {
    MetricReport r;
    r.ks = {5, 10};
    r.ng[5] = 0.25;
    r.ng[10] = 0.5;
    r.hr[5] = 0.375;
    r.hr[10] = 0.625;
    r.sample_count = 8;
    r.samples_per_second = 123.456;  // wall-clock; must not leak into the default dump
    r.mode = "test";
    const auto a = r.to_json_string();
    const auto b = r.to_json_string();
    CHECK(a == b);
    CHECK(a.find("samples_per_second") == std::string::npos);
    CHECK(r.to_json_string(true).find("samples_per_second") != std::string::npos);
    const auto csv = r.to_csv_string();
    CHECK(csv.find("ng,5,0.25") != std::string::npos);
    CHECK(csv.find("hr,10,0.625") != std::string::npos);
}
