#pragma once
// Ranking metrics. With a single binary-relevance truth the NDCG ratio
// reduces to 1/log2(rank+1); the general DCG/IDCG form is kept as the oracle
// the reduced form is checked against.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cove {

double dcg_at_k(std::span<const double> relevance_by_rank, int32_t k);

// DCG / IDCG over explicit relevance scores (IDCG from the descending sort).
double ndcg_general(std::span<const double> relevance_by_rank, int32_t k);

// Single ground-truth item with binary relevance.
double ndcg_at_k(std::span<const int32_t> ranked, int32_t truth, int32_t k);
int hr_at_k(std::span<const int32_t> ranked, int32_t truth, int32_t k);

struct MetricReport {
    std::vector<int32_t> ks;
    std::map<int32_t, double> ng;  // keyed by K
    std::map<int32_t, double> hr;
    int64_t sample_count = 0;
    double samples_per_second = 0.0;  // set by the benchmark only
    std::string mode;

    // Deterministic serialization; wall-clock throughput is included only on
    // request so metric files stay byte-identical across reruns.
    std::string to_json_string(bool with_throughput = false) const;
    std::string to_csv_string() const;
};

}  // namespace cove
