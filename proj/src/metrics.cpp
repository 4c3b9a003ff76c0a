#include "cove/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cove {

double dcg_at_k(std::span<const double> relevance_by_rank, int32_t k) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k),
                                              relevance_by_rank.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i)
        dcg += relevance_by_rank[i] / std::log2(static_cast<double>(i) + 2.0);
    return dcg;
}

double ndcg_general(std::span<const double> relevance_by_rank, int32_t k) {
    std::vector<double> ideal(relevance_by_rank.begin(), relevance_by_rank.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double idcg = dcg_at_k(ideal, k);
    if (idcg == 0.0) return 0.0;
    return dcg_at_k(relevance_by_rank, k) / idcg;
}

double ndcg_at_k(std::span<const int32_t> ranked, int32_t truth, int32_t k) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    for (std::size_t i = 0; i < cutoff; ++i)
        if (ranked[i] == truth) return 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return 0.0;
}

int hr_at_k(std::span<const int32_t> ranked, int32_t truth, int32_t k) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    for (std::size_t i = 0; i < cutoff; ++i)
        if (ranked[i] == truth) return 1;
    return 0;
}

std::string MetricReport::to_json_string(bool with_throughput) const {
    nlohmann::json j;
    j["mode"] = mode;
    j["sample_count"] = sample_count;
    nlohmann::json metrics = nlohmann::json::object();
    for (const int32_t k : ks) {
        metrics["ng@" + std::to_string(k)] = ng.at(k);
        metrics["hr@" + std::to_string(k)] = hr.at(k);
    }
    j["metrics"] = std::move(metrics);
    if (with_throughput) j["samples_per_second"] = samples_per_second;
    return j.dump(2) + "\n";
}

std::string MetricReport::to_csv_string() const {
    std::ostringstream out;
    out << "metric,k,value\n";
    out.precision(12);
    for (const int32_t k : ks) out << "ng," << k << ',' << ng.at(k) << '\n';
    for (const int32_t k : ks) out << "hr," << k << ',' << hr.at(k) << '\n';
    return out.str();
}

}  // namespace cove
