#pragma once
// Hash-compressed item embeddings: k universal multiply-mod-prime hash
// functions address a shared table of |S| rows, and an item's embedding is
// the mean of its k addressed rows. Gradients flow back through the same
// addressing with multiplicity.

#include <cstdint>
#include <vector>

#include "cove/mat.hpp"
#include "cove/rng.hpp"

namespace cove {

struct HashParams {
    uint64_t a = 1;  // in {1, ..., p}
    uint64_t b = 0;  // in {0, ..., p}
    uint64_t p = 0;  // prime, p > m
    uint64_t m = 0;  // shared-space size |S|

    bool operator==(const HashParams&) const = default;
};

inline constexpr uint64_t kDefaultPrime = 2147483647ull;  // 2^31 - 1

bool is_prime_u64(uint64_t n);

// Uniform a in {1..p}, b in {0..p}; deterministic in the stream state.
HashParams sample_hash(rng::Stream& stream, uint64_t p, uint64_t m);

// ((a*i + b) mod p) mod m, overflow-safe for p < 2^32.
uint32_t hash_code(const HashParams& h, int32_t item_index);

struct CompressionStats {
    double ratio = 0.0;            // |I| / |S|
    std::size_t parameter_count = 0;  // |S| * d
};

template <typename T>
class CompressedItemTable {
public:
    CompressedItemTable() = default;
    // Explicit construction from given hash functions (all with m == |S|).
    CompressedItemTable(int32_t item_count, std::size_t dim, std::size_t shared_rows,
                        std::vector<HashParams> hashes);

    int32_t item_count() const { return item_count_; }
    std::size_t dim() const { return shared_.cols(); }
    std::size_t shared_rows() const { return shared_.rows(); }
    std::size_t k() const { return hashes_.size(); }
    const std::vector<HashParams>& hashes() const { return hashes_; }

    Matrix<T>& shared() { return shared_; }
    const Matrix<T>& shared() const { return shared_; }

    // Hash code of item i under hash j (precomputed at construction).
    uint32_t code(int32_t item_index, std::size_t j) const {
        return codes_[static_cast<std::size_t>(item_index) * hashes_.size() + j];
    }

    // out[0..d) = (1/k) * sum_j shared[h_j(i)]
    void item_embedding(int32_t item_index, T* out) const;
    std::vector<T> item_embedding(int32_t item_index) const;

    // sink[h_j(i)] += (1/k) * upstream for each j (repeats accumulate).
    void accumulate_gradient(int32_t item_index, const T* upstream, Matrix<T>& sink) const;

    CompressionStats stats() const;

private:
    int32_t item_count_ = 0;
    Matrix<T> shared_;
    std::vector<HashParams> hashes_;
    std::vector<uint32_t> codes_;  // item-major, k per item
};

// |S| = ceil(|I| / rate), capped at |I|; rows init uniform in ±1/sqrt(dim);
// k hash functions sampled from the given streams.
template <typename T>
CompressedItemTable<T> build_table(int32_t item_count, std::size_t dim, double rate,
                                   std::size_t k, rng::Stream& hash_stream,
                                   rng::Stream& init_stream, uint64_t prime = kDefaultPrime);

std::size_t shared_rows_for_rate(int32_t item_count, double rate);

extern template class CompressedItemTable<float>;
extern template class CompressedItemTable<double>;
extern template CompressedItemTable<float> build_table<float>(int32_t, std::size_t, double,
                                                              std::size_t, rng::Stream&,
                                                              rng::Stream&, uint64_t);
extern template CompressedItemTable<double> build_table<double>(int32_t, std::size_t, double,
                                                                std::size_t, rng::Stream&,
                                                                rng::Stream&, uint64_t);

}  // namespace cove
