#include "cove/hash_embedding.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cove/kernels.hpp"

namespace cove {

bool is_prime_u64(uint64_t n) {
    if (n < 2) return false;
    for (uint64_t f : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull}) {
        if (n == f) return true;
        if (n % f == 0) return false;
    }
    // deterministic Miller-Rabin for 64-bit inputs
    const uint64_t d0 = n - 1;
    uint64_t d = d0;
    int r = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++r;
    }
    auto mulmod = [](uint64_t x, uint64_t y, uint64_t mod) -> uint64_t {
        return static_cast<uint64_t>((static_cast<__uint128_t>(x) * y) % mod);
    };
    auto powmod = [&](uint64_t base, uint64_t exp, uint64_t mod) -> uint64_t {
        uint64_t acc = 1;
        base %= mod;
        while (exp > 0) {
            if (exp & 1) acc = mulmod(acc, base, mod);
            base = mulmod(base, base, mod);
            exp >>= 1;
        }
        return acc;
    };
    for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        if (a % n == 0) continue;
        uint64_t x = powmod(a, d, n);
        if (x == 1 || x == d0) continue;
        bool witness = true;
        for (int i = 1; i < r; ++i) {
            x = mulmod(x, x, n);
            if (x == d0) {
                witness = false;
                break;
            }
        }
        if (witness) return false;
    }
    return true;
}

HashParams sample_hash(rng::Stream& stream, uint64_t p, uint64_t m) {
    if (m < 1) throw std::invalid_argument("shared-space size must be >= 1");
    if (m >= p) throw std::invalid_argument("prime p must exceed shared-space size m");
    if (!is_prime_u64(p)) throw std::invalid_argument("p is not prime: " + std::to_string(p));
    HashParams h;
    h.p = p;
    h.m = m;
    h.a = 1 + stream.below(p);      // {1, ..., p}
    h.b = stream.below(p + 1);      // {0, ..., p}
    return h;
}

uint32_t hash_code(const HashParams& h, int32_t item_index) {
    const auto i = static_cast<uint64_t>(item_index);
    // a <= p < 2^32 and i < 2^31, so a*i + b stays within 64 bits (and within
    // 128 bits for any p via __uint128_t, keeping the formula exact).
    const auto ai = static_cast<__uint128_t>(h.a) * i + h.b;
    return static_cast<uint32_t>(static_cast<uint64_t>(ai % h.p) % h.m);
}

template <typename T>
CompressedItemTable<T>::CompressedItemTable(int32_t item_count, std::size_t dim,
                                            std::size_t shared_rows,
                                            std::vector<HashParams> hashes)
    : item_count_(item_count), shared_(shared_rows, dim), hashes_(std::move(hashes)) {
    if (item_count < 0) throw std::invalid_argument("negative item count");
    if (hashes_.empty()) throw std::invalid_argument("need at least one hash function");
    if (shared_rows < 1) throw std::invalid_argument("shared table needs at least one row");
    if (shared_rows > static_cast<std::size_t>(item_count) && item_count > 0)
        throw std::invalid_argument("shared table larger than the item space");
    for (const auto& h : hashes_)
        if (h.m != shared_rows)
            throw std::invalid_argument("hash range does not match shared table size");
    codes_.resize(static_cast<std::size_t>(item_count) * hashes_.size());
    for (int32_t i = 0; i < item_count; ++i)
        for (std::size_t j = 0; j < hashes_.size(); ++j)
            codes_[static_cast<std::size_t>(i) * hashes_.size() + j] = hash_code(hashes_[j], i);
}

template <typename T>
void CompressedItemTable<T>::item_embedding(int32_t item_index, T* out) const {
    if (item_index < 0 || item_index >= item_count_)
        throw std::out_of_range("item_index out of range: " + std::to_string(item_index));
    const std::size_t d = dim();
    std::memset(out, 0, d * sizeof(T));
    for (std::size_t j = 0; j < hashes_.size(); ++j)
        kern::axpy(T(1), shared_.row(code(item_index, j)), out, d);
    kern::scal(T(1) / static_cast<T>(hashes_.size()), out, d);
}

template <typename T>
std::vector<T> CompressedItemTable<T>::item_embedding(int32_t item_index) const {
    std::vector<T> out(dim());
    item_embedding(item_index, out.data());
    return out;
}

template <typename T>
void CompressedItemTable<T>::accumulate_gradient(int32_t item_index, const T* upstream,
                                                 Matrix<T>& sink) const {
    if (item_index < 0 || item_index >= item_count_)
        throw std::out_of_range("item_index out of range: " + std::to_string(item_index));
    if (sink.rows() != shared_.rows() || sink.cols() != shared_.cols())
        throw std::invalid_argument("gradient sink shape mismatch");
    const T w = T(1) / static_cast<T>(hashes_.size());
    for (std::size_t j = 0; j < hashes_.size(); ++j)
        kern::axpy(w, upstream, sink.row(code(item_index, j)), dim());
}

template <typename T>
CompressionStats CompressedItemTable<T>::stats() const {
    CompressionStats s;
    s.ratio = static_cast<double>(item_count_) / static_cast<double>(shared_.rows());
    s.parameter_count = shared_.rows() * shared_.cols();
    return s;
}

std::size_t shared_rows_for_rate(int32_t item_count, double rate) {
    if (rate < 1.0) throw std::invalid_argument("compression rate must be >= 1");
    const auto rows = static_cast<std::size_t>(
        std::ceil(static_cast<double>(item_count) / rate));
    return std::min<std::size_t>(std::max<std::size_t>(rows, 1),
                                 static_cast<std::size_t>(item_count));
}

template <typename T>
CompressedItemTable<T> build_table(int32_t item_count, std::size_t dim, double rate,
                                   std::size_t k, rng::Stream& hash_stream,
                                   rng::Stream& init_stream, uint64_t prime) {
    if (item_count < 1) throw std::invalid_argument("item_count must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const std::size_t rows = shared_rows_for_rate(item_count, rate);
    std::vector<HashParams> hashes;
    hashes.reserve(k);
    for (std::size_t j = 0; j < k; ++j) hashes.push_back(sample_hash(hash_stream, prime, rows));
    CompressedItemTable<T> table(item_count, dim, rows, std::move(hashes));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    auto& shared = table.shared();
    for (std::size_t i = 0; i < shared.size(); ++i)
        shared.data()[i] = static_cast<T>(init_stream.uniform(-scale, scale));
    return table;
}

template class CompressedItemTable<float>;
template class CompressedItemTable<double>;
template CompressedItemTable<float> build_table<float>(int32_t, std::size_t, double, std::size_t,
                                                       rng::Stream&, rng::Stream&, uint64_t);
template CompressedItemTable<double> build_table<double>(int32_t, std::size_t, double, std::size_t,
                                                         rng::Stream&, rng::Stream&, uint64_t);

}  // namespace cove
