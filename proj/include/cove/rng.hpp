#pragma once
// Seeded randomness. Every random draw in the project flows from one root
// seed through named substreams ("data", "init", "hash", "training", ...),
// so varying one component never perturbs the others.
//
// The engine is std::mt19937_64 (bit-exact per the standard); distribution
// code is our own because the std distributions are not reproducible across
// standard libraries.

#include <cstdint>
#include <random>
#include <string_view>

namespace cove::rng {

uint64_t fnv1a64(std::string_view s);
uint64_t mix64(uint64_t x);  // splitmix64 finalizer

class Stream {
public:
    explicit Stream(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Unbiased integer in [0, n), n >= 1.
    uint64_t below(uint64_t n);
    // Inclusive range.
    int64_t uniform_int(int64_t lo, int64_t hi);
    // [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);
    double normal();  // standard normal, Box-Muller (no state carried)
    // Marsaglia-Tsang, valid for any alpha > 0.
    double gamma(double alpha);

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<uint64_t>(last - first);
        for (uint64_t i = n; i > 1; --i) {
            const uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// Substream keyed by name; independent of draws from other substreams.
Stream substream(uint64_t root_seed, std::string_view name);
uint64_t substream_seed(uint64_t root_seed, std::string_view name);

}  // namespace cove::rng
