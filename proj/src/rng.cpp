#include "cove/rng.hpp"

#include <cmath>

namespace cove::rng {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t Stream::below(uint64_t n) {
    // rejection sampling over the top of the range keeps the draw unbiased
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
}

int64_t Stream::uniform_int(int64_t lo, int64_t hi) {
    const auto span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(below(span));
}

double Stream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Stream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Stream::normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

double Stream::gamma(double alpha) {
    if (alpha < 1.0) {
        // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        double u = uniform01();
        while (u == 0.0) u = uniform01();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

uint64_t substream_seed(uint64_t root_seed, std::string_view name) {
    return mix64(root_seed ^ fnv1a64(name));
}

Stream substream(uint64_t root_seed, std::string_view name) {
    return Stream(substream_seed(root_seed, name));
}

}  // namespace cove::rng
