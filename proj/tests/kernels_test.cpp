#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cove/kernels.hpp"
#include "cove/rng.hpp"

using namespace cove;

namespace {

std::vector<float> random_vec(rng::Stream& s, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(s.uniform(lo, hi));
    return v;
}

// independent long-double oracle
long double naive_dot(const float* a, const float* b, std::size_t n) {
    long double acc = 0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
    return acc;
}

void naive_gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                   const float* b, std::size_t ldb, std::vector<double>& c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t kk = 0; kk < k; ++kk)
                acc += static_cast<double>(a[i * lda + kk]) * static_cast<double>(b[kk * ldb + j]);
            c[i * ldc + j] += acc;
        }
}

bool close(double a, double b, double rel, double abs_floor) {
    return std::abs(a - b) <= abs_floor + rel * std::max(std::abs(a), std::abs(b));
}

const std::vector<std::size_t> kOddSizes = {1, 2, 3, 5, 7, 8, 9, 15, 16, 17, 31, 32,
                                            33, 63, 64, 65, 100, 127, 256, 257};

bool have_avx2() { return kern::avx2_available(); }

template <typename Fn>
void with_each_isa(Fn&& fn) {
    kern::force_isa(kern::Isa::scalar);
    fn(kern::Isa::scalar);
    if (have_avx2()) {
        kern::force_isa(kern::Isa::avx2);
        fn(kern::Isa::avx2);
    }
    kern::force_isa(kern::Isa::scalar);
}

}  // namespace

TEST_CASE("dot and sq_norm match a long-double oracle on both backends") {
    auto s = rng::substream(7, "kern.dot");
    for (const std::size_t n : kOddSizes) {
        const auto a = random_vec(s, n);
        const auto b = random_vec(s, n);
        const double expect = static_cast<double>(naive_dot(a.data(), b.data(), n));
        with_each_isa([&](kern::Isa) {
            CHECK(close(kern::dot(a.data(), b.data(), n), expect, 1e-5, 1e-6));
            CHECK(close(kern::sq_norm(a.data(), n),
                        static_cast<double>(naive_dot(a.data(), a.data(), n)), 1e-5, 1e-6));
        });
    }
}

TEST_CASE("axpy and scal agree across backends") {
    auto s = rng::substream(8, "kern.axpy");
    for (const std::size_t n : kOddSizes) {
        const auto x = random_vec(s, n);
        const auto y0 = random_vec(s, n);
        const float alpha = static_cast<float>(s.uniform(-1.5, 1.5));

        auto y_ref = y0;
        kern::force_isa(kern::Isa::scalar);
        kern::axpy(alpha, x.data(), y_ref.data(), n);
        auto z_ref = y0;
        kern::scal(alpha, z_ref.data(), n);

        if (have_avx2()) {
            kern::force_isa(kern::Isa::avx2);
            auto y_simd = y0;
            kern::axpy(alpha, x.data(), y_simd.data(), n);
            auto z_simd = y0;
            kern::scal(alpha, z_simd.data(), n);
            kern::force_isa(kern::Isa::scalar);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(y_simd[i] == doctest::Approx(y_ref[i]).epsilon(1e-6));
                CHECK(z_simd[i] == z_ref[i]);  // one multiply, exact either way
            }
        }
    }
}

TEST_CASE("all three gemm variants match the naive oracle at awkward shapes") {
    auto s = rng::substream(9, "kern.gemm");
    const std::size_t shapes[][3] = {{1, 1, 1},   {2, 3, 4},   {5, 8, 3},   {7, 33, 17},
                                     {16, 64, 16}, {3, 65, 70}, {31, 40, 9}, {8, 8, 8}};
    for (const auto& shape : shapes) {
        const std::size_t m = shape[0], n = shape[1], k = shape[2];
        const auto a_nn = random_vec(s, m * k);
        const auto b_nn = random_vec(s, k * n);
        const auto a_nt = random_vec(s, m * k);
        const auto b_nt = random_vec(s, n * k);
        const auto a_tn = random_vec(s, k * m);
        const auto b_tn = random_vec(s, k * n);
        const auto c0 = random_vec(s, m * n);

        // oracle in double; gemm_nt/tn reduce to gemm_nn on re-laid inputs
        std::vector<double> ref_nn(c0.begin(), c0.end());
        naive_gemm_nn(m, n, k, a_nn.data(), k, b_nn.data(), n, ref_nn, n);
        std::vector<float> bt(k * n), at(m * k);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b_nt[j * k + kk];
        std::vector<double> ref_nt(c0.begin(), c0.end());
        naive_gemm_nn(m, n, k, a_nt.data(), k, bt.data(), n, ref_nt, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) at[i * k + kk] = a_tn[kk * m + i];
        std::vector<double> ref_tn(c0.begin(), c0.end());
        naive_gemm_nn(m, n, k, at.data(), k, b_tn.data(), n, ref_tn, n);

        with_each_isa([&](kern::Isa) {
            auto c = c0;
            kern::gemm_nn(m, n, k, a_nn.data(), k, b_nn.data(), n, c.data(), n);
            for (std::size_t i = 0; i < m * n; ++i) CHECK(close(c[i], ref_nn[i], 2e-5, 1e-5));
            c = c0;
            kern::gemm_nt(m, n, k, a_nt.data(), k, b_nt.data(), k, c.data(), n);
            for (std::size_t i = 0; i < m * n; ++i) CHECK(close(c[i], ref_nt[i], 2e-5, 1e-5));
            c = c0;
            kern::gemm_tn(m, n, k, a_tn.data(), m, b_tn.data(), n, c.data(), n);
            for (std::size_t i = 0; i < m * n; ++i) CHECK(close(c[i], ref_tn[i], 2e-5, 1e-5));
        });
    }
}

TEST_CASE("gemm handles submatrix strides (ld > row width)") {
    auto s = rng::substream(10, "kern.strides");
    const std::size_t m = 5, n = 12, k = 9, lda = 20, ldb = 30, ldc = 25;
    const auto a = random_vec(s, m * lda);
    const auto b = random_vec(s, k * ldb);
    const auto c0 = random_vec(s, m * ldc);

    std::vector<float> a_packed(m * k), b_packed(k * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) a_packed[i * k + kk] = a[i * lda + kk];
    for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t j = 0; j < n; ++j) b_packed[kk * n + j] = b[kk * ldb + j];
    std::vector<double> ref(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ref[i * n + j] = c0[i * ldc + j];
    naive_gemm_nn(m, n, k, a_packed.data(), k, b_packed.data(), n, ref, n);

    with_each_isa([&](kern::Isa) {
        auto c = c0;
        kern::gemm_nn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                CHECK(close(c[i * ldc + j], ref[i * n + j], 2e-5, 1e-5));
            // untouched tail of each row
            for (std::size_t j = n; j < ldc; ++j) CHECK(c[i * ldc + j] == c0[i * ldc + j]);
        }
    });
}

TEST_CASE("softmax_row is stable, normalized, and backend-consistent") {
    auto s = rng::substream(11, "kern.softmax");
    for (const std::size_t n : {1ul, 2ul, 7ul, 8ul, 9ul, 33ul, 257ul}) {
        auto x = random_vec(s, n, -30.0, 30.0);
        auto ref = x;
        kern::force_isa(kern::Isa::scalar);
        kern::softmax_row(ref.data(), n);
        double sum = 0;
        for (const float v : ref) {
            CHECK(v >= 0.0f);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        if (have_avx2()) {
            kern::force_isa(kern::Isa::avx2);
            auto simd = x;
            kern::softmax_row(simd.data(), n);
            kern::force_isa(kern::Isa::scalar);
            for (std::size_t i = 0; i < n; ++i)
                CHECK(simd[i] == doctest::Approx(ref[i]).epsilon(1e-6));
        }
    }

    // -inf masking pattern used by causal attention
    std::vector<float> masked = {0.5f, -std::numeric_limits<float>::infinity(), 1.5f};
    with_each_isa([&](kern::Isa) {
        auto x = masked;
        kern::softmax_row(x.data(), x.size());
        CHECK(x[1] == 0.0f);
        CHECK(x[0] + x[2] == doctest::Approx(1.0).epsilon(1e-6));
    });
}

TEST_CASE("softmax over a prefix leaves the tail untouched") {
    std::vector<float> x = {1.0f, 2.0f, 3.0f, 42.0f, -7.0f};
    with_each_isa([&](kern::Isa) {
        auto y = x;
        kern::softmax_row(y.data(), 3);
        CHECK(y[3] == 42.0f);
        CHECK(y[4] == -7.0f);
        CHECK(y[0] + y[1] + y[2] == doctest::Approx(1.0).epsilon(1e-6));
    });
}

TEST_CASE("dispatcher reports a usable backend") {
    CHECK((kern::active_isa() == kern::Isa::scalar || kern::active_isa() == kern::Isa::avx2));
    kern::force_isa(kern::Isa::scalar);
    CHECK(kern::active_isa() == kern::Isa::scalar);
    CHECK(std::string(kern::isa_name(kern::active_isa())) == "scalar");
    if (have_avx2()) {
        kern::force_isa(kern::Isa::avx2);
        CHECK(kern::active_isa() == kern::Isa::avx2);
        kern::force_isa(kern::Isa::scalar);
    }
}
