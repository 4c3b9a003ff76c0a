// AVX2+FMA variants of the float kernels. This TU is compiled with
// -mavx2 -mfma and must only be entered after the dispatcher has confirmed
// hardware support.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "table.hpp"

namespace cove::kern {
namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

inline float hmax8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float s = hsum8(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scal_avx2(float alpha, float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

float sq_norm_avx2(const float* x, std::size_t n) { return dot_avx2(x, x, n); }

void softmax_row_avx2(float* x, std::size_t n) {
    if (n == 0) return;
    std::size_t i = 0;
    float mx;
    if (n >= 8) {
        __m256 vm = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
        mx = hmax8(vm);
    } else {
        mx = x[0];
        i = 1;
    }
    for (; i < n; ++i) mx = x[i] > mx ? x[i] : mx;

    // exp stays scalar so per-element values match the reference bit for bit;
    // only the reduction order differs.
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = std::exp(x[j] - mx);
        sum += x[j];
    }
    scal_avx2(1.0f / sum, x, n);
}

// C(m x n) += A(m x k) B(k x n).  Register tile: 2 rows x 32 columns.
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const float* a, std::size_t lda, const float* b, std::size_t ldb,
                  float* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const float* a0 = a + i * lda;
        const float* a1 = a0 + lda;
        float* c0 = c + i * ldc;
        float* c1 = c0 + ldc;
        std::size_t j = 0;
        for (; j + 32 <= n; j += 32) {
            __m256 r00 = _mm256_loadu_ps(c0 + j);
            __m256 r01 = _mm256_loadu_ps(c0 + j + 8);
            __m256 r02 = _mm256_loadu_ps(c0 + j + 16);
            __m256 r03 = _mm256_loadu_ps(c0 + j + 24);
            __m256 r10 = _mm256_loadu_ps(c1 + j);
            __m256 r11 = _mm256_loadu_ps(c1 + j + 8);
            __m256 r12 = _mm256_loadu_ps(c1 + j + 16);
            __m256 r13 = _mm256_loadu_ps(c1 + j + 24);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const float* brow = b + kk * ldb + j;
                const __m256 b0 = _mm256_loadu_ps(brow);
                const __m256 b1 = _mm256_loadu_ps(brow + 8);
                const __m256 b2 = _mm256_loadu_ps(brow + 16);
                const __m256 b3 = _mm256_loadu_ps(brow + 24);
                const __m256 v0 = _mm256_set1_ps(a0[kk]);
                const __m256 v1 = _mm256_set1_ps(a1[kk]);
                r00 = _mm256_fmadd_ps(v0, b0, r00);
                r01 = _mm256_fmadd_ps(v0, b1, r01);
                r02 = _mm256_fmadd_ps(v0, b2, r02);
                r03 = _mm256_fmadd_ps(v0, b3, r03);
                r10 = _mm256_fmadd_ps(v1, b0, r10);
                r11 = _mm256_fmadd_ps(v1, b1, r11);
                r12 = _mm256_fmadd_ps(v1, b2, r12);
                r13 = _mm256_fmadd_ps(v1, b3, r13);
            }
            _mm256_storeu_ps(c0 + j, r00);
            _mm256_storeu_ps(c0 + j + 8, r01);
            _mm256_storeu_ps(c0 + j + 16, r02);
            _mm256_storeu_ps(c0 + j + 24, r03);
            _mm256_storeu_ps(c1 + j, r10);
            _mm256_storeu_ps(c1 + j + 8, r11);
            _mm256_storeu_ps(c1 + j + 16, r12);
            _mm256_storeu_ps(c1 + j + 24, r13);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 r0 = _mm256_loadu_ps(c0 + j);
            __m256 r1 = _mm256_loadu_ps(c1 + j);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 bv = _mm256_loadu_ps(b + kk * ldb + j);
                r0 = _mm256_fmadd_ps(_mm256_set1_ps(a0[kk]), bv, r0);
                r1 = _mm256_fmadd_ps(_mm256_set1_ps(a1[kk]), bv, r1);
            }
            _mm256_storeu_ps(c0 + j, r0);
            _mm256_storeu_ps(c1 + j, r1);
        }
        for (; j < n; ++j) {
            float s0 = c0[j], s1 = c1[j];
            for (std::size_t kk = 0; kk < k; ++kk) {
                s0 += a0[kk] * b[kk * ldb + j];
                s1 += a1[kk] * b[kk * ldb + j];
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    if (i < m) {
        const float* a0 = a + i * lda;
        float* c0 = c + i * ldc;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 r0 = _mm256_loadu_ps(c0 + j);
            for (std::size_t kk = 0; kk < k; ++kk)
                r0 = _mm256_fmadd_ps(_mm256_set1_ps(a0[kk]), _mm256_loadu_ps(b + kk * ldb + j), r0);
            _mm256_storeu_ps(c0 + j, r0);
        }
        for (; j < n; ++j) {
            float s0 = c0[j];
            for (std::size_t kk = 0; kk < k; ++kk) s0 += a0[kk] * b[kk * ldb + j];
            c0[j] = s0;
        }
    }
}

// C(m x n) += A(m x k) B(n x k)^T.  Four B rows share one sweep of the A row.
void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const float* a, std::size_t lda, const float* b, std::size_t ldb,
                  float* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        float* crow = c + i * ldc;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const float* b0 = b + j * ldb;
            const float* b1 = b0 + ldb;
            const float* b2 = b1 + ldb;
            const float* b3 = b2 + ldb;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            __m256 acc2 = _mm256_setzero_ps();
            __m256 acc3 = _mm256_setzero_ps();
            std::size_t kk = 0;
            for (; kk + 8 <= k; kk += 8) {
                const __m256 av = _mm256_loadu_ps(arow + kk);
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + kk), acc0);
                acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + kk), acc1);
                acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + kk), acc2);
                acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + kk), acc3);
            }
            float s0 = hsum8(acc0), s1 = hsum8(acc1), s2 = hsum8(acc2), s3 = hsum8(acc3);
            for (; kk < k; ++kk) {
                const float av = arow[kk];
                s0 += av * b0[kk];
                s1 += av * b1[kk];
                s2 += av * b2[kk];
                s3 += av * b3[kk];
            }
            crow[j] += s0;
            crow[j + 1] += s1;
            crow[j + 2] += s2;
            crow[j + 3] += s3;
        }
        for (; j < n; ++j) crow[j] += dot_avx2(arow, b + j * ldb, k);
    }
}

// C(m x n) += A(k x m)^T B(k x n).  Same tile as gemm_nn with strided A reads.
void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const float* a, std::size_t lda, const float* b, std::size_t ldb,
                  float* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        std::size_t j = 0;
        for (; j + 32 <= n; j += 32) {
            __m256 r0 = _mm256_loadu_ps(crow + j);
            __m256 r1 = _mm256_loadu_ps(crow + j + 8);
            __m256 r2 = _mm256_loadu_ps(crow + j + 16);
            __m256 r3 = _mm256_loadu_ps(crow + j + 24);
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 av = _mm256_set1_ps(a[kk * lda + i]);
                const float* brow = b + kk * ldb + j;
                r0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow), r0);
                r1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8), r1);
                r2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 16), r2);
                r3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 24), r3);
            }
            _mm256_storeu_ps(crow + j, r0);
            _mm256_storeu_ps(crow + j + 8, r1);
            _mm256_storeu_ps(crow + j + 16, r2);
            _mm256_storeu_ps(crow + j + 24, r3);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 r0 = _mm256_loadu_ps(crow + j);
            for (std::size_t kk = 0; kk < k; ++kk)
                r0 = _mm256_fmadd_ps(_mm256_set1_ps(a[kk * lda + i]),
                                     _mm256_loadu_ps(b + kk * ldb + j), r0);
            _mm256_storeu_ps(crow + j, r0);
        }
        for (; j < n; ++j) {
            float s = crow[j];
            for (std::size_t kk = 0; kk < k; ++kk) s += a[kk * lda + i] * b[kk * ldb + j];
            crow[j] = s;
        }
    }
}

}  // namespace

const Table& avx2_table() {
    static const Table t{
        &dot_avx2,     &axpy_avx2,    &scal_avx2,
        &sq_norm_avx2, &softmax_row_avx2,
        &gemm_nn_avx2, &gemm_nt_avx2, &gemm_tn_avx2,
    };
    return t;
}

}  // namespace cove::kern
