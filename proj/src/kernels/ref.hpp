#pragma once
// Scalar reference kernels. These are the semantic ground truth the SIMD
// variants are equivalence-tested against, and the only path for double.

#include <cmath>
#include <cstddef>

namespace cove::kern::ref {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scal(T alpha, T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <typename T>
T sq_norm(const T* x, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
void softmax_row(T* x, std::size_t n) {
    if (n == 0) return;
    T mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    T sum{};
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    T inv = T(1) / sum;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = a[i * lda + kk];
            const T* brow = b + kk * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * lda;
        T* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b + j * ldb, k);
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = a[kk * lda + i];
            const T* brow = b + kk * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace cove::kern::ref
