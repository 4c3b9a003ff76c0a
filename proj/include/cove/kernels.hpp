#pragma once
// Dense float kernels behind a runtime ISA dispatch.
//
// Every single-precision entry point below is backed by a scalar reference
// implementation and, on x86-64 hardware with AVX2+FMA, a vectorized variant.
// The backend is picked once per process (override with COVE_KERNELS=scalar
// or force_isa() in tests). Double overloads always run the scalar reference;
// they exist for the finite-difference harness, not for speed.
//
// GEMM semantics: all three variants ACCUMULATE into C. Callers zero C first
// when they want a plain product.

#include <cstddef>

namespace cove::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
void force_isa(Isa isa);      // throws if the ISA is unavailable on this CPU
const char* isa_name(Isa isa);
bool avx2_available();

// ---- single precision (dispatched) ----
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);  // y += alpha*x
void scal(float alpha, float* x, std::size_t n);                  // x *= alpha
float sq_norm(const float* x, std::size_t n);
void softmax_row(float* x, std::size_t n);                        // in place, max-shifted

// C(m x n) += A(m x k) * B(k x n)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda,
             const float* b, std::size_t ldb,
             float* c, std::size_t ldc);
// C(m x n) += A(m x k) * B(n x k)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda,
             const float* b, std::size_t ldb,
             float* c, std::size_t ldc);
// C(m x n) += A(k x m)^T * B(k x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda,
             const float* b, std::size_t ldb,
             float* c, std::size_t ldc);

// ---- double precision (scalar reference path) ----
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
double sq_norm(const double* x, std::size_t n);
void softmax_row(double* x, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda,
             const double* b, std::size_t ldb,
             double* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda,
             const double* b, std::size_t ldb,
             double* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda,
             const double* b, std::size_t ldb,
             double* c, std::size_t ldc);

}  // namespace cove::kern
