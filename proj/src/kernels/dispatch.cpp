#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "cove/kernels.hpp"
#include "table.hpp"

namespace cove::kern {
namespace {

struct State {
    const Table* table;
    Isa isa;
};

bool cpu_has_avx2() {
#if COVE_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

State resolve(Isa wanted) {
    if (wanted == Isa::avx2) {
#if COVE_HAVE_AVX2
        if (cpu_has_avx2()) return {&avx2_table(), Isa::avx2};
#endif
        throw std::runtime_error("avx2 kernels unavailable on this CPU/build");
    }
    return {&scalar_table(), Isa::scalar};
}

State initial_state() {
    const char* env = std::getenv("COVE_KERNELS");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return resolve(Isa::scalar);
        if (std::strcmp(env, "avx2") == 0) return resolve(Isa::avx2);
        // "auto" or anything else falls through to detection
    }
#if COVE_HAVE_AVX2
    if (cpu_has_avx2()) return {&avx2_table(), Isa::avx2};
#endif
    return {&scalar_table(), Isa::scalar};
}

State& state() {
    static State s = initial_state();
    return s;
}

}  // namespace

Isa active_isa() { return state().isa; }

void force_isa(Isa isa) { state() = resolve(isa); }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() { return cpu_has_avx2(); }

float dot(const float* a, const float* b, std::size_t n) { return state().table->dot(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { state().table->axpy(alpha, x, y, n); }
void scal(float alpha, float* x, std::size_t n) { state().table->scal(alpha, x, n); }
float sq_norm(const float* x, std::size_t n) { return state().table->sq_norm(x, n); }
void softmax_row(float* x, std::size_t n) { state().table->softmax_row(x, n); }

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc) {
    state().table->gemm_nn(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc) {
    state().table->gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const float* a, std::size_t lda, const float* b, std::size_t ldb,
             float* c, std::size_t ldc) {
    state().table->gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace cove::kern
