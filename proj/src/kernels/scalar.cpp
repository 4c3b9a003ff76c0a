#include "ref.hpp"
#include "table.hpp"

#include "cove/kernels.hpp"

namespace cove::kern {

const Table& scalar_table() {
    static const Table t{
        &ref::dot<float>,     &ref::axpy<float>,    &ref::scal<float>,
        &ref::sq_norm<float>, &ref::softmax_row<float>,
        &ref::gemm_nn<float>, &ref::gemm_nt<float>, &ref::gemm_tn<float>,
    };
    return t;
}

// Double path: scalar reference only.
double dot(const double* a, const double* b, std::size_t n) { return ref::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { ref::axpy(alpha, x, y, n); }
void scal(double alpha, double* x, std::size_t n) { ref::scal(alpha, x, n); }
double sq_norm(const double* x, std::size_t n) { return ref::sq_norm(x, n); }
void softmax_row(double* x, std::size_t n) { ref::softmax_row(x, n); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda, const double* b, std::size_t ldb,
             double* c, std::size_t ldc) { ref::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda, const double* b, std::size_t ldb,
             double* c, std::size_t ldc) { ref::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, std::size_t lda, const double* b, std::size_t ldb,
             double* c, std::size_t ldc) { ref::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc); }

}  // namespace cove::kern
