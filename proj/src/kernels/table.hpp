#pragma once
#include <cstddef>

namespace cove::kern {

// One function-pointer slot per dispatched float kernel.
struct Table {
    float (*dot)(const float*, const float*, std::size_t);
    void (*axpy)(float, const float*, float*, std::size_t);
    void (*scal)(float, float*, std::size_t);
    float (*sq_norm)(const float*, std::size_t);
    void (*softmax_row)(float*, std::size_t);
    void (*gemm_nn)(std::size_t, std::size_t, std::size_t,
                    const float*, std::size_t, const float*, std::size_t,
                    float*, std::size_t);
    void (*gemm_nt)(std::size_t, std::size_t, std::size_t,
                    const float*, std::size_t, const float*, std::size_t,
                    float*, std::size_t);
    void (*gemm_tn)(std::size_t, std::size_t, std::size_t,
                    const float*, std::size_t, const float*, std::size_t,
                    float*, std::size_t);
};

const Table& scalar_table();
const Table& avx2_table();

}  // namespace cove::kern
