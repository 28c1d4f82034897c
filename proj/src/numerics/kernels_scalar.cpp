#include "kt/numerics/kernels.hpp"

#include <cmath>

namespace kt::kernels::scalar {

template <typename Real>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const Real* a, std::size_t lda, const Real* b, std::size_t ldb, bool accumulate,
          Real* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = Real(0);
        }
        for (std::size_t p = 0; p < k; ++p) {
            const Real aip = trans_a ? a[p * lda + i] : a[i * lda + p];
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * ldb + p];
            } else {
                const Real* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
        }
    }
}

template <typename Real>
void sigmoid(const Real* in, Real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const Real x = in[i];
        if (x >= Real(0)) {
            out[i] = Real(1) / (Real(1) + std::exp(-x));
        } else {
            const Real e = std::exp(x);
            out[i] = e / (Real(1) + e);
        }
    }
}

template <typename Real>
void tanh(const Real* in, Real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          std::size_t, const float*, std::size_t, bool, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           std::size_t, const double*, std::size_t, bool, double*, std::size_t);
template void sigmoid<float>(const float*, float*, std::size_t);
template void sigmoid<double>(const double*, double*, std::size_t);
template void tanh<float>(const float*, float*, std::size_t);
template void tanh<double>(const double*, double*, std::size_t);
template void gemm<long double>(bool, bool, std::size_t, std::size_t, std::size_t, const long double*,
                                std::size_t, const long double*, std::size_t, bool, long double*, std::size_t);
template void sigmoid<long double>(const long double*, long double*, std::size_t);
template void tanh<long double>(const long double*, long double*, std::size_t);

}  // namespace kt::kernels::scalar
