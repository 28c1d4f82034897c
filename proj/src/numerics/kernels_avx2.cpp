// Compiled with -mavx2 -mfma; only reached through runtime dispatch.
#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <vector>

#include "kt/numerics/kernels.hpp"

namespace kt::kernels::avx2 {

namespace {

struct Ops {
    using V = __m256;
    static constexpr std::size_t width = 8;

    static V load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
    static V zero() { return _mm256_setzero_ps(); }
    static V set1(float v) { return _mm256_set1_ps(v); }
    static V add(V a, V b) { return _mm256_add_ps(a, b); }
    static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
    static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
    static V div(V a, V b) { return _mm256_div_ps(a, b); }
    static V min(V a, V b) { return _mm256_min_ps(a, b); }
    static V max(V a, V b) { return _mm256_max_ps(a, b); }
    static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
    static V fnmadd(V a, V b, V c) { return _mm256_fnmadd_ps(a, b, c); }
    static V round(V a) { return _mm256_round_ps(a, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC); }
    static V abs(V a) { return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), a); }
    static V copysign(V mag, V sign) {
        const V sign_bit = _mm256_and_ps(sign, _mm256_set1_ps(-0.0f));
        return _mm256_or_ps(mag, sign_bit);
    }
    static V select_lt(V a, V b, V if_true, V if_false) {
        return _mm256_blendv_ps(if_false, if_true, _mm256_cmp_ps(a, b, _CMP_LT_OQ));
    }
    static V pow2i(V n) {
        const __m256i e = _mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127));
        return _mm256_castsi256_ps(_mm256_slli_epi32(e, 23));
    }
};

constexpr std::size_t kMr = 6;

#include "simd_impl.inl"

}  // namespace

void gemm_f32(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const float* a, std::size_t lda, const float* b, std::size_t ldb, bool accumulate,
              float* c, std::size_t ldc) {
    gemm_impl(trans_a, trans_b, m, n, k, a, lda, b, ldb, accumulate, c, ldc);
}

void sigmoid_f32(const float* in, float* out, std::size_t n) {
    map_unary(in, out, n, [](Ops::V x) { return sigmoid_v(x); });
}

void tanh_f32(const float* in, float* out, std::size_t n) {
    map_unary(in, out, n, [](Ops::V x) { return tanh_v(x); });
}

}  // namespace kt::kernels::avx2
