// Compiled with -mavx512f -mavx2 -mfma; only reached through runtime dispatch.
#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <vector>

#include <cstdint>

#include "kt/numerics/kernels.hpp"

namespace kt::kernels::avx512 {

namespace {

struct Ops {
    using V = __m512;
    static constexpr std::size_t width = 16;

    static V load(const float* p) { return _mm512_loadu_ps(p); }
    static void store(float* p, V v) { _mm512_storeu_ps(p, v); }
    static V zero() { return _mm512_setzero_ps(); }
    static V set1(float v) { return _mm512_set1_ps(v); }
    static V add(V a, V b) { return _mm512_add_ps(a, b); }
    static V sub(V a, V b) { return _mm512_sub_ps(a, b); }
    static V mul(V a, V b) { return _mm512_mul_ps(a, b); }
    static V div(V a, V b) { return _mm512_div_ps(a, b); }
    static V min(V a, V b) { return _mm512_min_ps(a, b); }
    static V max(V a, V b) { return _mm512_max_ps(a, b); }
    static V fmadd(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
    static V fnmadd(V a, V b, V c) { return _mm512_fnmadd_ps(a, b, c); }
    static V round(V a) { return _mm512_roundscale_ps(a, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC); }
    static V abs(V a) { return _mm512_abs_ps(a); }
    static V copysign(V mag, V sign) {
        const __m512i sign_bit = _mm512_and_si512(_mm512_castps_si512(sign), _mm512_set1_epi32(INT32_MIN));
        return _mm512_castsi512_ps(_mm512_or_si512(_mm512_castps_si512(mag), sign_bit));
    }
    static V select_lt(V a, V b, V if_true, V if_false) {
        return _mm512_mask_blend_ps(_mm512_cmp_ps_mask(a, b, _CMP_LT_OQ), if_false, if_true);
    }
    static V pow2i(V n) {
        const __m512i e = _mm512_add_epi32(_mm512_cvtps_epi32(n), _mm512_set1_epi32(127));
        return _mm512_castsi512_ps(_mm512_slli_epi32(e, 23));
    }
};

constexpr std::size_t kMr = 12;

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

}  // namespace kt::kernels::avx512
