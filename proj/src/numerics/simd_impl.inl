// Shared body of the SIMD kernels. Included inside an anonymous namespace by
// each ISA translation unit after it defines `Ops`, a thin wrapper around that
// ISA's float intrinsics, and the micro-tile shape kMr x (2 * Ops::width).
//
// The gemm follows the usual packed layout: B is packed into kNr-wide column
// panels, A into kMr-tall row panels, and a register-blocked micro-kernel
// accumulates one kMr x kNr tile of C across a kKc slice of the shared
// dimension. The including file provides <algorithm>, <cstddef> and <vector>.
// The per-element summation order only depends on k, never on how
// the columns were split between threads.

constexpr std::size_t kNr = 2 * Ops::width;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = kMr * 8;
constexpr std::size_t kNc = 2048;

inline void pack_a(bool trans, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
                   std::size_t p0, std::size_t kc, float* dst) {
    for (std::size_t ir = 0; ir < mc; ir += kMr) {
        const std::size_t mr = std::min(kMr, mc - ir);
        for (std::size_t p = 0; p < kc; ++p) {
            for (std::size_t r = 0; r < kMr; ++r) {
                float v = 0.0f;
                if (r < mr) {
                    const std::size_t i = i0 + ir + r;
                    const std::size_t kk = p0 + p;
                    v = trans ? a[kk * lda + i] : a[i * lda + kk];
                }
                *dst++ = v;
            }
        }
    }
}

inline void pack_b(bool trans, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
                   std::size_t j0, std::size_t nc, float* dst) {
    for (std::size_t jr = 0; jr < nc; jr += kNr) {
        const std::size_t nr = std::min(kNr, nc - jr);
        for (std::size_t p = 0; p < kc; ++p) {
            const std::size_t kk = p0 + p;
            if (!trans && nr == kNr) {
                const float* src = b + kk * ldb + j0 + jr;
                std::copy(src, src + kNr, dst);
                dst += kNr;
                continue;
            }
            for (std::size_t c = 0; c < kNr; ++c) {
                float v = 0.0f;
                if (c < nr) {
                    const std::size_t j = j0 + jr + c;
                    v = trans ? b[j * ldb + kk] : b[kk * ldb + j];
                }
                *dst++ = v;
            }
        }
    }
}

inline void micro_kernel(std::size_t kc, const float* pa, const float* pb, float* c,
                         std::size_t ldc, bool accumulate) {
    typename Ops::V acc0[kMr];
    typename Ops::V acc1[kMr];
#pragma GCC unroll 16
    for (std::size_t r = 0; r < kMr; ++r) {
        if (accumulate) {
            acc0[r] = Ops::load(c + r * ldc);
            acc1[r] = Ops::load(c + r * ldc + Ops::width);
        } else {
            acc0[r] = Ops::zero();
            acc1[r] = Ops::zero();
        }
    }
    for (std::size_t p = 0; p < kc; ++p) {
        const auto b0 = Ops::load(pb);
        const auto b1 = Ops::load(pb + Ops::width);
#pragma GCC unroll 16
        for (std::size_t r = 0; r < kMr; ++r) {
            const auto av = Ops::set1(pa[r]);
            acc0[r] = Ops::fmadd(av, b0, acc0[r]);
            acc1[r] = Ops::fmadd(av, b1, acc1[r]);
        }
        pa += kMr;
        pb += kNr;
    }
#pragma GCC unroll 16
    for (std::size_t r = 0; r < kMr; ++r) {
        Ops::store(c + r * ldc, acc0[r]);
        Ops::store(c + r * ldc + Ops::width, acc1[r]);
    }
}

inline void gemm_impl(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                      const float* a, std::size_t lda, const float* b, std::size_t ldb,
                      bool accumulate, float* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) {
            for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
        }
        return;
    }
    thread_local std::vector<float> packed_a;
    thread_local std::vector<float> packed_b;
    packed_a.resize(kMc * kKc);
    packed_b.resize(kKc * (kNc + kNr));
    float tile[kMr * kNr];

    for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
        const std::size_t nc = std::min(kNc, n - j0);
        for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
            const std::size_t kc = std::min(kKc, k - p0);
            const bool acc = accumulate || p0 > 0;
            pack_b(trans_b, b, ldb, p0, kc, j0, nc, packed_b.data());
            for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
                const std::size_t mc = std::min(kMc, m - i0);
                pack_a(trans_a, a, lda, i0, mc, p0, kc, packed_a.data());
                for (std::size_t jr = 0; jr < nc; jr += kNr) {
                    const std::size_t nr = std::min(kNr, nc - jr);
                    const float* pb = packed_b.data() + jr * kc;
                    for (std::size_t ir = 0; ir < mc; ir += kMr) {
                        const std::size_t mr = std::min(kMr, mc - ir);
                        const float* pa = packed_a.data() + ir * kc;
                        float* cij = c + (i0 + ir) * ldc + j0 + jr;
                        if (mr == kMr && nr == kNr) {
                            micro_kernel(kc, pa, pb, cij, ldc, acc);
                            continue;
                        }
                        if (acc) {
                            for (std::size_t r = 0; r < mr; ++r)
                                std::copy(cij + r * ldc, cij + r * ldc + nr, tile + r * kNr);
                        }
                        micro_kernel(kc, pa, pb, tile, kNr, acc);
                        for (std::size_t r = 0; r < mr; ++r)
                            std::copy(tile + r * kNr, tile + r * kNr + nr, cij + r * ldc);
                    }
                }
            }
        }
    }
}

// Cephes-style single precision exp. Inputs are clamped to +-87 so the result
// is always a finite normal number.
inline typename Ops::V exp_v(typename Ops::V x) {
    using V = typename Ops::V;
    x = Ops::min(x, Ops::set1(87.0f));
    x = Ops::max(x, Ops::set1(-87.0f));
    V fx = Ops::round(Ops::mul(x, Ops::set1(1.44269504088896341f)));
    x = Ops::fnmadd(fx, Ops::set1(0.693359375f), x);
    x = Ops::fnmadd(fx, Ops::set1(-2.12194440e-4f), x);
    V y = Ops::set1(1.9875691500e-4f);
    y = Ops::fmadd(y, x, Ops::set1(1.3981999507e-3f));
    y = Ops::fmadd(y, x, Ops::set1(8.3334519073e-3f));
    y = Ops::fmadd(y, x, Ops::set1(4.1665795894e-2f));
    y = Ops::fmadd(y, x, Ops::set1(1.6666665459e-1f));
    y = Ops::fmadd(y, x, Ops::set1(5.0000001201e-1f));
    y = Ops::fmadd(y, Ops::mul(x, x), Ops::add(x, Ops::set1(1.0f)));
    return Ops::mul(y, Ops::pow2i(fx));
}

inline typename Ops::V sigmoid_v(typename Ops::V x) {
    const auto one = Ops::set1(1.0f);
    return Ops::div(one, Ops::add(one, exp_v(Ops::sub(Ops::zero(), x))));
}

inline typename Ops::V tanh_v(typename Ops::V x) {
    const auto ax = Ops::abs(x);
    // Small arguments: odd polynomial, avoids cancellation in 1 - 2/(e^2x + 1).
    const auto z = Ops::mul(ax, ax);
    auto poly = Ops::set1(-5.70498872745e-3f);
    poly = Ops::fmadd(poly, z, Ops::set1(2.06390887954e-2f));
    poly = Ops::fmadd(poly, z, Ops::set1(-5.37397155531e-2f));
    poly = Ops::fmadd(poly, z, Ops::set1(1.33314422036e-1f));
    poly = Ops::fmadd(poly, z, Ops::set1(-3.33332819422e-1f));
    const auto small = Ops::fmadd(Ops::mul(poly, z), ax, ax);
    const auto one = Ops::set1(1.0f);
    const auto e2 = exp_v(Ops::add(ax, ax));
    const auto large = Ops::sub(one, Ops::div(Ops::set1(2.0f), Ops::add(e2, one)));
    const auto mag = Ops::select_lt(ax, Ops::set1(0.625f), small, large);
    return Ops::copysign(mag, x);
}

template <typename Fn>
inline void map_unary(const float* in, float* out, std::size_t n, Fn fn) {
    std::size_t i = 0;
    for (; i + Ops::width <= n; i += Ops::width) Ops::store(out + i, fn(Ops::load(in + i)));
    if (i < n) {
        float buf[Ops::width] = {};
        std::copy(in + i, in + n, buf);
        Ops::store(buf, fn(Ops::load(buf)));
        std::copy(buf, buf + (n - i), out + i);
    }
}
