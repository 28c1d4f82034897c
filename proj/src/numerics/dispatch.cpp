#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kt/numerics/kernels.hpp"

namespace kt::kernels {

namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
#if defined(KT_HAVE_X86_SIMD)
        case Isa::avx2:
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        case Isa::avx512:
            return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx2") &&
                   __builtin_cpu_supports("fma");
#else
        case Isa::avx2:
        case Isa::avx512:
            return false;
#endif
    }
    return false;
}

Isa probe() {
    if (cpu_supports(Isa::avx512)) return Isa::avx512;
    if (cpu_supports(Isa::avx2)) return Isa::avx2;
    return Isa::scalar;
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{probe()};
    return isa;
}

std::atomic<std::size_t> g_threads{1};

using GemmF32 = void (*)(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                         std::size_t, const float*, std::size_t, bool, float*, std::size_t);

GemmF32 gemm_f32_for(Isa isa) {
    switch (isa) {
#if defined(KT_HAVE_X86_SIMD)
        case Isa::avx512:
            return &avx512::gemm_f32;
        case Isa::avx2:
            return &avx2::gemm_f32;
#endif
        default:
            return &scalar::gemm<float>;
    }
}

template <typename Real, typename Fn>
void split_columns(std::size_t n, Fn&& body) {
    constexpr std::size_t kAlign = 64;
    const std::size_t blocks = (n + kAlign - 1) / kAlign;
    const std::size_t workers = std::min(num_threads(), blocks);
    if (workers <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    auto range = [&](std::size_t w) {
        const std::size_t b0 = blocks * w / workers;
        const std::size_t b1 = blocks * (w + 1) / workers;
        return std::pair{b0 * kAlign, std::min(n, b1 * kAlign)};
    };
    for (std::size_t w = 1; w < workers; ++w) {
        auto [j0, j1] = range(w);
        pool.emplace_back([&body, j0, j1] { body(j0, j1); });
    }
    auto [j0, j1] = range(0);
    body(j0, j1);
    for (auto& t : pool) t.join();
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::avx512:
            return "avx512";
    }
    return "unknown";
}

Isa detected_isa() {
    static const Isa isa = probe();
    return isa;
}

Isa active_isa() { return active().load(); }

void set_active_isa(Isa isa) {
    if (!cpu_supports(isa)) {
        throw std::runtime_error("instruction set not supported on this CPU: " +
                                 std::string(isa_name(isa)));
    }
    active().store(isa);
}

void set_num_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(1, n)); }
std::size_t num_threads() { return g_threads.load(); }

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb,
                 bool accumulate, float* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    const GemmF32 fn = gemm_f32_for(active_isa());
    split_columns<float>(n, [&](std::size_t j0, std::size_t j1) {
        const float* bj = trans_b ? b + j0 * ldb : b + j0;
        fn(trans_a, trans_b, m, j1 - j0, k, a, lda, bj, ldb, accumulate, c + j0, ldc);
    });
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb,
                  bool accumulate, double* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    split_columns<double>(n, [&](std::size_t j0, std::size_t j1) {
        const double* bj = trans_b ? b + j0 * ldb : b + j0;
        scalar::gemm<double>(trans_a, trans_b, m, j1 - j0, k, a, lda, bj, ldb, accumulate,
                             c + j0, ldc);
    });
}

template <>
void sigmoid<float>(std::span<const float> in, std::span<float> out) {
    if (in.size() != out.size()) throw std::invalid_argument("sigmoid: size mismatch");
    switch (active_isa()) {
#if defined(KT_HAVE_X86_SIMD)
        case Isa::avx512:
            return avx512::sigmoid_f32(in.data(), out.data(), in.size());
        case Isa::avx2:
            return avx2::sigmoid_f32(in.data(), out.data(), in.size());
#endif
        default:
            return scalar::sigmoid<float>(in.data(), out.data(), in.size());
    }
}

template <>
void sigmoid<double>(std::span<const double> in, std::span<double> out) {
    if (in.size() != out.size()) throw std::invalid_argument("sigmoid: size mismatch");
    scalar::sigmoid<double>(in.data(), out.data(), in.size());
}

template <>
void tanh<float>(std::span<const float> in, std::span<float> out) {
    if (in.size() != out.size()) throw std::invalid_argument("tanh: size mismatch");
    switch (active_isa()) {
#if defined(KT_HAVE_X86_SIMD)
        case Isa::avx512:
            return avx512::tanh_f32(in.data(), out.data(), in.size());
        case Isa::avx2:
            return avx2::tanh_f32(in.data(), out.data(), in.size());
#endif
        default:
            return scalar::tanh<float>(in.data(), out.data(), in.size());
    }
}

template <>
void tanh<double>(std::span<const double> in, std::span<double> out) {
    if (in.size() != out.size()) throw std::invalid_argument("tanh: size mismatch");
    scalar::tanh<double>(in.data(), out.data(), in.size());
}

// Extended precision: scalar only, used for reference gradient checks.
template <>
void gemm<long double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                       const long double* a, std::size_t lda, const long double* b, std::size_t ldb,
                       bool accumulate, long double* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    scalar::gemm<long double>(trans_a, trans_b, m, n, k, a, lda, b, ldb, accumulate, c, ldc);
}

template <>
void sigmoid<long double>(std::span<const long double> in, std::span<long double> out) {
    if (in.size() != out.size()) throw std::invalid_argument("sigmoid: size mismatch");
    scalar::sigmoid<long double>(in.data(), out.data(), in.size());
}

template <>
void tanh<long double>(std::span<const long double> in, std::span<long double> out) {
    if (in.size() != out.size()) throw std::invalid_argument("tanh: size mismatch");
    scalar::tanh<long double>(in.data(), out.data(), in.size());
}

}  // namespace kt::kernels
