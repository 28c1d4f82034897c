#pragma once

// Hot inner loops of the model: matrix products and saturating activations.
//
// Every kernel has a portable scalar reference and, for 32-bit floats, AVX2
// and AVX-512 variants. The best variant the CPU supports is picked once at
// startup; tests can pin a specific one with ScopedIsa to check equivalence.

#include <cstddef>
#include <span>
#include <string_view>

namespace kt::kernels {

enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);

/// Best instruction set supported by this CPU (and compiled in).
Isa detected_isa();

/// Instruction set currently used for dispatch.
Isa active_isa();

/// Selects an instruction set; throws if the CPU cannot run it.
void set_active_isa(Isa isa);

class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
    ~ScopedIsa() { set_active_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

/// Upper bound on worker threads used by gemm. 1 by default.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// C (m x n) = op(A) * op(B) [+ C when accumulate], all row-major.
/// op(A) is m x k and op(B) is k x n. Work is split over column blocks of C,
/// so results do not depend on the thread count.
template <typename Real>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const Real* a, std::size_t lda, const Real* b, std::size_t ldb, bool accumulate,
          Real* c, std::size_t ldc);

/// Overflow-safe logistic function; in and out may alias.
template <typename Real>
void sigmoid(std::span<const Real> in, std::span<Real> out);

/// Hyperbolic tangent; in and out may alias.
template <typename Real>
void tanh(std::span<const Real> in, std::span<Real> out);

namespace scalar {
template <typename Real>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const Real* a, std::size_t lda, const Real* b, std::size_t ldb, bool accumulate,
          Real* c, std::size_t ldc);
template <typename Real>
void sigmoid(const Real* in, Real* out, std::size_t n);
template <typename Real>
void tanh(const Real* in, Real* out, std::size_t n);
}  // namespace scalar

// SIMD variants, only callable when the CPU supports them.
namespace avx2 {
void gemm_f32(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const float* a, std::size_t lda, const float* b, std::size_t ldb, bool accumulate,
              float* c, std::size_t ldc);
void sigmoid_f32(const float* in, float* out, std::size_t n);
void tanh_f32(const float* in, float* out, std::size_t n);
}  // namespace avx2

namespace avx512 {
void gemm_f32(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const float* a, std::size_t lda, const float* b, std::size_t ldb, bool accumulate,
              float* c, std::size_t ldc);
void sigmoid_f32(const float* in, float* out, std::size_t n);
void tanh_f32(const float* in, float* out, std::size_t n);
}  // namespace avx512

}  // namespace kt::kernels
