#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "doctest.h"
#include "kt/numerics/kernels.hpp"

namespace kk = kt::kernels;

namespace {

std::vector<kk::Isa> available_isas() {
    std::vector<kk::Isa> out{kk::Isa::scalar};
    for (auto isa : {kk::Isa::avx2, kk::Isa::avx512}) {
        try {
            kk::ScopedIsa probe(isa);
            out.push_back(isa);
        } catch (const std::exception&) {
        }
    }
    return out;
}

std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Double precision product used as ground truth.
std::vector<double> reference_product(bool ta, bool tb, std::size_t m, std::size_t n,
                                      std::size_t k, const std::vector<float>& a,
                                      const std::vector<float>& b) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta ? a[p * m + i] : a[i * k + p];
                const double bv = tb ? b[j * k + p] : b[p * n + j];
                s += av * bv;
            }
            c[i * n + j] = s;
        }
    return c;
}

}  // namespace

TEST_CASE("every gemm variant matches the double-precision product") {
    std::mt19937_64 rng(1234);
    const std::size_t shapes[][3] = {{1, 1, 1},   {5, 7, 3},     {6, 16, 8},   {13, 33, 17},
                                     {12, 32, 1}, {40, 100, 300}, {97, 65, 257}, {3, 513, 31},
                                     {130, 20, 0}};
    for (auto isa : available_isas()) {
        kk::ScopedIsa scope(isa);
        for (const auto& s : shapes) {
            const std::size_t m = s[0], n = s[1], k = s[2];
            for (int mode = 0; mode < 8; ++mode) {
                const bool ta = mode & 1, tb = mode & 2, acc = mode & 4;
                const auto a = random_floats(m * k, rng);
                const auto b = random_floats(k * n, rng);
                auto c = random_floats(m * n, rng);
                const auto c0 = c;
                kk::gemm<float>(ta, tb, m, n, k, a.data(), ta ? m : k, b.data(), tb ? k : n, acc,
                                c.data(), n);
                const auto ref = reference_product(ta, tb, m, n, k, a, b);
                double worst = 0.0;
                for (std::size_t i = 0; i < m * n; ++i) {
                    const double expect = ref[i] + (acc ? c0[i] : 0.0);
                    worst = std::max(worst, std::abs(expect - c[i]));
                }
                INFO("isa=" << kk::isa_name(isa) << " m=" << m << " n=" << n << " k=" << k
                            << " mode=" << mode);
                CHECK(worst < 1e-5 * std::max<double>(1.0, std::sqrt(double(k))));
            }
        }
    }
}

TEST_CASE("gemm results do not depend on the thread count") {
    std::mt19937_64 rng(99);
    const std::size_t m = 37, n = 301, k = 129;
    const auto a = random_floats(m * k, rng);
    const auto b = random_floats(k * n, rng);
    for (auto isa : available_isas()) {
        kk::ScopedIsa scope(isa);
        std::vector<float> single(m * n), multi(m * n);
        kk::set_num_threads(1);
        kk::gemm<float>(false, true, m, n, k, a.data(), k, b.data(), k, false, single.data(), n);
        kk::set_num_threads(4);
        kk::gemm<float>(false, true, m, n, k, a.data(), k, b.data(), k, false, multi.data(), n);
        kk::set_num_threads(1);
        CHECK(single == multi);
    }
}

TEST_CASE("vector activations agree with the scalar reference") {
    std::vector<float> x;
    for (float v = -100.0f; v <= 100.0f; v += 0.0137f) x.push_back(v);
    for (float v : {0.0f, -0.0f, 1e-8f, -1e-8f, 0.6249f, 0.625f, 0.6251f, 87.5f, -87.5f, 1e4f})
        x.push_back(v);

    std::vector<float> ref_s(x.size()), ref_t(x.size());
    kk::scalar::sigmoid(x.data(), ref_s.data(), x.size());
    kk::scalar::tanh(x.data(), ref_t.data(), x.size());

    for (auto isa : available_isas()) {
        kk::ScopedIsa scope(isa);
        std::vector<float> s(x.size()), t(x.size());
        kk::sigmoid<float>(x, s);
        kk::tanh<float>(x, t);
        double worst_s = 0.0, worst_t = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(std::isfinite(s[i]));
            CHECK(s[i] >= 0.0f);
            CHECK(s[i] <= 1.0f);
            CHECK(std::abs(t[i]) <= 1.0f);
            worst_s = std::max(worst_s, double(std::abs(s[i] - ref_s[i])) /
                                            std::max(1e-30, double(std::abs(ref_s[i]))));
            worst_t = std::max(worst_t, double(std::abs(t[i] - ref_t[i])) /
                                            std::max(1e-30, double(std::abs(ref_t[i]))));
        }
        INFO("isa=" << kk::isa_name(isa));
        CHECK(worst_s < 2e-6);
        CHECK(worst_t < 2e-6);
        // Exact symmetry points.
        std::vector<float> zero{0.0f}, out{1.0f};
        kk::sigmoid<float>(zero, out);
        CHECK(out[0] == 0.5f);
        kk::tanh<float>(zero, out);
        CHECK(out[0] == 0.0f);
    }
}

TEST_CASE("gemm throughput report" * doctest::skip(false)) {
    std::mt19937_64 rng(5);
    const std::size_t m = 6400, n = 512, k = 384;
    const auto a = random_floats(m * k, rng);
    const auto b = random_floats(k * n, rng);
    std::vector<float> c(m * n);
    for (auto isa : available_isas()) {
        if (isa == kk::Isa::scalar) continue;
        kk::ScopedIsa scope(isa);
        const auto t0 = std::chrono::steady_clock::now();
        kk::gemm<float>(false, false, m, n, k, a.data(), k, b.data(), n, false, c.data(), n);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("gemm %s: %.1f GFLOP/s\n", std::string(kk::isa_name(isa)).c_str(),
                    2.0 * m * n * k / secs / 1e9);
        CHECK(secs > 0.0);
    }
}
