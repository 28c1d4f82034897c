#include "kt/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kt {

double relative_error(double numeric, double analytic) {
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    return std::abs(numeric - analytic) / scale;
}

template <typename Real>
GradCheckResult finite_diff_check(const std::type_identity_t<std::function<Real()>>& loss, std::span<Real> params,
                                  std::type_identity_t<std::span<const Real>> analytic, double epsilon,
                                  std::size_t max_coords, std::uint64_t seed) {
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("finite_diff_check: " + std::to_string(params.size()) +
                                    " parameters but " + std::to_string(analytic.size()) +
                                    " gradient entries");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("finite_diff_check: epsilon must be > 0");

    std::vector<std::size_t> coords(params.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords != 0 && max_coords < coords.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    auto evaluate = [&]() {
        const Real v = loss();
        if (!std::isfinite(v)) throw std::runtime_error("finite_diff_check: non-finite loss");
        return v;
    };

    GradCheckResult result;
    for (std::size_t idx : coords) {
        const Real saved = params[idx];
        params[idx] = saved + Real(epsilon);
        const Real up = evaluate();
        params[idx] = saved - Real(epsilon);
        const Real down = evaluate();
        params[idx] = saved;
        const double numeric = double((up - down) / (2 * Real(epsilon)));
        const double err = relative_error(numeric, double(analytic[idx]));
        ++result.coords_checked;
        if (err >= result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_index = idx;
            result.worst_numeric = numeric;
            result.worst_analytic = double(analytic[idx]);
        }
    }
    return result;
}

template GradCheckResult finite_diff_check<double>(const std::function<double()>&, std::span<double>,
                                                   std::span<const double>, double, std::size_t, std::uint64_t);
template GradCheckResult finite_diff_check<long double>(const std::function<long double()>&, std::span<long double>,
                                                        std::span<const long double>, double, std::size_t,
                                                        std::uint64_t);

}  // namespace kt
