#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>

namespace kt {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_index = 0;
    double worst_numeric = 0.0;
    double worst_analytic = 0.0;
};

/// Compares analytic gradients against central differences
/// (f(θ+εe) − f(θ−εe)) / 2ε, coordinate by coordinate.
///
/// `loss` is evaluated after `params` has been perturbed in place; every
/// coordinate is restored afterwards. When `max_coords` is nonzero and smaller
/// than the tensor, a seeded random subset of coordinates is checked.
/// Relative error is |fd − an| / max(|fd|, |an|, 1e-8). Throws if the loss is
/// ever non-finite.
///
/// Instantiated for double and long double; the latter lets a reference
/// check resolve gradients far below double roundoff of the loss.
template <typename Real>
GradCheckResult finite_diff_check(const std::type_identity_t<std::function<Real()>>& loss, std::span<Real> params,
                                  std::type_identity_t<std::span<const Real>> analytic, double epsilon,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0);

inline GradCheckResult finite_diff_check(const std::function<double()>& loss, std::span<double> params,
                                         std::span<const double> analytic, double epsilon,
                                         std::size_t max_coords = 0, std::uint64_t seed = 0) {
    return finite_diff_check<double>(loss, params, analytic, epsilon, max_coords, seed);
}

double relative_error(double numeric, double analytic);

}  // namespace kt
