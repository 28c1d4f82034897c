#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kt {

struct MetricsReport {
    double f1 = 0.0;
    double auc = 0.0;  // NaN when only one class is present
    double acc = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0, n = 0;
};

/// Confusion-matrix metrics at `threshold` (p >= threshold counts as positive).
/// The auc field is left at 0; see evaluate().
MetricsReport binary_metrics(std::span<const double> predictions, std::span<const std::uint8_t> labels,
                             double threshold = 0.5);

/// Mann-Whitney AUC with average ranks for ties. Throws std::invalid_argument
/// if only one class is present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// binary_metrics plus AUC (NaN if undefined).
MetricsReport evaluate(std::span<const double> predictions, std::span<const std::uint8_t> labels);

/// AUC of the generating probabilities against the sampled outcomes.
double oracle_auc(std::span<const double> true_p, std::span<const std::uint8_t> outcomes);

}  // namespace kt
