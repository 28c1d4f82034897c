#include "kt/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kt {

MetricsReport binary_metrics(std::span<const double> predictions, std::span<const std::uint8_t> labels,
                             double threshold) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("binary_metrics: " + std::to_string(predictions.size()) +
                                    " predictions vs " + std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw std::invalid_argument("binary_metrics: empty input");
    MetricsReport r;
    r.n = predictions.size();
    for (std::size_t i = 0; i < r.n; ++i) {
        const bool pos = predictions[i] >= threshold;
        if (labels[i]) {
            pos ? ++r.tp : ++r.fn;
        } else {
            pos ? ++r.fp : ++r.tn;
        }
    }
    r.acc = double(r.tp + r.tn) / double(r.n);
    const double prec = r.tp + r.fp ? double(r.tp) / double(r.tp + r.fp) : 0.0;
    const double rec = r.tp + r.fn ? double(r.tp) / double(r.tp + r.fn) : 0.0;
    r.f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    return r;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (auto y : labels) pos += y ? 1 : 0;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("auc: undefined with a single class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Sum of (1-based) average ranks of the positives.
    double rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg = 0.5 * double(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum += avg;
        i = j;
    }
    const double u = rank_sum - double(pos) * double(pos + 1) / 2.0;
    return u / (double(pos) * double(neg));
}

MetricsReport evaluate(std::span<const double> predictions, std::span<const std::uint8_t> labels) {
    MetricsReport r = binary_metrics(predictions, labels);
    r.auc = (r.tp + r.fn == 0 || r.tn + r.fp == 0) ? std::numeric_limits<double>::quiet_NaN()
                                                    : auc(predictions, labels);
    return r;
}

double oracle_auc(std::span<const double> true_p, std::span<const std::uint8_t> outcomes) {
    return auc(true_p, outcomes);
}

}  // namespace kt
