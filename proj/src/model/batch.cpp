#include "kt/model/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace kt {

Batch make_batch(std::span<const PrefixView> examples) {
    Batch batch;
    batch.size = examples.size();
    for (const auto& ex : examples) {
        if (ex.prefix.empty())
            throw std::invalid_argument("make_batch: empty prefix (cold start is handled by the caller)");
        batch.steps = std::max(batch.steps, ex.prefix.size());
    }
    const std::size_t n = batch.steps * batch.size;
    batch.questions.assign(n, 0);
    batch.responses.assign(n, 0);
    batch.valid.assign(n, 0);
    batch.lengths.reserve(batch.size);
    batch.targets.reserve(batch.size);
    batch.labels.reserve(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto& ex = examples[b];
        const std::size_t offset = batch.steps - ex.prefix.size();
        for (std::size_t k = 0; k < ex.prefix.size(); ++k) {
            const std::size_t idx = (offset + k) * batch.size + b;
            batch.questions[idx] = ex.prefix[k].question;
            batch.responses[idx] = ex.prefix[k].response;
            batch.valid[idx] = 1;
        }
        batch.lengths.push_back(static_cast<std::uint32_t>(ex.prefix.size()));
        batch.targets.push_back(ex.target);
        batch.labels.push_back(ex.label);
    }
    return batch;
}

}  // namespace kt
