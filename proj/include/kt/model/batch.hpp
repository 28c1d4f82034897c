#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kt {

/// One exhausted interaction as the model sees it: dense question index and
/// the 0/1 response.
struct Step {
    std::uint32_t question = 0;
    std::uint8_t response = 0;

    bool operator==(const Step&) const = default;
};

/// A prediction request: the (already windowed) prefix before the target.
struct PrefixView {
    std::span<const Step> prefix;
    std::uint32_t target = 0;
    std::uint8_t label = 0;
};

/// Padded, time-major batch of prefixes. Prefixes are aligned at their last
/// step, so example b occupies steps [steps - lengths[b], steps) and padding
/// comes first. Entry (s, b) lives at index s * size + b.
struct Batch {
    std::size_t size = 0;
    std::size_t steps = 0;
    std::vector<std::uint32_t> questions;
    std::vector<std::uint8_t> responses;
    std::vector<std::uint8_t> valid;
    std::vector<std::uint32_t> lengths;
    std::vector<std::uint32_t> targets;
    std::vector<std::uint8_t> labels;

    bool is_valid(std::size_t s, std::size_t b) const { return valid[s * size + b] != 0; }
    /// First padded step holding real data for example b.
    std::size_t first_step(std::size_t b) const { return steps - lengths[b]; }
};

/// Pads and aligns prefixes. Throws std::invalid_argument on an empty prefix.
Batch make_batch(std::span<const PrefixView> examples);

}  // namespace kt
