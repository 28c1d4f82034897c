#pragma once

// Synthetic students following a tag-driven 2PL response law:
//   P(correct) = σ(a_j · (mean_{k ∈ tags(j)} θ_k − b_j))
// with θ on the attempted item's tags raised by δ after every attempt.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kt/data/dataset.hpp"

namespace kt {

enum class SelectionPolicy { uniform, adaptive };

SelectionPolicy parse_selection_policy(const std::string& text);
std::string to_string(SelectionPolicy policy);

struct SimConfig {
    std::size_t n_users = 2000;
    std::size_t n_questions = 500;
    std::size_t n_tags = 10;
    std::size_t tags_min = 1;
    std::size_t tags_max = 3;
    std::size_t sequence_length = 100;
    double discrimination_sigma = 0.25;  // log a ~ Normal(0, sigma²)
    double learning_gain = 0.02;
    SelectionPolicy policy = SelectionPolicy::uniform;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct SimItem {
    double discrimination = 1.0;
    double difficulty = 0.0;
    std::vector<std::size_t> tags;
};

struct TruthRow {
    std::string user_id;
    std::size_t step = 0;  // 0-based position in the user's sequence
    std::string question_id;
    double true_p = 0.0;
};

struct SimResult {
    std::vector<UserSequence> sequences;
    TagTable tags;
    std::vector<SimItem> items;
    std::vector<std::string> question_ids;
    std::vector<TruthRow> truth;
};

std::string sim_question_id(std::size_t j);
std::string sim_user_id(std::size_t i);
std::string sim_tag_name(std::size_t k);

/// 2PL probability for an item given per-tag abilities.
double item_probability(const SimItem& item, const std::vector<double>& theta);

/// Items and tags depend on the seed only; users draw from per-user streams.
std::vector<SimItem> simulate_items(const SimConfig& config);
SimResult simulate(const SimConfig& config);

void write_truth(std::ostream& out, const std::vector<TruthRow>& truth);
std::vector<TruthRow> parse_truth(std::istream& in);

}  // namespace kt
