#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kt/data/dataset.hpp"
#include "kt/model/parameters.hpp"

namespace kt {

struct CandidateScore {
    std::string question_id;
    double p = 0;
    /// Weights over the windowed history (empty for a cold start).
    std::vector<double> attention;
};

/// Scores every candidate against `history` (raw ids, oldest first) and
/// sorts ascending by p, ties by question id. An empty history yields
/// `prior` for every candidate. Throws on an empty pool.
std::vector<CandidateScore> score_pool(const Parameters<float>& params, const Catalog& catalog,
                                       const std::vector<Interaction>& history,
                                       const std::vector<std::string>& pool, double prior);

/// The k lowest-p candidates that are unanswered and have p <= eliminate_above.
std::vector<std::string> recommend_next(const std::vector<CandidateScore>& scores,
                                        const std::set<std::string>& answered, std::size_t k,
                                        double eliminate_above = 0.85);

struct ReviewPair {
    std::string weak_question;
    std::string review_question;
    double attention = 0;
    std::uint8_t response = 0;
    std::size_t history_position = 0;  // index into the full history
};

/// The most-attended incorrectly answered interaction in the model's window
/// when predicting `weak_question`; ties go to the smaller question id, then
/// the later interaction.
std::optional<ReviewPair> smart_review_pair(const Parameters<float>& params, const Catalog& catalog,
                                            const std::vector<Interaction>& history,
                                            const std::string& weak_question);

using DiagnosticHistory = std::vector<std::pair<std::string, std::uint8_t>>;
using DiagnosticPredictor = std::function<double(const DiagnosticHistory&, const std::string&)>;
using DiagnosticResponder = std::function<std::uint8_t(const std::string&)>;

/// Greedy maximum-uncertainty test: each step asks the unasked pool item
/// whose predicted p is closest to 0.5 (ties by question id) and records the
/// response. Throws if the pool has fewer than `steps` items.
std::vector<std::string> adaptive_diagnostic(const DiagnosticPredictor& predict,
                                             const DiagnosticResponder& respond,
                                             const std::vector<std::string>& pool, std::size_t steps = 6);

/// Predictor backed by the model, with `prior` for an empty history.
DiagnosticPredictor model_predictor(const Parameters<float>& params, const Catalog& catalog, double prior);

}  // namespace kt
