#include "kt/review/review.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kt/model/engine.hpp"
#include "kt/model/model.hpp"

namespace kt {

namespace {

std::vector<Step> encode_history(const Catalog& catalog, const std::vector<Interaction>& history) {
    std::vector<Step> steps;
    steps.reserve(history.size());
    for (const auto& x : history) steps.push_back({catalog.index_or_unknown(x.question_id), x.correct});
    return steps;
}

}  // namespace

std::vector<CandidateScore> score_pool(const Parameters<float>& params, const Catalog& catalog,
                                       const std::vector<Interaction>& history,
                                       const std::vector<std::string>& pool, double prior) {
    if (pool.empty()) throw std::invalid_argument("score_pool: empty candidate pool");
    std::vector<CandidateScore> scores;
    scores.reserve(pool.size());
    if (history.empty()) {
        for (const auto& q : pool) scores.push_back({q, prior, {}});
    } else {
        const auto steps = encode_history(catalog, history);
        const std::size_t window = params.config().window;
        const std::size_t begin = steps.size() > window ? steps.size() - window : 0;
        const std::span<const Step> prefix(steps.data() + begin, steps.size() - begin);
        std::vector<PrefixView> views;
        for (const auto& q : pool) views.push_back({prefix, catalog.index_or_unknown(q), 0});
        // One batch row per candidate: attention depends on the candidate, so
        // each row runs the full encoder.
        const Batch batch = make_batch(views);
        Engine<float> engine(params);
        const auto p = engine.forward(batch);
        for (std::size_t b = 0; b < pool.size(); ++b) {
            CandidateScore s{pool[b], double(p[b]), std::vector<double>(prefix.size())};
            for (std::size_t k = 0; k < prefix.size(); ++k) s.attention[k] = engine.attention_weight(b, k);
            scores.push_back(std::move(s));
        }
    }
    std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
        return a.p < b.p || (a.p == b.p && a.question_id < b.question_id);
    });
    return scores;
}

std::vector<std::string> recommend_next(const std::vector<CandidateScore>& scores,
                                        const std::set<std::string>& answered, std::size_t k,
                                        double eliminate_above) {
    std::vector<const CandidateScore*> keep;
    for (const auto& s : scores)
        if (!answered.count(s.question_id) && s.p <= eliminate_above) keep.push_back(&s);
    std::stable_sort(keep.begin(), keep.end(), [](const auto* a, const auto* b) {
        return a->p < b->p || (a->p == b->p && a->question_id < b->question_id);
    });
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto* s : keep) {
        if (out.size() == k) break;
        if (seen.insert(s->question_id).second) out.push_back(s->question_id);
    }
    return out;
}

std::optional<ReviewPair> smart_review_pair(const Parameters<float>& params, const Catalog& catalog,
                                            const std::vector<Interaction>& history,
                                            const std::string& weak_question) {
    if (history.empty()) return std::nullopt;
    const auto steps = encode_history(catalog, history);
    const auto trace = forward_step(params, steps, catalog.index_or_unknown(weak_question));
    const std::size_t begin = history.size() - trace.alpha.dim();
    std::optional<ReviewPair> best;
    for (std::size_t k = 0; k < trace.alpha.dim(); ++k) {
        const auto& x = history[begin + k];
        if (x.correct) continue;
        const double w = trace.alpha[k];
        if (!best || w > best->attention || (w == best->attention && x.question_id <= best->review_question))
            best = ReviewPair{weak_question, x.question_id, w, x.correct, begin + k};
    }
    return best;
}

std::vector<std::string> adaptive_diagnostic(const DiagnosticPredictor& predict,
                                             const DiagnosticResponder& respond,
                                             const std::vector<std::string>& pool, std::size_t steps) {
    std::vector<std::string> remaining(pool);
    std::sort(remaining.begin(), remaining.end());
    remaining.erase(std::unique(remaining.begin(), remaining.end()), remaining.end());
    if (remaining.size() < steps)
        throw std::invalid_argument("adaptive_diagnostic: pool of " + std::to_string(remaining.size()) +
                                    " distinct items is smaller than " + std::to_string(steps) + " steps");
    DiagnosticHistory history;
    std::vector<std::string> asked;
    for (std::size_t step = 0; step < steps; ++step) {
        std::size_t pick = 0;
        double best = 2.0;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            const double gap = std::abs(predict(history, remaining[i]) - 0.5);
            if (gap < best) {  // strict: the smaller id wins ties
                best = gap;
                pick = i;
            }
        }
        const std::string q = remaining[pick];
        remaining.erase(remaining.begin() + std::ptrdiff_t(pick));
        history.emplace_back(q, respond(q));
        asked.push_back(q);
    }
    return asked;
}

DiagnosticPredictor model_predictor(const Parameters<float>& params, const Catalog& catalog, double prior) {
    return [&params, &catalog, prior](const DiagnosticHistory& history, const std::string& q) {
        if (history.empty()) return prior;
        std::vector<Step> steps;
        for (const auto& [id, r] : history) steps.push_back({catalog.index_or_unknown(id), r});
        return double(forward_step(params, steps, catalog.index_or_unknown(q)).p);
    };
}

}  // namespace kt
