#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "kt/data/dataset.hpp"
#include "kt/evaluation/metrics.hpp"
#include "kt/model/parameters.hpp"

namespace kt {

/// Rows of typed cells, written as TSV or as one JSON object per line.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
};

void write_tsv(std::ostream& out, const Table& table);
void write_jsonl(std::ostream& out, const Table& table);

// ---------------------------------------------------------------- per-timestep

/// Metrics over the predictions at sequence position t (1-based; position t
/// has t - 1 history interactions).
struct TimestepPoint {
    std::size_t t = 0;
    std::size_t users = 0;
    MetricsReport metrics;
};

/// Points for t in [2, max_step]; positions no user reaches are omitted.
std::vector<TimestepPoint> per_timestep(std::span<const double> predictions, std::span<const std::uint8_t> labels,
                                        std::span<const ExampleRef> examples, std::size_t max_step);

Table timestep_table(const std::vector<TimestepPoint>& points);

/// Mean of a curve metric ("auc", "f1", "acc") over t in [lo, hi], skipping NaN.
double curve_mean(const std::vector<TimestepPoint>& points, const std::string& metric, std::size_t lo,
                  std::size_t hi);

// ---------------------------------------------------------------- attention and tags

/// |exhausted ∩ potential| / |potential|. Throws on an empty potential set.
double tag_matching_ratio(const std::set<std::string>& exhausted, const std::set<std::string>& potential);

struct RankRow {
    int rank = 0;  // 1 = most attended; -1 = least attended
    double mean_ratio = 0;
    std::size_t count = 0;
};

struct AttentionTagReport {
    std::vector<RankRow> ranks;
    /// Mean of (top-3 ratio mean − bottom-3 ratio mean) over predictions with
    /// at least 6 history steps, with a 95% interval clustered by user.
    double gap = 0, gap_ci_low = 0, gap_ci_high = 0;
    std::size_t gap_predictions = 0;
    /// Mean per-prediction least-squares slope of ratio against rank, with a
    /// 95% interval clustered by user.
    double slope = 0, slope_ci_low = 0, slope_ci_high = 0;
    std::size_t predictions = 0;
};

/// Ranks exhausted questions by attention weight (ties by position) for every
/// prediction whose target has tags.
AttentionTagReport attention_tag_report(const Parameters<float>& params,
                                        const std::vector<std::vector<Step>>& encoded, const Catalog& catalog,
                                        const std::vector<int>& ranks);

Table attention_table(const AttentionTagReport& report);

// ---------------------------------------------------------------- embeddings

double cosine(std::span<const float> a, std::span<const float> b);

struct NeighborRow {
    std::string query, neighbor;
    double similarity = 0;
};

/// Top-k question neighbours of each query by cosine similarity of the
/// question embeddings (ties by index). Throws std::out_of_range on unknown ids.
std::vector<NeighborRow> embedding_neighbors(const Parameters<float>& params, const Catalog& catalog,
                                             const std::vector<std::string>& queries, std::size_t k);

struct AnalogyRow {
    std::string a, b, c, d;
    double similarity = 0;
    std::set<std::string> predicted_tags;  // (tags(a) \ tags(b)) ∪ tags(c)
    std::set<std::string> d_tags;
    std::size_t overlap = 0;               // |predicted ∩ tags(d)|
};

/// Nearest neighbour d of a − b + c, excluding a, b and c.
std::vector<AnalogyRow> embedding_analogies(const Parameters<float>& params, const Catalog& catalog,
                                            const std::vector<std::array<std::string, 3>>& triples);

/// Seeded sample of `count` distinct-question triples.
std::vector<std::array<std::string, 3>> sample_triples(const Catalog& catalog, std::size_t count,
                                                       std::uint64_t seed);

struct TagCosineSummary {
    double same_tag_mean = 0;
    std::size_t same_tag_pairs = 0;
    double random_mean = 0;
    std::size_t random_pairs = 0;
};

/// Mean cosine over all pairs of distinct questions with identical nonempty
/// tag sets, against the mean over all pairs of distinct questions.
TagCosineSummary tag_cosine_summary(const Parameters<float>& params, const Catalog& catalog);

Table neighbor_table(const std::vector<NeighborRow>& rows, const Catalog& catalog);
Table analogy_table(const std::vector<AnalogyRow>& rows);

}  // namespace kt
