#include "kt/evaluation/reports.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "kt/training/training.hpp"

namespace kt {

namespace {

using Json = nlohmann::json;

std::string cell_text(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isnan(d)) return "nan";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", d);
        return buf;
    }
    if (v.is_array()) {
        std::string out;
        for (const auto& x : v) out += (out.empty() ? "" : "|") + cell_text(x);
        return out;
    }
    return v.dump();
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json tag_list(const std::set<std::string>& tags) { return Json(std::vector<std::string>(tags.begin(), tags.end())); }

struct MeanCi {
    double mean = 0, low = 0, high = 0;
};

// Mean with a 95% interval from the cluster-robust standard error: values
// sharing a cluster id are treated as dependent. Fewer than two clusters give
// an unbounded interval.
MeanCi clustered_mean_ci(const std::vector<double>& xs, const std::vector<std::size_t>& cluster) {
    MeanCi r;
    if (xs.empty()) return r;
    const double n = double(xs.size());
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    std::map<std::size_t, double> resid;
    for (std::size_t i = 0; i < xs.size(); ++i) resid[cluster[i]] += xs[i] - r.mean;
    const double c = double(resid.size());
    if (resid.size() < 2) {
        r.low = -std::numeric_limits<double>::infinity();
        r.high = std::numeric_limits<double>::infinity();
        return r;
    }
    double ss = 0;
    for (const auto& [id, e] : resid) ss += e * e;
    const double se = std::sqrt(c / (c - 1) * ss) / n;
    r.low = r.mean - 1.96 * se;
    r.high = r.mean + 1.96 * se;
    return r;
}

std::span<const float> embedding(const Parameters<float>& params, std::size_t index) {
    return params.tensor(params.layout().question_embed).row(index);
}

}  // namespace

void write_tsv(std::ostream& out, const Table& table) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "\t" : "") << table.columns[c];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << cell_text(row[c]);
        out << '\n';
    }
}

void write_jsonl(std::ostream& out, const Table& table) {
    for (const auto& row : table.rows) {
        Json obj = Json::object();
        for (std::size_t c = 0; c < row.size(); ++c) obj[table.columns[c]] = row[c];
        out << obj.dump() << '\n';
    }
}

std::vector<TimestepPoint> per_timestep(std::span<const double> predictions, std::span<const std::uint8_t> labels,
                                        std::span<const ExampleRef> examples, std::size_t max_step) {
    if (max_step < 2) throw std::invalid_argument("per_timestep: max_step must be >= 2");
    if (predictions.size() != examples.size() || labels.size() != examples.size())
        throw std::invalid_argument("per_timestep: predictions, labels and examples differ in length");
    std::vector<std::vector<std::size_t>> at(max_step + 1);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const std::size_t t = examples[i].t + 1;
        if (t <= max_step) at[t].push_back(i);
    }
    std::vector<TimestepPoint> points;
    std::vector<double> p;
    std::vector<std::uint8_t> y;
    for (std::size_t t = 2; t <= max_step; ++t) {
        if (at[t].empty()) continue;
        p.clear();
        y.clear();
        for (std::size_t i : at[t]) {
            p.push_back(predictions[i]);
            y.push_back(labels[i]);
        }
        points.push_back({t, at[t].size(), evaluate(p, y)});
    }
    return points;
}

Table timestep_table(const std::vector<TimestepPoint>& points) {
    Table t{{"t", "users", "auc", "f1", "acc"}, {}};
    for (const auto& p : points)
        t.rows.push_back({p.t, p.users, number(p.metrics.auc), number(p.metrics.f1), number(p.metrics.acc)});
    return t;
}

double curve_mean(const std::vector<TimestepPoint>& points, const std::string& metric, std::size_t lo,
                  std::size_t hi) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& p : points) {
        if (p.t < lo || p.t > hi) continue;
        const double v = metric == "auc" ? p.metrics.auc : metric == "f1" ? p.metrics.f1 : p.metrics.acc;
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
    }
    return n ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
}

double tag_matching_ratio(const std::set<std::string>& exhausted, const std::set<std::string>& potential) {
    if (potential.empty()) throw std::invalid_argument("tag_matching_ratio: potential question has no tags");
    std::size_t common = 0;
    for (const auto& t : potential) common += exhausted.count(t);
    return double(common) / double(potential.size());
}

AttentionTagReport attention_tag_report(const Parameters<float>& params,
                                        const std::vector<std::vector<Step>>& encoded, const Catalog& catalog,
                                        const std::vector<int>& ranks) {
    std::vector<ExampleRef> examples;
    for (const auto& ex : enumerate_examples(encoded))
        if (!catalog.tags(encoded[ex.user][ex.t].question).empty()) examples.push_back(ex);

    std::vector<double> sums(ranks.size(), 0.0);
    std::vector<std::size_t> counts(ranks.size(), 0);
    std::vector<double> gaps, slopes;
    std::vector<std::size_t> gap_users, slope_users;
    std::vector<std::size_t> order;
    std::vector<double> ratio;
    const std::size_t window = params.config().window;

    for_each_prediction<float>(
        params, encoded, examples, 256, [&](const Engine<float>& eng, std::size_t b, std::size_t i) {
            const ExampleRef& ex = examples[i];
            const auto view = prefix_view(encoded, ex, window);
            const std::size_t len = view.prefix.size();
            const std::size_t s0 = eng.batch().first_step(b);
            const auto& potential = catalog.tags(view.target);
            order.resize(len);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
                return eng.attention_weight(b, s0 + x) > eng.attention_weight(b, s0 + y);
            });
            ratio.resize(len);
            for (std::size_t r = 0; r < len; ++r)
                ratio[r] = tag_matching_ratio(catalog.tags(view.prefix[order[r]].question), potential);

            for (std::size_t k = 0; k < ranks.size(); ++k) {
                const int rank = ranks[k];
                const std::size_t need = std::size_t(std::abs(rank));
                if (rank == 0 || need > len) continue;
                sums[k] += rank > 0 ? ratio[need - 1] : ratio[len - need];
                ++counts[k];
            }
            if (len >= 6) {
                const double top = (ratio[0] + ratio[1] + ratio[2]) / 3.0;
                const double bottom = (ratio[len - 1] + ratio[len - 2] + ratio[len - 3]) / 3.0;
                gaps.push_back(top - bottom);
                gap_users.push_back(ex.user);
            }
            if (len >= 2) {
                const double mean_rank = double(len + 1) / 2.0;
                const double mean_ratio = std::accumulate(ratio.begin(), ratio.end(), 0.0) / double(len);
                double sxy = 0, sxx = 0;
                for (std::size_t r = 0; r < len; ++r) {
                    sxy += (double(r + 1) - mean_rank) * (ratio[r] - mean_ratio);
                    sxx += (double(r + 1) - mean_rank) * (double(r + 1) - mean_rank);
                }
                slopes.push_back(sxy / sxx);
                slope_users.push_back(ex.user);
            }
        });

    AttentionTagReport rep;
    rep.predictions = examples.size();
    for (std::size_t k = 0; k < ranks.size(); ++k)
        rep.ranks.push_back({ranks[k], counts[k] ? sums[k] / double(counts[k]) : 0.0, counts[k]});
    const auto g = clustered_mean_ci(gaps, gap_users);
    rep.gap = g.mean;
    rep.gap_ci_low = g.low;
    rep.gap_ci_high = g.high;
    rep.gap_predictions = gaps.size();
    const auto s = clustered_mean_ci(slopes, slope_users);
    rep.slope = s.mean;
    rep.slope_ci_low = s.low;
    rep.slope_ci_high = s.high;
    return rep;
}

Table attention_table(const AttentionTagReport& report) {
    Table t{{"rank", "mean_tag_matching_ratio", "predictions"}, {}};
    for (const auto& r : report.ranks) t.rows.push_back({r.rank, number(r.mean_ratio), r.count});
    return t;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    if (aa == 0 || bb == 0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

namespace {

// Indices of the k nearest questions to `query` by cosine, excluding `skip`.
std::vector<std::pair<std::size_t, double>> nearest(const Parameters<float>& params, std::size_t vocab,
                                                    std::span<const float> query, const std::set<std::size_t>& skip,
                                                    std::size_t k) {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t j = 0; j < vocab; ++j)
        if (!skip.count(j)) all.emplace_back(j, cosine(query, embedding(params, j)));
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(), [](const auto& x, const auto& y) {
        return x.second > y.second || (x.second == y.second && x.first < y.first);
    });
    all.resize(k);
    return all;
}

}  // namespace

std::vector<NeighborRow> embedding_neighbors(const Parameters<float>& params, const Catalog& catalog,
                                             const std::vector<std::string>& queries, std::size_t k) {
    std::vector<NeighborRow> rows;
    for (const auto& q : queries) {
        const std::size_t qi = catalog.index(q);
        for (const auto& [j, sim] : nearest(params, catalog.vocab(), embedding(params, qi), {qi}, k))
            rows.push_back({q, catalog.id(j), sim});
    }
    return rows;
}

std::vector<AnalogyRow> embedding_analogies(const Parameters<float>& params, const Catalog& catalog,
                                            const std::vector<std::array<std::string, 3>>& triples) {
    std::vector<AnalogyRow> rows;
    std::vector<float> target(params.config().d_embed);
    for (const auto& [a, b, c] : triples) {
        const std::size_t ia = catalog.index(a), ib = catalog.index(b), ic = catalog.index(c);
        const auto va = embedding(params, ia), vb = embedding(params, ib), vc = embedding(params, ic);
        for (std::size_t j = 0; j < target.size(); ++j) target[j] = va[j] - vb[j] + vc[j];
        const auto best = nearest(params, catalog.vocab(), target, {ia, ib, ic}, 1);
        if (best.empty()) continue;
        AnalogyRow row{a, b, c, catalog.id(best[0].first), best[0].second, {}, catalog.tags(best[0].first), 0};
        for (const auto& t : catalog.tags(ia))
            if (!catalog.tags(ib).count(t)) row.predicted_tags.insert(t);
        for (const auto& t : catalog.tags(ic)) row.predicted_tags.insert(t);
        for (const auto& t : row.predicted_tags) row.overlap += row.d_tags.count(t);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::array<std::string, 3>> sample_triples(const Catalog& catalog, std::size_t count, std::uint64_t seed) {
    if (catalog.vocab() < 4) throw std::invalid_argument("sample_triples: need at least 4 questions");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, catalog.vocab() - 1);
    std::vector<std::array<std::string, 3>> out;
    while (out.size() < count) {
        const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || a == c || b == c) continue;
        out.push_back({catalog.id(a), catalog.id(b), catalog.id(c)});
    }
    return out;
}

TagCosineSummary tag_cosine_summary(const Parameters<float>& params, const Catalog& catalog) {
    TagCosineSummary s;
    double same = 0, all = 0;
    for (std::size_t i = 0; i < catalog.vocab(); ++i)
        for (std::size_t j = i + 1; j < catalog.vocab(); ++j) {
            const double c = cosine(embedding(params, i), embedding(params, j));
            all += c;
            ++s.random_pairs;
            if (!catalog.tags(i).empty() && catalog.tags(i) == catalog.tags(j)) {
                same += c;
                ++s.same_tag_pairs;
            }
        }
    s.same_tag_mean = s.same_tag_pairs ? same / double(s.same_tag_pairs) : std::nan("");
    s.random_mean = s.random_pairs ? all / double(s.random_pairs) : std::nan("");
    return s;
}

Table neighbor_table(const std::vector<NeighborRow>& rows, const Catalog& catalog) {
    Table t{{"query", "neighbor", "cosine", "query_tags", "neighbor_tags"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({r.query, r.neighbor, number(r.similarity), tag_list(catalog.tags(catalog.index(r.query))),
                          tag_list(catalog.tags(catalog.index(r.neighbor)))});
    return t;
}

Table analogy_table(const std::vector<AnalogyRow>& rows) {
    Table t{{"a", "b", "c", "d", "cosine", "predicted_tags", "d_tags", "overlap"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({r.a, r.b, r.c, r.d, number(r.similarity), tag_list(r.predicted_tags), tag_list(r.d_tags),
                          r.overlap});
    return t;
}

}  // namespace kt
