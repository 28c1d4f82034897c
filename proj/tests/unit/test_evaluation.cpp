#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "kt/data/simulator.hpp"
#include "kt/evaluation/reports.hpp"
#include "kt/training/training.hpp"

using namespace kt;

namespace {

using Labels = std::vector<std::uint8_t>;

double brute_auc(const std::vector<double>& s, const Labels& y) {
    double wins = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg)++;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    return wins / (double(pos) * double(neg));
}

struct Counts {
    std::size_t tp, fp, tn, fn;
};

Counts brute_counts(const std::vector<double>& p, const Labels& y) {
    Counts c{0, 0, 0, 0};
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pred = !(p[i] < 0.5);
        if (pred && y[i]) ++c.tp;
        if (pred && !y[i]) ++c.fp;
        if (!pred && !y[i]) ++c.tn;
        if (!pred && y[i]) ++c.fn;
    }
    return c;
}

ModelConfig tiny_model(std::size_t vocab, AttentionKind attention) {
    ModelConfig cfg;
    cfg.question_vocab = vocab;
    cfg.d_embed = 6;
    cfg.d_lstm = 4;
    cfg.lstm_layers = 1;
    cfg.d_attn = 5;
    cfg.head_dims = {4};
    cfg.window = 12;
    cfg.attention = attention;
    return cfg;
}

// Parameters whose question embeddings are the given rows.
Parameters<float> with_embeddings(const Catalog& catalog, const std::vector<std::vector<float>>& rows) {
    ModelConfig cfg = tiny_model(catalog.vocab(), AttentionKind::additive);
    cfg.d_embed = rows.front().size();
    Parameters<float> p(cfg);
    auto& e = p.tensor(p.layout().question_embed);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) e(i, j) = rows[i][j];
    return p;
}

}  // namespace

TEST_CASE("auc examples and the undefined single-class case") {
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3}, Labels{1, 1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.2, 0.8}, Labels{1, 0}) == 0.0);
    CHECK(auc(std::vector<double>{0.5, 0.5}, Labels{1, 0}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.7}, Labels{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1}, Labels{1, 0}), std::invalid_argument);
    CHECK(std::isnan(evaluate(std::vector<double>{0.3, 0.6}, Labels{0, 0}).auc));
}

TEST_CASE("auc equals brute-force pair counting") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        // Coarse grid so ties are common.
        const int levels = 1 + int(rng() % 12);
        std::vector<double> s(n);
        Labels y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = double(rng() % (levels + 1)) / levels;
            y[i] = rng() % 2;
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(auc(s, y) == brute_auc(s, y));
    }
}

TEST_CASE("binary_metrics confusion table") {
    SUBCASE("worked example") {
        const auto r = binary_metrics(std::vector<double>{0.9, 0.9, 0.1, 0.1}, Labels{1, 0, 1, 0});
        CHECK(r.tp == 1);
        CHECK(r.fp == 1);
        CHECK(r.fn == 1);
        CHECK(r.tn == 1);
        CHECK(r.acc == 0.5);
        CHECK(r.f1 == 0.5);
    }
    SUBCASE("perfect and all-negative") {
        const auto perfect = binary_metrics(std::vector<double>{0.8, 0.2, 0.6}, Labels{1, 0, 1});
        CHECK(perfect.acc == 1.0);
        CHECK(perfect.f1 == 1.0);
        const auto none = binary_metrics(std::vector<double>{0.1, 0.2, 0.3}, Labels{1, 0, 1});
        CHECK(none.f1 == 0.0);
        CHECK(none.tp + none.fp == 0);
    }
    SUBCASE("fixed cases against hand counts") {
        struct Case {
            std::vector<double> p;
            Labels y;
            Counts want;
        };
        const std::vector<Case> cases = {
            {{0.5}, {1}, {1, 0, 0, 0}},
            {{0.5}, {0}, {0, 1, 0, 0}},
            {{0.4999}, {1}, {0, 0, 0, 1}},
            {{0.0}, {0}, {0, 0, 1, 0}},
            {{1.0, 0.0}, {1, 0}, {1, 0, 1, 0}},
            {{1.0, 0.0}, {0, 1}, {0, 1, 0, 1}},
            {{0.7, 0.7, 0.7}, {1, 1, 0}, {2, 1, 0, 0}},
            {{0.2, 0.3, 0.4}, {0, 0, 0}, {0, 0, 3, 0}},
            {{0.6, 0.2, 0.8, 0.1}, {1, 1, 0, 0}, {1, 1, 1, 1}},
            {{0.51, 0.49, 0.5, 0.5}, {1, 0, 0, 1}, {2, 1, 1, 0}},
            {{0.9, 0.8, 0.7, 0.6, 0.4}, {1, 1, 1, 1, 1}, {4, 0, 0, 1}},
            {{0.3, 0.9, 0.3, 0.9, 0.3, 0.9}, {0, 0, 0, 1, 1, 1}, {2, 1, 2, 1}},
        };
        for (const auto& c : cases) {
            const auto r = binary_metrics(c.p, c.y);
            CHECK(r.tp == c.want.tp);
            CHECK(r.fp == c.want.fp);
            CHECK(r.tn == c.want.tn);
            CHECK(r.fn == c.want.fn);
        }
    }
    SUBCASE("random inputs satisfy the count and formula identities") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng() % 60;
            std::vector<double> p(n);
            Labels y(n);
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = std::round(u(rng) * 8) / 8;
                y[i] = rng() % 2;
            }
            const auto r = binary_metrics(p, y);
            const auto c = brute_counts(p, y);
            CHECK(r.tp == c.tp);
            CHECK(r.fp == c.fp);
            CHECK(r.tn == c.tn);
            CHECK(r.fn == c.fn);
            CHECK(r.tp + r.fp + r.tn + r.fn == r.n);
            CHECK(r.acc == doctest::Approx(double(c.tp + c.tn) / double(n)));
            const double prec = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
            const double rec = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
            CHECK(r.f1 == doctest::Approx(prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0));
        }
    }
    CHECK_THROWS_AS(binary_metrics(std::vector<double>{0.1, 0.2}, Labels{1}), std::invalid_argument);
}

TEST_CASE("oracle auc on two-level probabilities") {
    // Balanced draws from P in {0.1, 0.9}. A positive comes from the 0.9 group
    // with probability 0.9 and a negative from the 0.1 group with probability
    // 0.9, so AUC = 0.9 * 0.9 + 0.5 * (2 * 0.9 * 0.1) = 0.9.
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 10000;
    std::vector<double> p(n);
    Labels y(n);
    std::size_t pos_hi = 0, pos_lo = 0, neg_hi = 0, neg_lo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = i % 2 ? 0.9 : 0.1;
        y[i] = u(rng) < p[i];
        if (y[i]) (p[i] > 0.5 ? pos_hi : pos_lo)++;
        else (p[i] > 0.5 ? neg_hi : neg_lo)++;
    }
    const double counted = (double(pos_hi) * neg_lo + 0.5 * (double(pos_hi) * neg_hi + double(pos_lo) * neg_lo)) /
                           (double(pos_hi + pos_lo) * double(neg_hi + neg_lo));
    CHECK(oracle_auc(p, y) == doctest::Approx(counted).epsilon(1e-12));
    CHECK(oracle_auc(p, y) == doctest::Approx(0.9).epsilon(0.01));

    std::vector<double> flat(n, 0.6);
    for (std::size_t i = 0; i < n; ++i) y[i] = u(rng) < 0.6;
    CHECK(oracle_auc(flat, y) == 0.5);
}

TEST_CASE("tag matching ratio") {
    using S = std::set<std::string>;
    CHECK(tag_matching_ratio({"a", "b"}, {"b", "c"}) == 0.5);
    CHECK(tag_matching_ratio({"a", "b"}, {"a", "b"}) == 1.0);
    CHECK(tag_matching_ratio({"x"}, {"a", "b"}) == 0.0);
    CHECK(tag_matching_ratio({}, {"a"}) == 0.0);
    CHECK_THROWS_AS(tag_matching_ratio({"a"}, S{}), std::invalid_argument);

    // Adding tags to the exhausted set never lowers the ratio.
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        S exhausted, potential;
        for (int k = 0; k < 6; ++k) {
            if (rng() % 2) exhausted.insert(std::string(1, char('a' + rng() % 8)));
            if (rng() % 2) potential.insert(std::string(1, char('a' + rng() % 8)));
        }
        if (potential.empty()) potential.insert("a");
        const double before = tag_matching_ratio(exhausted, potential);
        exhausted.insert(std::string(1, char('a' + rng() % 8)));
        CHECK(tag_matching_ratio(exhausted, potential) >= before);
    }
}

TEST_CASE("per-timestep curve indexing") {
    // Three users of lengths 4, 3 and 2.
    const std::vector<std::vector<Step>> encoded = {
        {{0, 1}, {1, 0}, {2, 1}, {0, 1}}, {{1, 1}, {2, 0}, {0, 0}}, {{2, 0}, {1, 1}}};
    const auto examples = enumerate_examples(encoded);
    std::vector<double> preds;
    Labels labels;
    for (const auto& ex : examples) {
        preds.push_back(0.1 * double(ex.user + 1));
        labels.push_back(encoded[ex.user][ex.t].response);
    }
    const auto points = per_timestep(preds, labels, examples, 10);
    REQUIRE(points.size() == 3);
    CHECK(points[0].t == 2);
    CHECK(points[0].users == 3);
    CHECK(points[1].t == 3);
    CHECK(points[1].users == 2);
    CHECK(points[2].t == 4);
    CHECK(points[2].users == 1);
    for (std::size_t i = 1; i < points.size(); ++i) CHECK(points[i].users <= points[i - 1].users);

    // t = 2 predicts each user's second interaction from exactly one prior step.
    std::size_t at_two = 0;
    for (const auto& ex : examples)
        if (ex.t + 1 == 2) {
            CHECK(prefix_view(encoded, ex, 50).prefix.size() == 1);
            ++at_two;
        }
    CHECK(at_two == points[0].users);
    // t = 2 labels are {0, 0, 1}; predictions 0.1, 0.2, 0.3 by user.
    CHECK(points[0].metrics.acc == doctest::Approx(2.0 / 3.0));

    CHECK(per_timestep(preds, labels, examples, 3).size() == 2);
    CHECK_THROWS_AS(per_timestep(preds, labels, examples, 1), std::invalid_argument);

    std::vector<TimestepPoint> curve(3);
    for (std::size_t i = 0; i < 3; ++i) {
        curve[i].t = i + 2;
        curve[i].metrics.auc = 0.5 + 0.1 * double(i);
    }
    curve[1].metrics.auc = std::nan("");
    CHECK(curve_mean(curve, "auc", 2, 4) == doctest::Approx(0.6));
    CHECK(std::isnan(curve_mean(curve, "auc", 10, 20)));
}

TEST_CASE("tables as tsv and jsonl") {
    Table t{{"name", "value", "tags"}, {}};
    t.rows.push_back({"q1", 0.25, nlohmann::json::array({"a", "b"})});
    t.rows.push_back({"q2", 3, nlohmann::json(nullptr)});
    std::ostringstream tsv, jsonl;
    write_tsv(tsv, t);
    write_jsonl(jsonl, t);
    CHECK(tsv.str() == "name\tvalue\ttags\nq1\t0.250000\ta|b\nq2\t3\tnull\n");
    CHECK(jsonl.str() == "{\"name\":\"q1\",\"tags\":[\"a\",\"b\"],\"value\":0.25}\n"
                         "{\"name\":\"q2\",\"tags\":null,\"value\":3}\n");
}

TEST_CASE("cosine, neighbours and analogies") {
    const std::vector<float> v{0.3f, -1.2f, 2.0f};
    CHECK(cosine(v, v) == doctest::Approx(1.0));
    const std::vector<float> w{-0.3f, 1.2f, -2.0f};
    CHECK(cosine(v, w) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine(v, std::vector<float>{1.0f}), std::invalid_argument);

    const Catalog catalog({"q0", "q1", "q2", "q3", "q4"},
                          {{"q0", {"x"}}, {"q1", {"x"}}, {"q2", {"y"}}, {"q3", {"x", "y"}}, {"q4", {"z"}}});
    const auto params =
        with_embeddings(catalog, {{1, 0, 0}, {0.9f, 0.1f, 0}, {0, 1, 0}, {0.6f, 0.6f, 0}, {0, 0, 1}});

    const auto nb = embedding_neighbors(params, catalog, {"q0"}, 2);
    REQUIRE(nb.size() == 2);
    CHECK(nb[0].neighbor == "q1");
    CHECK(nb[1].neighbor == "q3");
    CHECK(nb[0].similarity > nb[1].similarity);
    CHECK_THROWS_AS(embedding_neighbors(params, catalog, {"nope"}, 2), std::out_of_range);

    const auto an = embedding_analogies(params, catalog, {{"q3", "q0", "q1"}});
    REQUIRE(an.size() == 1);
    // vec = (0.5, 0.7, 0); excluding q3, q0, q1 the closest is q2.
    CHECK(an[0].d == "q2");
    CHECK(an[0].predicted_tags == std::set<std::string>{"x", "y"});
    CHECK(an[0].overlap == 1);

    // b == c cancels: the answer is a's nearest neighbour outside {a, b}.
    for (const std::string a : {"q0", "q2", "q4"}) {
        const std::string b = a == "q4" ? "q0" : "q4";
        const auto row = embedding_analogies(params, catalog, {{a, b, b}});
        std::string expect;
        for (const auto& n : embedding_neighbors(params, catalog, {a}, 5))
            if (n.neighbor != b) {
                expect = n.neighbor;
                break;
            }
        CHECK(row[0].d == expect);
    }

    const auto summary = tag_cosine_summary(params, catalog);
    CHECK(summary.same_tag_pairs == 1);  // q0 and q1
    CHECK(summary.random_pairs == 10);
    const double expected = cosine(std::vector<float>{1, 0, 0}, std::vector<float>{0.9f, 0.1f, 0});
    CHECK(summary.same_tag_mean == doctest::Approx(expected));
    CHECK(summary.same_tag_mean > summary.random_mean);

    const auto triples = sample_triples(catalog, 50, 3);
    CHECK(triples.size() == 50);
    for (const auto& [a, b, c] : triples) CHECK((a != b && b != c && a != c));
    CHECK(triples == sample_triples(catalog, 50, 3));
}

TEST_CASE("attention tag report under uniform attention shows no rank trend") {
    SimConfig sim;
    sim.n_users = 60;
    sim.n_questions = 40;
    sim.n_tags = 4;
    sim.sequence_length = 25;
    sim.seed = 11;
    const auto data = simulate(sim);
    const Catalog catalog(data.question_ids, data.tags);
    std::vector<std::vector<Step>> encoded;
    for (const auto& s : data.sequences) encoded.push_back(catalog.encode(s));

    const auto params = xavier_init<float>(tiny_model(catalog.vocab(), AttentionKind::none), 3);
    const auto rep = attention_tag_report(params, encoded, catalog, {1, 2, 3, -3, -2, -1});
    CHECK(rep.predictions >= 1000);
    for (const auto& r : rep.ranks) {
        CHECK(r.mean_ratio >= 0.0);
        CHECK(r.mean_ratio <= 1.0);
        CHECK(r.count > 0);
    }
    CHECK(rep.slope_ci_low <= 0.0);
    CHECK(rep.slope_ci_high >= 0.0);
    CHECK(rep.gap_ci_low <= 0.0);
    CHECK(rep.gap_ci_high >= 0.0);

    const auto table = attention_table(rep);
    CHECK(table.rows.size() == 6);
}
