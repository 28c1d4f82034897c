#include "kt/data/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace kt {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(purpose),
                      std::uint32_t(index), std::uint32_t(index >> 32)};
    return std::mt19937_64(seq);
}

std::string padded(char prefix, std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
    return buf;
}

constexpr std::uint64_t kItemStream = 1;
constexpr std::uint64_t kUserStream = 2;

}  // namespace

SelectionPolicy parse_selection_policy(const std::string& text) {
    if (text == "uniform") return SelectionPolicy::uniform;
    if (text == "adaptive") return SelectionPolicy::adaptive;
    throw std::invalid_argument("unknown selection policy '" + text + "' (expected uniform or adaptive)");
}

std::string to_string(SelectionPolicy policy) {
    return policy == SelectionPolicy::uniform ? "uniform" : "adaptive";
}

void SimConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument("simulator config: " + msg);
    };
    require(n_users >= 1, "n_users must be >= 1");
    require(n_questions >= 1, "n_questions must be >= 1");
    require(n_tags >= 1, "n_tags must be >= 1");
    require(sequence_length >= 1, "sequence_length must be >= 1");
    require(tags_min >= 1 && tags_min <= tags_max, "tags_per_question range must satisfy 1 <= min <= max");
    require(discrimination_sigma >= 0, "discrimination_sigma must be >= 0");
    require(learning_gain >= 0, "learning_gain must be >= 0");
    require(sequence_length <= n_questions,
            "sequence_length " + std::to_string(sequence_length) + " exceeds n_questions " +
                std::to_string(n_questions) + " (items are drawn without replacement)");
}

std::string sim_question_id(std::size_t j) { return padded('q', j, 5); }
std::string sim_user_id(std::size_t i) { return padded('u', i, 6); }
std::string sim_tag_name(std::size_t k) { return padded('t', k, 3); }

double item_probability(const SimItem& item, const std::vector<double>& theta) {
    double ability = 0;
    for (std::size_t k : item.tags) ability += theta[k];
    ability /= double(item.tags.size());
    return 1.0 / (1.0 + std::exp(-item.discrimination * (ability - item.difficulty)));
}

std::vector<SimItem> simulate_items(const SimConfig& config) {
    config.validate();
    auto rng = stream(config.seed, kItemStream, 0);
    std::normal_distribution<double> log_a(0.0, config.discrimination_sigma);
    std::normal_distribution<double> diff(0.0, 1.0);
    const std::size_t hi = std::min(config.tags_max, config.n_tags);
    const std::size_t lo = std::min(config.tags_min, hi);
    std::uniform_int_distribution<std::size_t> count(lo, hi);

    std::vector<SimItem> items(config.n_questions);
    std::vector<std::size_t> pool(config.n_tags);
    for (auto& item : items) {
        item.discrimination = config.discrimination_sigma > 0 ? std::exp(log_a(rng)) : 1.0;
        item.difficulty = diff(rng);
        std::iota(pool.begin(), pool.end(), 0);
        const std::size_t c = count(rng);
        for (std::size_t k = 0; k < c; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        item.tags.assign(pool.begin(), pool.begin() + c);
        std::sort(item.tags.begin(), item.tags.end());
    }
    return items;
}

SimResult simulate(const SimConfig& config) {
    SimResult out;
    out.items = simulate_items(config);
    for (std::size_t j = 0; j < config.n_questions; ++j) {
        out.question_ids.push_back(sim_question_id(j));
        for (std::size_t k : out.items[j].tags) out.tags[out.question_ids[j]].insert(sim_tag_name(k));
    }
    out.sequences.reserve(config.n_users);
    out.truth.reserve(config.n_users * config.sequence_length);

    std::vector<double> theta(config.n_tags);
    std::vector<std::size_t> remaining(config.n_questions);
    for (std::size_t i = 0; i < config.n_users; ++i) {
        auto rng = stream(config.seed, kUserStream, i);
        std::normal_distribution<double> ability(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (auto& t : theta) t = ability(rng);
        remaining.resize(config.n_questions);
        std::iota(remaining.begin(), remaining.end(), 0);

        UserSequence seq{sim_user_id(i), {}};
        for (std::size_t step = 0; step < config.sequence_length; ++step) {
            std::size_t slot = 0;
            if (config.policy == SelectionPolicy::uniform) {
                std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
                slot = pick(rng);
            } else {
                double best = 2.0;
                for (std::size_t s = 0; s < remaining.size(); ++s) {
                    const double gap = std::abs(item_probability(out.items[remaining[s]], theta) - 0.5);
                    if (gap < best || (gap == best && remaining[s] < remaining[slot])) {
                        best = gap;
                        slot = s;
                    }
                }
            }
            const std::size_t j = remaining[slot];
            remaining[slot] = remaining.back();
            remaining.pop_back();

            const double p = item_probability(out.items[j], theta);
            const bool correct = unit(rng) < p;
            for (std::size_t k : out.items[j].tags) theta[k] += config.learning_gain;

            seq.interactions.push_back({seq.user_id, out.question_ids[j], std::uint8_t(correct),
                                        static_cast<std::int64_t>(step) * 60000});
            out.truth.push_back({seq.user_id, step, out.question_ids[j], p});
        }
        out.sequences.push_back(std::move(seq));
    }
    return out;
}

void write_truth(std::ostream& out, const std::vector<TruthRow>& truth) {
    out << "user_id,step,question_id,true_p\n";
    char buf[64];
    for (const auto& row : truth) {
        std::snprintf(buf, sizeof buf, "%.17g", row.true_p);
        out << row.user_id << ',' << row.step << ',' << row.question_id << ',' << buf << '\n';
    }
}

std::vector<TruthRow> parse_truth(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError("missing truth header", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "user_id,step,question_id,true_p")
        throw DataError("expected header 'user_id,step,question_id,true_p'", 1);
    std::vector<TruthRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t c; (c = line.find(',', start)) != std::string::npos; start = c + 1)
            f.push_back(line.substr(start, c - start));
        f.push_back(line.substr(start));
        if (f.size() != 4) throw DataError("expected 4 fields", line_no);
        TruthRow row{f[0], 0, f[2], 0.0};
        auto [e1, ec1] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), row.step);
        char* end = nullptr;
        row.true_p = std::strtod(f[3].c_str(), &end);
        if (ec1 != std::errc() || e1 != f[1].data() + f[1].size() || end != f[3].c_str() + f[3].size() ||
            !(row.true_p >= 0.0 && row.true_p <= 1.0))
            throw DataError("malformed step or probability", line_no);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace kt
