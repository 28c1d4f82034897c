#include "kt/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string_view>

namespace kt {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

// Reads the next line, stripping a trailing CR. Returns false at EOF.
bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void expect_header(std::istream& in, std::size_t& line_no, std::string_view header) {
    std::string line;
    if (!next_line(in, line, line_no)) throw DataError("missing header '" + std::string(header) + "'", 1);
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line != header)
        throw DataError("expected header '" + std::string(header) + "', got '" + line + "'", line_no);
}

}  // namespace

ParseResult parse_interactions(std::istream& in) {
    std::size_t line_no = 0;
    expect_header(in, line_no, "user_id,question_id,correct,timestamp");

    ParseResult result;
    std::unordered_map<std::string, std::size_t> user_slot;
    std::string line;
    while (next_line(in, line, line_no)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 4)
            throw DataError("expected 4 fields, got " + std::to_string(f.size()), line_no);
        if (f[0].empty() || f[1].empty()) throw DataError("empty user or question id", line_no);
        if (f[2] != "0" && f[2] != "1")
            throw DataError("correct must be 0 or 1, got '" + std::string(f[2]) + "'", line_no);
        std::int64_t ts = 0;
        const auto [end, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), ts);
        if (ec != std::errc() || end != f[3].data() + f[3].size() || ts < 0)
            throw DataError("timestamp must be a nonnegative integer, got '" + std::string(f[3]) + "'",
                            line_no);

        Interaction row{std::string(f[0]), std::string(f[1]), std::uint8_t(f[2] == "1"), ts};
        auto [it, inserted] = user_slot.try_emplace(row.user_id, result.sequences.size());
        if (inserted) result.sequences.push_back({row.user_id, {}});
        result.sequences[it->second].interactions.push_back(std::move(row));
        ++result.rows;
    }
    for (auto& seq : result.sequences)
        std::stable_sort(seq.interactions.begin(), seq.interactions.end(),
                         [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    return result;
}

void write_interactions(std::ostream& out, const std::vector<UserSequence>& sequences) {
    out << "user_id,question_id,correct,timestamp\n";
    for (const auto& seq : sequences)
        for (const auto& x : seq.interactions)
            out << x.user_id << ',' << x.question_id << ',' << int(x.correct) << ',' << x.timestamp << '\n';
}

TagTable parse_tags(std::istream& in) {
    std::size_t line_no = 0;
    expect_header(in, line_no, "question_id,tag");
    TagTable tags;
    std::string line;
    while (next_line(in, line, line_no)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 2) throw DataError("expected 2 fields, got " + std::to_string(f.size()), line_no);
        if (f[0].empty() || f[1].empty()) throw DataError("empty question id or tag", line_no);
        tags[std::string(f[0])].insert(std::string(f[1]));
    }
    return tags;
}

void write_tags(std::ostream& out, const TagTable& tags) {
    out << "question_id,tag\n";
    for (const auto& [q, set] : tags)
        for (const auto& t : set) out << q << ',' << t << '\n';
}

Catalog::Catalog(std::vector<std::string> ids, const TagTable& tags) : ids_(std::move(ids)) {
    tags_.resize(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], static_cast<std::uint32_t>(i)).second)
            throw std::invalid_argument("catalog: duplicate question id '" + ids_[i] + "'");
        if (auto it = tags.find(ids_[i]); it != tags.end()) tags_[i] = it->second;
    }
}

Catalog Catalog::from_sequences(const std::vector<UserSequence>& sequences, const TagTable& tags) {
    std::set<std::string> seen;
    for (const auto& seq : sequences)
        for (const auto& x : seq.interactions) seen.insert(x.question_id);
    return Catalog(std::vector<std::string>(seen.begin(), seen.end()), tags);
}

std::optional<std::uint32_t> Catalog::find(const std::string& id) const {
    if (auto it = index_.find(id); it != index_.end()) return it->second;
    return std::nullopt;
}

std::uint32_t Catalog::index_or_unknown(const std::string& id) const {
    return find(id).value_or(unknown_index());
}

std::uint32_t Catalog::index(const std::string& id) const {
    if (auto i = find(id)) return *i;
    throw std::out_of_range("unknown question id '" + id + "'");
}

const std::set<std::string>& Catalog::tags(std::size_t index) const {
    static const std::set<std::string> empty;
    return index < tags_.size() ? tags_[index] : empty;
}

bool Catalog::has_tags() const {
    return std::any_of(tags_.begin(), tags_.end(), [](const auto& s) { return !s.empty(); });
}

TagTable Catalog::tag_table() const {
    TagTable out;
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (!tags_[i].empty()) out[ids_[i]] = tags_[i];
    return out;
}

std::vector<Step> Catalog::encode(const UserSequence& seq) const {
    std::vector<Step> steps;
    steps.reserve(seq.size());
    for (const auto& x : seq.interactions) steps.push_back({index_or_unknown(x.question_id), x.correct});
    return steps;
}

Split split_by_user(const std::vector<UserSequence>& sequences, const std::array<double, 3>& ratios,
                    std::uint64_t seed) {
    double total = 0;
    for (double r : ratios) {
        if (!(r > 0)) throw std::invalid_argument("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
    const std::size_t n = sequences.size();
    if (n < ratios.size()) throw std::invalid_argument("split_by_user: fewer users than splits");

    // Largest-remainder rounding keeps every share within one user of exact.
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = ratios[k] * double(n);
        counts[k] = static_cast<std::size_t>(std::floor(exact));
        rem[k] = exact - double(counts[k]);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    Split split;
    std::vector<UserSequence>* parts[3] = {&split.train, &split.validation, &split.test};
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        // Keep input order inside each part.
        std::vector<std::size_t> members(perm.begin() + pos, perm.begin() + pos + counts[k]);
        std::sort(members.begin(), members.end());
        for (std::size_t i : members) parts[k]->push_back(sequences[i]);
        pos += counts[k];
    }
    return split;
}

std::vector<ExampleRef> enumerate_examples(const std::vector<std::vector<Step>>& encoded) {
    std::vector<ExampleRef> out;
    for (std::size_t u = 0; u < encoded.size(); ++u)
        for (std::size_t t = 1; t < encoded[u].size(); ++t)
            out.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(t)});
    return out;
}

PrefixView prefix_view(const std::vector<std::vector<Step>>& encoded, const ExampleRef& ex,
                       std::size_t window) {
    const auto& seq = encoded[ex.user];
    const std::size_t begin = ex.t > window ? ex.t - window : 0;
    return {std::span<const Step>(seq.data() + begin, ex.t - begin), seq[ex.t].question, seq[ex.t].response};
}

std::vector<Batch> window_and_batch(const std::vector<std::vector<Step>>& encoded,
                                    std::size_t window, std::size_t batch_size) {
    if (window == 0) throw std::invalid_argument("window must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    const auto examples = enumerate_examples(encoded);
    std::vector<Batch> batches;
    std::vector<PrefixView> views;
    for (std::size_t i = 0; i < examples.size(); i += batch_size) {
        views.clear();
        for (std::size_t j = i; j < std::min(examples.size(), i + batch_size); ++j)
            views.push_back(prefix_view(encoded, examples[j], window));
        batches.push_back(make_batch(views));
    }
    return batches;
}

}  // namespace kt
