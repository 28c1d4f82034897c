#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kt/model/batch.hpp"

namespace kt {

/// Malformed input file. line() is 1-based and counts the header.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct Interaction {
    std::string user_id;
    std::string question_id;
    std::uint8_t correct = 0;
    std::int64_t timestamp = 0;

    bool operator==(const Interaction&) const = default;
};

struct UserSequence {
    std::string user_id;
    std::vector<Interaction> interactions;

    std::size_t size() const { return interactions.size(); }
    bool operator==(const UserSequence&) const = default;
};

struct ParseResult {
    std::vector<UserSequence> sequences;  // in order of first appearance
    std::size_t rows = 0;
};

/// Reads `user_id,question_id,correct,timestamp` rows. Each user's events are
/// sorted by timestamp, ties kept in file order.
ParseResult parse_interactions(std::istream& in);
void write_interactions(std::ostream& out, const std::vector<UserSequence>& sequences);

using TagTable = std::map<std::string, std::set<std::string>>;

/// Reads `question_id,tag` rows into per-question sets.
TagTable parse_tags(std::istream& in);
void write_tags(std::ostream& out, const TagTable& tags);

/// Dense question indices plus tags. Index vocab() is reserved for questions
/// that are not in the catalog.
class Catalog {
public:
    Catalog() = default;
    /// Indexes `ids` in the given order. Tags of ids outside the catalog are dropped.
    Catalog(std::vector<std::string> ids, const TagTable& tags);

    /// Catalog of every question seen in `sequences`, ordered by id.
    static Catalog from_sequences(const std::vector<UserSequence>& sequences, const TagTable& tags);

    std::size_t vocab() const { return ids_.size(); }
    std::uint32_t unknown_index() const { return static_cast<std::uint32_t>(ids_.size()); }
    std::optional<std::uint32_t> find(const std::string& id) const;
    /// Index of `id`, or unknown_index() when absent.
    std::uint32_t index_or_unknown(const std::string& id) const;
    /// Throws std::out_of_range naming the id.
    std::uint32_t index(const std::string& id) const;
    const std::string& id(std::size_t index) const { return ids_.at(index); }
    const std::vector<std::string>& ids() const { return ids_; }

    /// Empty for the unknown slot and for untagged questions.
    const std::set<std::string>& tags(std::size_t index) const;
    bool has_tags() const;
    TagTable tag_table() const;

    std::vector<Step> encode(const UserSequence& seq) const;

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<std::set<std::string>> tags_;
};

struct Split {
    std::vector<UserSequence> train;
    std::vector<UserSequence> validation;
    std::vector<UserSequence> test;
};

/// Seeded whole-user split. Ratios must be positive and sum to 1.
Split split_by_user(const std::vector<UserSequence>& sequences, const std::array<double, 3>& ratios,
                    std::uint64_t seed);

/// Position of one prediction: target interaction t (0-based, t >= 1) of
/// sequence `user`.
struct ExampleRef {
    std::uint32_t user = 0;
    std::uint32_t t = 0;
};

/// Every (user, t >= 1) pair, in user then time order.
std::vector<ExampleRef> enumerate_examples(const std::vector<std::vector<Step>>& encoded);

/// The windowed prefix of an example: the last `window` steps before t.
PrefixView prefix_view(const std::vector<std::vector<Step>>& encoded, const ExampleRef& ex,
                       std::size_t window);

/// Batches every example in enumeration order.
std::vector<Batch> window_and_batch(const std::vector<std::vector<Step>>& encoded,
                                    std::size_t window, std::size_t batch_size);

}  // namespace kt
