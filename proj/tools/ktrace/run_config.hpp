#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kt/data/simulator.hpp"
#include "kt/model/config.hpp"
#include "kt/training/training.hpp"

namespace ktrace {

/// Bad configuration: unknown key, unparsable value or missing path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct RunConfig {
    std::string command;

    std::string data, tags, truth, checkpoint;
    std::string out = ".";

    kt::ModelConfig model;
    kt::TrainConfig train;
    kt::SimConfig sim;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    // eval
    std::string eval_split = "test";  // train | validation | test | all
    std::size_t max_step = 100;
    std::size_t early_steps = 50;

    // predict / review
    std::string user;
    std::vector<std::string> pool;  // empty: every catalog question
    std::size_t k = 5;
    double eliminate_above = 0.85;

    // analyze
    std::vector<std::string> queries;  // empty: first `k` catalog questions
    std::size_t triples = 100;
};

/// Every recognised key, in documentation order.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines ('#' starts a comment). Throws ConfigError
/// naming the key on unknown keys or bad values.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Defaults, then `file` values, then `flags`; `seed` fans out to the
/// simulator and trainer unless they are set explicitly. Checks the paths
/// `command` needs.
RunConfig resolve_config(const std::string& command, const std::map<std::string, std::string>& file,
                         const std::map<std::string, std::string>& flags);

}  // namespace ktrace
