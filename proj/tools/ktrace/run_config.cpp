#include "ktrace/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace ktrace {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(trim(item));
    return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty())
        throw ConfigError(key, key + ": expected a nonnegative integer, got '" + value + "'");
    return v;
}

double to_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size())
        throw ConfigError(key, key + ": expected a number, got '" + value + "'");
    return v;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

Setter path(std::string RunConfig::*field) {
    return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
}

template <class T>
Setter count(T RunConfig::*field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = T(to_unsigned(k, v)); };
}

template <class S, class T>
Setter sub_count(S RunConfig::*part, T S::*field) {
    return [part, field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*part.*field = T(to_unsigned(k, v));
    };
}

template <class S>
Setter sub_real(S RunConfig::*part, double S::*field) {
    return [part, field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*part.*field = to_double(k, v);
    };
}

template <class F>
Setter wrap(F parse) {
    return [parse](RunConfig& c, const std::string& k, const std::string& v) {
        try {
            parse(c, v);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(k, k + ": " + e.what());
        }
    };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"data", path(&RunConfig::data)},
        {"tags", path(&RunConfig::tags)},
        {"truth", path(&RunConfig::truth)},
        {"checkpoint", path(&RunConfig::checkpoint)},
        {"out", path(&RunConfig::out)},
        {"seed", count(&RunConfig::seed)},
        {"threads", count(&RunConfig::threads)},

        {"d_embed", sub_count(&RunConfig::model, &kt::ModelConfig::d_embed)},
        {"d_lstm", sub_count(&RunConfig::model, &kt::ModelConfig::d_lstm)},
        {"lstm_layers", sub_count(&RunConfig::model, &kt::ModelConfig::lstm_layers)},
        {"d_attn", sub_count(&RunConfig::model, &kt::ModelConfig::d_attn)},
        {"head_dims", [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.head_dims.clear();
             for (const auto& x : split_list(v)) c.model.head_dims.push_back(to_unsigned(k, x));
         }},
        {"window", sub_count(&RunConfig::model, &kt::ModelConfig::window)},
        {"encoder", wrap([](RunConfig& c, const std::string& v) { c.model.encoder = kt::parse_encoder_kind(v); })},
        {"attention",
         wrap([](RunConfig& c, const std::string& v) { c.model.attention = kt::parse_attention_kind(v); })},

        {"lr", sub_real(&RunConfig::train, &kt::TrainConfig::learning_rate)},
        {"beta1", sub_real(&RunConfig::train, &kt::TrainConfig::beta1)},
        {"beta2", sub_real(&RunConfig::train, &kt::TrainConfig::beta2)},
        {"epsilon", sub_real(&RunConfig::train, &kt::TrainConfig::epsilon)},
        {"batch_size", sub_count(&RunConfig::train, &kt::TrainConfig::batch_size)},
        {"max_epochs", sub_count(&RunConfig::train, &kt::TrainConfig::max_epochs)},
        {"patience", sub_count(&RunConfig::train, &kt::TrainConfig::patience)},
        {"clip_norm", sub_real(&RunConfig::train, &kt::TrainConfig::clip_norm)},
        {"max_seconds", sub_real(&RunConfig::train, &kt::TrainConfig::max_seconds)},

        {"n_users", sub_count(&RunConfig::sim, &kt::SimConfig::n_users)},
        {"n_questions", sub_count(&RunConfig::sim, &kt::SimConfig::n_questions)},
        {"n_tags", sub_count(&RunConfig::sim, &kt::SimConfig::n_tags)},
        {"tags_min", sub_count(&RunConfig::sim, &kt::SimConfig::tags_min)},
        {"tags_max", sub_count(&RunConfig::sim, &kt::SimConfig::tags_max)},
        {"sequence_length", sub_count(&RunConfig::sim, &kt::SimConfig::sequence_length)},
        {"discrimination_sigma", sub_real(&RunConfig::sim, &kt::SimConfig::discrimination_sigma)},
        {"learning_gain", sub_real(&RunConfig::sim, &kt::SimConfig::learning_gain)},
        {"policy", wrap([](RunConfig& c, const std::string& v) { c.sim.policy = kt::parse_selection_policy(v); })},

        {"split", [](RunConfig& c, const std::string& k, const std::string& v) {
             const auto parts = split_list(v);
             if (parts.size() != 3) throw ConfigError(k, k + ": expected three comma-separated ratios");
             for (std::size_t i = 0; i < 3; ++i) c.split[i] = to_double(k, parts[i]);
         }},
        {"eval_split", [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "train" && v != "validation" && v != "test" && v != "all")
                 throw ConfigError(k, k + ": expected train, validation, test or all");
             c.eval_split = v;
         }},
        {"max_step", count(&RunConfig::max_step)},
        {"early_steps", count(&RunConfig::early_steps)},

        {"user", path(&RunConfig::user)},
        {"pool", [](RunConfig& c, const std::string&, const std::string& v) { c.pool = split_list(v); }},
        {"k", count(&RunConfig::k)},
        {"eliminate_above",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.eliminate_above = to_double(k, v); }},
        {"queries", [](RunConfig& c, const std::string&, const std::string& v) { c.queries = split_list(v); }},
        {"triples", count(&RunConfig::triples)},
    };
    return table;
}

const Setter* find_setter(const std::string& key) {
    for (const auto& [name, set] : setters())
        if (name == key) return &set;
    return nullptr;
}

void require(bool present, const std::string& command, const std::string& key) {
    if (!present) throw ConfigError(key, command + ": missing required path '" + key + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "config line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!find_setter(key)) throw ConfigError(key, "unknown config key '" + key + "'");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

RunConfig resolve_config(const std::string& command, const std::map<std::string, std::string>& file,
                         const std::map<std::string, std::string>& flags) {
    RunConfig c;
    c.command = command;
    std::map<std::string, std::string> merged = file;
    for (const auto& [k, v] : flags) merged[k] = v;
    for (const auto& [k, v] : merged) {
        const Setter* set = find_setter(k);
        if (!set) throw ConfigError(k, "unknown config key '" + k + "'");
        (*set)(c, k, v);
    }
    c.sim.seed = c.seed;
    c.train.seed = c.seed;

    try {
        c.model.question_vocab = 1;  // real value comes from the data
        c.model.validate();
        c.model.question_vocab = 0;
        c.train.validate();
        c.sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("", e.what());
    }
    if (c.threads == 0) throw ConfigError("threads", "threads: must be at least 1");
    if (c.max_step < 2) throw ConfigError("max_step", "max_step: must be at least 2");

    if (command == "train") require(!c.data.empty(), command, "data");
    if (command == "eval" || command == "predict" || command == "review") {
        require(!c.data.empty(), command, "data");
        require(!c.checkpoint.empty(), command, "checkpoint");
    }
    if (command == "predict" || command == "review")
        if (c.user.empty()) throw ConfigError("user", command + ": missing required key 'user'");
    if (command == "analyze") require(!c.checkpoint.empty(), command, "checkpoint");
    return c;
}

}  // namespace ktrace
