#include "ktrace/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "kt/evaluation/reports.hpp"
#include "kt/numerics/kernels.hpp"
#include "kt/review/review.hpp"

namespace ktrace {

namespace fs = std::filesystem;

namespace {

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return in;
}

template <class F>
auto parse_file(const std::string& path, F parse) {
    auto in = open_input(path);
    try {
        return parse(in);
    } catch (const kt::DataError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<kt::UserSequence> load_sequences(const std::string& path) {
    return parse_file(path, [](std::istream& in) { return kt::parse_interactions(in).sequences; });
}

kt::TagTable load_tags(const std::string& path) {
    if (path.empty()) return {};
    return parse_file(path, [](std::istream& in) { return kt::parse_tags(in); });
}

std::string output_path(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

template <class F>
void write_file(const RunConfig& c, const std::string& name, F body) {
    const std::string path = output_path(c, name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    body(out);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_table(const RunConfig& c, const std::string& stem, const kt::Table& table) {
    write_file(c, stem + ".tsv", [&](std::ostream& o) { kt::write_tsv(o, table); });
    write_file(c, stem + ".jsonl", [&](std::ostream& o) { kt::write_jsonl(o, table); });
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

const kt::UserSequence& find_user(const std::vector<kt::UserSequence>& seqs, const std::string& user) {
    for (const auto& s : seqs)
        if (s.user_id == user) return s;
    throw InputError("user '" + user + "' not found in the data");
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const RunConfig& c, std::ostream& log) {
    const auto sim = kt::simulate(c.sim);
    write_file(c, "interactions.csv", [&](std::ostream& o) { kt::write_interactions(o, sim.sequences); });
    write_file(c, "tags.csv", [&](std::ostream& o) { kt::write_tags(o, sim.tags); });
    write_file(c, "truth.csv", [&](std::ostream& o) { kt::write_truth(o, sim.truth); });
    log << "simulated " << sim.sequences.size() << " users, " << sim.truth.size() << " interactions -> " << c.out
        << "\n";
}

// ---------------------------------------------------------------- train

void cmd_train(const RunConfig& c, std::ostream& log) {
    const auto seqs = load_sequences(c.data);
    const auto tags = load_tags(c.tags);
    const auto split = kt::split_by_user(seqs, c.split, c.seed);
    const auto catalog = kt::Catalog::from_sequences(split.train, tags);
    auto result = kt::fit(split.train, split.validation, catalog, c.model, c.train,
                          [&](const kt::EpochRecord& r, const kt::Parameters<float>&) {
                              log << "epoch " << r.epoch << " loss " << fmt(r.loss) << " val_auc " << fmt(r.val_auc)
                                  << " val_acc " << fmt(r.val_acc) << " val_f1 " << fmt(r.val_f1) << "\n";
                              return true;
                          });
    result.best.info.split_ratios = c.split;
    result.best.info.split_seed = c.seed;
    kt::save_checkpoint(output_path(c, "model.ckpt"), result.best);
    write_file(c, "epochs.tsv", [&](std::ostream& o) { kt::write_epoch_log(o, result.log); });
    log << "stopped: " << kt::to_string(result.reason) << "; best epoch " << result.best.info.epoch << " val_auc "
        << fmt(result.best.info.val_auc) << "\n";
}

// ---------------------------------------------------------------- eval

struct Scope {
    std::string name;
    std::vector<std::size_t> rows;
};

void cmd_eval(const RunConfig& c, std::ostream& log) {
    const auto ckpt = kt::load_checkpoint(c.checkpoint);
    const auto seqs = load_sequences(c.data);
    const auto split = kt::split_by_user(seqs, ckpt.info.split_ratios, ckpt.info.split_seed);
    const std::vector<kt::UserSequence>& chosen = c.eval_split == "train"        ? split.train
                                                  : c.eval_split == "validation" ? split.validation
                                                  : c.eval_split == "test"       ? split.test
                                                                                 : seqs;
    const auto catalog = ckpt.catalog();
    std::vector<std::vector<kt::Step>> encoded;
    for (const auto& s : chosen) encoded.push_back(catalog.encode(s));
    const auto examples = kt::enumerate_examples(encoded);
    if (examples.empty()) throw InputError("no predictions to evaluate in the " + c.eval_split + " split");
    const auto preds = kt::predict_examples(ckpt.params, encoded, examples);
    const auto labels = kt::example_labels(encoded, examples);

    std::vector<double> truth_p;
    if (!c.truth.empty()) {
        const auto rows = parse_file(c.truth, [](std::istream& in) { return kt::parse_truth(in); });
        std::map<std::string, std::vector<double>> by_user;
        for (const auto& r : rows) {
            auto& v = by_user[r.user_id];
            if (v.size() <= r.step) v.resize(r.step + 1);
            v[r.step] = r.true_p;
        }
        for (const auto& ex : examples) {
            const auto it = by_user.find(chosen[ex.user].user_id);
            if (it == by_user.end() || it->second.size() <= ex.t)
                throw InputError(c.truth + ": no truth for user '" + chosen[ex.user].user_id + "'");
            truth_p.push_back(it->second[ex.t]);
        }
    }

    std::vector<Scope> scopes{{"all", {}}, {"t<=" + std::to_string(c.early_steps), {}}};
    for (std::size_t i = 0; i < examples.size(); ++i) {
        scopes[0].rows.push_back(i);
        if (examples[i].t + 1 <= c.early_steps) scopes[1].rows.push_back(i);
    }
    kt::Table metrics{{"scope", "n", "auc", "f1", "acc", "oracle_auc", "tp", "fp", "tn", "fn"}, {}};
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const auto& scope : scopes) {
        if (scope.rows.empty()) continue;
        std::vector<double> p, t;
        std::vector<std::uint8_t> y;
        for (std::size_t i : scope.rows) {
            p.push_back(preds[i]);
            y.push_back(labels[i]);
            if (!truth_p.empty()) t.push_back(truth_p[i]);
        }
        const auto m = kt::evaluate(p, y);
        double oracle = std::nan("");
        if (!t.empty() && !std::isnan(m.auc)) oracle = kt::oracle_auc(t, y);
        metrics.rows.push_back({scope.name, m.n, num(m.auc), num(m.f1), num(m.acc), num(oracle), m.tp, m.fp, m.tn,
                                m.fn});
        log << scope.name << ": n " << m.n << " f1 " << fmt(m.f1) << " auc " << fmt(m.auc) << " acc " << fmt(m.acc);
        if (!std::isnan(oracle)) log << " oracle_auc " << fmt(oracle);
        log << "\n";
    }
    write_table(c, "metrics", metrics);
    write_table(c, "timestep", kt::timestep_table(kt::per_timestep(preds, labels, examples, c.max_step)));

    bool tagged = false;
    for (std::size_t i = 0; i < catalog.vocab() && !tagged; ++i) tagged = !catalog.tags(i).empty();
    if (tagged) {
        const auto rep = kt::attention_tag_report(ckpt.params, encoded, catalog, {1, 2, 3, 4, 5, -5, -4, -3, -2, -1});
        write_table(c, "attention", kt::attention_table(rep));
        kt::Table summary{{"statistic", "value", "ci_low", "ci_high", "predictions"}, {}};
        summary.rows.push_back({"top3_minus_bottom3", num(rep.gap), num(rep.gap_ci_low), num(rep.gap_ci_high),
                                rep.gap_predictions});
        summary.rows.push_back({"ratio_vs_rank_slope", num(rep.slope), num(rep.slope_ci_low),
                                num(rep.slope_ci_high), rep.predictions});
        write_table(c, "attention_summary", summary);
        log << "attention: top3-bottom3 tag matching gap " << fmt(rep.gap) << " [" << fmt(rep.gap_ci_low) << ", "
            << fmt(rep.gap_ci_high) << "] over " << rep.gap_predictions << " predictions\n";
    }
}

// ---------------------------------------------------------------- predict / review

struct UserContext {
    kt::Checkpoint ckpt;
    kt::Catalog catalog;
    std::vector<kt::Interaction> history;
    std::vector<std::string> pool;
};

UserContext load_user(const RunConfig& c) {
    UserContext u{kt::load_checkpoint(c.checkpoint), {}, {}, c.pool};
    u.catalog = u.ckpt.catalog();
    u.history = find_user(load_sequences(c.data), c.user).interactions;
    if (u.pool.empty())
        for (std::size_t i = 0; i < u.catalog.vocab(); ++i) u.pool.push_back(u.catalog.id(i));
    return u;
}

void cmd_predict(const RunConfig& c, std::ostream& log) {
    const auto u = load_user(c);
    const auto scores = kt::score_pool(u.ckpt.params, u.catalog, u.history, u.pool, u.ckpt.info.base_rate);
    kt::Table t{{"question_id", "p"}, {}};
    for (const auto& s : scores) t.rows.push_back({s.question_id, s.p});
    write_table(c, "predictions", t);
    log << "scored " << scores.size() << " questions for " << c.user << " (history " << u.history.size() << ")\n";
}

void cmd_review(const RunConfig& c, std::ostream& log) {
    const auto u = load_user(c);
    const auto scores = kt::score_pool(u.ckpt.params, u.catalog, u.history, u.pool, u.ckpt.info.base_rate);
    std::set<std::string> answered;
    for (const auto& x : u.history) answered.insert(x.question_id);
    const auto picks = kt::recommend_next(scores, answered, c.k, c.eliminate_above);

    std::map<std::string, double> p_of;
    for (const auto& s : scores) p_of[s.question_id] = s.p;
    kt::Table rec{{"rank", "question_id", "p"}, {}};
    kt::Table pairs{{"weak_question", "review_question", "attention", "response", "history_position"}, {}};
    for (std::size_t i = 0; i < picks.size(); ++i) {
        rec.rows.push_back({i + 1, picks[i], p_of[picks[i]]});
        if (const auto pair = kt::smart_review_pair(u.ckpt.params, u.catalog, u.history, picks[i]))
            pairs.rows.push_back({pair->weak_question, pair->review_question, pair->attention, pair->response,
                                  pair->history_position});
    }
    write_table(c, "recommendations", rec);
    write_table(c, "review_pairs", pairs);
    log << "recommended " << picks.size() << " questions, " << pairs.rows.size() << " review pairs for " << c.user
        << "\n";
}

// ---------------------------------------------------------------- analyze

void cmd_analyze(const RunConfig& c, std::ostream& log) {
    const auto ckpt = kt::load_checkpoint(c.checkpoint);
    const auto catalog = ckpt.catalog();
    std::vector<std::string> queries = c.queries;
    if (queries.empty())
        for (std::size_t i = 0; i < std::min(c.k, catalog.vocab()); ++i) queries.push_back(catalog.id(i));
    for (const auto& q : queries)
        if (!catalog.find(q)) throw InputError("analyze: unknown question '" + q + "'");

    const auto neighbors = kt::embedding_neighbors(ckpt.params, catalog, queries, c.k);
    write_table(c, "neighbors", kt::neighbor_table(neighbors, catalog));
    const auto analogies =
        kt::embedding_analogies(ckpt.params, catalog, kt::sample_triples(catalog, c.triples, c.seed));
    write_table(c, "analogies", kt::analogy_table(analogies));

    const auto summary = kt::tag_cosine_summary(ckpt.params, catalog);
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    kt::Table cos{{"pairs", "mean_cosine", "count"}, {}};
    cos.rows.push_back({"same_tags", num(summary.same_tag_mean), summary.same_tag_pairs});
    cos.rows.push_back({"all", num(summary.random_mean), summary.random_pairs});
    write_table(c, "tag_cosine", cos);

    std::size_t overlapping = 0;
    for (const auto& a : analogies) overlapping += a.overlap > 0;
    log << "neighbors for " << queries.size() << " queries; " << analogies.size() << " analogies (" << overlapping
        << " with tag overlap); same-tag cosine " << fmt(summary.same_tag_mean) << " vs all pairs "
        << fmt(summary.random_mean) << "\n";
}

}  // namespace

void dispatch(const RunConfig& c, std::ostream& log) {
    kt::kernels::set_num_threads(c.threads);
    if (c.command == "simulate") return cmd_simulate(c, log);
    if (c.command == "train") return cmd_train(c, log);
    if (c.command == "eval") return cmd_eval(c, log);
    if (c.command == "predict") return cmd_predict(c, log);
    if (c.command == "review") return cmd_review(c, log);
    if (c.command == "analyze") return cmd_analyze(c, log);
    throw ConfigError("", "unknown command '" + c.command + "'");
}

int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
    CLI::App app{"Knowledge tracing with a bidirectional LSTM and attention"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "key = value config file");
    std::map<std::string, std::string> flags;
    for (const auto& key : config_keys()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        app.add_option_function<std::string>(flag, [&flags, key](const std::string& v) { flags[key] = v; },
                                              "overrides config key " + key);
    }
    for (const char* name : {"simulate", "train", "eval", "predict", "review", "analyze"}) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, log, err);  // --help
        err << "ktrace: " << e.what() << "\n";
        return kUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        std::map<std::string, std::string> file;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("config", "cannot open config file '" + config_path + "'");
            std::stringstream ss;
            ss << in.rdbuf();
            file = parse_config_text(ss.str());
        }
        dispatch(resolve_config(command, file, flags), log);
        return kOk;
    } catch (const ConfigError& e) {
        err << "ktrace " << command << ": " << e.what() << "\n";
        return kUsage;
    } catch (const InputError& e) {
        err << "ktrace " << command << ": " << e.what() << "\n";
        return kInput;
    } catch (const kt::CheckpointError& e) {
        err << "ktrace " << command << ": " << e.what() << "\n";
        return kCheckpoint;
    } catch (const kt::NonFiniteGradient& e) {
        err << "ktrace " << command << ": " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        err << "ktrace " << command << ": " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace ktrace
