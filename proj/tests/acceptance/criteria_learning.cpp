#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>

#include "criteria.hpp"
#include "kt/data/simulator.hpp"
#include "kt/evaluation/metrics.hpp"
#include "kt/training/training.hpp"
#include "support.hpp"

namespace acceptance {

namespace fs = std::filesystem;
using namespace kt;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Runs `body` once per process and caches its outcome; a failure is
/// rethrown to every later caller instead of being retried.
template <class T>
const T& once(std::optional<T>& slot, std::string& error, const std::function<T()>& body) {
    if (!slot && error.empty()) {
        try {
            slot = body();
        } catch (const std::exception& e) {
            error = e.what();
        }
    }
    if (!slot) throw std::runtime_error(error);
    return *slot;
}

// ---------------------------------------------------------------- shared experiments

// Tag-driven benchmark: three tags with two or three per question, so every
// question's probability depends on a mix of per-tag abilities.
const std::vector<std::string> kTagDriven = {"--n-questions", "500", "--sequence-length", "100", "--learning-gain",
                                            "0.02", "--n-tags", "3", "--tags-min", "2", "--tags-max", "3"};
constexpr const char* kBenchmarkSeed = "2024";
// Training stops after the epoch during which this budget elapses.
constexpr const char* kBenchmarkTrainSeconds = "1500";

struct Benchmark {
    fs::path sim, train, eval;
    double seconds = 0;
};

const Benchmark& benchmark(const Context& ctx) {
    static std::optional<Benchmark> slot;
    static std::string error;
    return once<Benchmark>(slot, error, [&] {
        const auto start = std::chrono::steady_clock::now();
        const fs::path dir = ctx.workdir / "benchmark";
        fs::remove_all(dir);
        Benchmark b{dir / "sim", dir / "train", dir / "eval", 0};
        std::vector<std::string> sim = {"simulate", "--out", b.sim.string(), "--seed", kBenchmarkSeed, "--n-users",
                                        "2000"};
        sim.insert(sim.end(), kTagDriven.begin(), kTagDriven.end());
        cli(sim);
        cli({"train", "--data", (b.sim / "interactions.csv").string(), "--tags",
             (b.sim / "tags.csv").string(), "--out", b.train.string(), "--seed", kBenchmarkSeed, "--max-seconds",
             kBenchmarkTrainSeconds});
        cli({"eval", "--data", (b.sim / "interactions.csv").string(), "--truth", (b.sim / "truth.csv").string(),
             "--checkpoint", (b.train / "model.ckpt").string(), "--out", b.eval.string()});
        b.seconds = seconds_since(start);
        return b;
    });
}

struct Variant {
    std::string encoder, attention;
    std::string name() const { return encoder + "_" + attention; }
};

const std::vector<Variant> kAblation = {
    {"bilstm", "additive"}, {"bilstm", "dot"}, {"bilstm", "none"}, {"lstm", "additive"}, {"fc", "additive"}};

struct Ablation {
    fs::path sim, dir;
    Tsv table;
};

// The benchmark simulator at 600 users. Batches of 32 give each variant
// enough updates in two epochs to start using the response history.
const Ablation& ablation(const Context& ctx) {
    static std::optional<Ablation> slot;
    static std::string error;
    return once<Ablation>(slot, error, [&] {
        const fs::path dir = ctx.workdir / "ablation";
        fs::remove_all(dir);
        Ablation a{dir / "sim", dir, {}};
        std::vector<std::string> sim = {"simulate", "--out", a.sim.string(), "--seed", "7", "--n-users", "600"};
        sim.insert(sim.end(), kTagDriven.begin(), kTagDriven.end());
        cli(sim);
        const std::string data = (a.sim / "interactions.csv").string();

        std::ofstream table(dir / "ablation.tsv");
        table << "encoder\tattention\tauc\tf1\tacc\toracle_auc\tbest_epoch\ttrain_seconds\n";
        for (const auto& v : kAblation) {
            const fs::path out = dir / v.name();
            const auto start = std::chrono::steady_clock::now();
            cli({"train", "--data", data, "--tags", (a.sim / "tags.csv").string(), "--out", (out / "train").string(),
                 "--seed", "7", "--encoder", v.encoder, "--attention", v.attention, "--max-epochs", "2",
                 "--batch-size", "32"});
            const double secs = seconds_since(start);
            cli({"eval", "--data", data, "--truth", (a.sim / "truth.csv").string(), "--checkpoint",
                 (out / "train/model.ckpt").string(), "--out", (out / "eval").string()});
            const Tsv m = read_tsv(out / "eval/metrics.tsv");
            const Tsv epochs = read_tsv(out / "train/epochs.tsv");
            const std::size_t r = m.find("scope", "all");
            std::size_t best = 0;
            double best_auc = -1;
            for (std::size_t e = 0; e < epochs.rows.size(); ++e)
                if (epochs.number(e, "val_auc") > best_auc) {
                    best_auc = epochs.number(e, "val_auc");
                    best = e + 1;
                }
            table << v.encoder << '\t' << v.attention << '\t' << m.text(r, "auc") << '\t' << m.text(r, "f1") << '\t'
                  << m.text(r, "acc") << '\t' << m.text(r, "oracle_auc") << '\t' << best << '\t' << num(secs, 4)
                  << '\n';
        }
        table.close();
        a.table = read_tsv(dir / "ablation.tsv");
        return a;
    });
}

double ablation_auc(const Tsv& table, const std::string& encoder, const std::string& attention) {
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        if (table.text(r, "encoder") == encoder && table.text(r, "attention") == attention)
            return table.number(r, "auc");
    throw std::runtime_error("ablation table has no " + encoder + "/" + attention + " row");
}

// ---------------------------------------------------------------- 5

Outcome overfit(const Context&) {
    const auto start = std::chrono::steady_clock::now();
    SimConfig sim;
    sim.n_users = 32;
    sim.sequence_length = 50;
    sim.seed = 3;
    const auto data = simulate(sim);
    const auto catalog = Catalog::from_sequences(data.sequences, data.tags);
    ModelConfig model;
    model.window = 50;
    TrainConfig train;
    train.max_epochs = 50;
    train.patience = 50;
    train.batch_size = 32;
    double best_acc = 0;
    std::size_t epochs = 0;
    // Validating on the training users makes val_acc the training accuracy.
    fit(data.sequences, data.sequences, catalog, model, train, [&](const EpochRecord& r, const Parameters<float>&) {
        best_acc = std::max(best_acc, r.val_acc);
        epochs = r.epoch;
        return r.val_acc < 0.95;
    });
    const double secs = seconds_since(start);
    return {best_acc >= 0.95 && secs < 300,
            "training ACC " + num(best_acc, 4) + " (>= 0.95) after " + std::to_string(epochs) + " epochs (<= 50), " +
                num(secs, 4) + " s (< 300 s)"};
}

// ---------------------------------------------------------------- 6

Outcome simulator_benchmark(const Context& ctx) {
    const Benchmark& b = benchmark(ctx);
    const Tsv m = read_tsv(b.eval / "metrics.tsv");
    const std::size_t r = m.find("scope", "all");
    const double model_auc = m.number(r, "auc");
    const double oracle = m.number(r, "oracle_auc");

    // Global base rate: a constant prediction for every test event.
    const auto pos = std::size_t(m.number(r, "tp") + m.number(r, "fn"));
    const auto neg = std::size_t(m.number(r, "fp") + m.number(r, "tn"));
    std::vector<std::uint8_t> labels(pos, 1);
    labels.resize(pos + neg, 0);
    const double base_rate = double(pos) / double(pos + neg);
    const double base_auc = auc(std::vector<double>(labels.size(), base_rate), labels);

    const Tsv epochs = read_tsv(b.train / "epochs.tsv");
    const bool pass = model_auc >= 0.95 * oracle && model_auc - base_auc >= 0.15 && b.seconds <= 45 * 60;
    return {pass, "test AUC " + num(model_auc, 4) + " vs oracle " + num(oracle, 4) + " (ratio " +
                      num(model_auc / oracle, 4) + " >= 0.95), base-rate AUC " + num(base_auc, 4) + " (margin " +
                      num(model_auc - base_auc, 3) + " >= 0.15), " + std::to_string(pos + neg) + " test events, " +
                      std::to_string(epochs.rows.size()) + " epochs, " + num(b.seconds, 4) + " s (<= 2700 s)"};
}

// ---------------------------------------------------------------- 7

Outcome ablation_harness(const Context& ctx) {
    const Ablation& a = ablation(ctx);
    const double bilstm = ablation_auc(a.table, "bilstm", "additive");
    const double fc = ablation_auc(a.table, "fc", "additive");
    const double dot = ablation_auc(a.table, "bilstm", "dot");
    const bool complete = a.table.rows.size() == kAblation.size();
    const bool pass = complete && bilstm >= fc - 0.005 && std::abs(bilstm - dot) < 0.02;
    std::string rows;
    for (std::size_t r = 0; r < a.table.rows.size(); ++r)
        rows += (r ? ", " : "") + a.table.text(r, "encoder") + "/" + a.table.text(r, "attention") + " " +
                num(a.table.number(r, "auc"), 4);
    return {pass, std::to_string(a.table.rows.size()) + " variants (" + rows + "; oracle " +
                      num(a.table.number(0, "oracle_auc"), 4) + "); bilstm - fc " +
                      num(bilstm - fc, 3) + " (>= -0.005), |additive - dot| " + num(std::abs(bilstm - dot), 3) +
                      " (< 0.02)"};
}

// ---------------------------------------------------------------- 8

Outcome attention_tags(const Context& ctx) {
    const Tsv additive = read_tsv(benchmark(ctx).eval / "attention_summary.tsv");
    const Tsv none = read_tsv(ablation(ctx).dir / "bilstm_none/eval/attention_summary.tsv");
    const std::size_t ra = additive.find("statistic", "top3_minus_bottom3");
    const std::size_t rn = none.find("statistic", "top3_minus_bottom3");
    const double gap = additive.number(ra, "value");
    const double n_add = additive.number(ra, "predictions");
    const double lo = none.number(rn, "ci_low"), hi = none.number(rn, "ci_high");
    const double n_none = none.number(rn, "predictions");
    const bool pass = gap >= 0.05 && n_add >= 5000 && lo <= 0 && 0 <= hi && n_none >= 5000;
    return {pass, "additive top3 - bottom3 tag matching " + num(gap, 3) + " (>= 0.05) over " + num(n_add, 6) +
                      " predictions; none: gap " + num(none.number(rn, "value"), 3) + ", 95% CI [" + num(lo, 3) +
                      ", " + num(hi, 3) + "] over " + num(n_none, 6) + " predictions (must contain 0)"};
}

// ---------------------------------------------------------------- 9

Outcome embedding_structure(const Context& ctx) {
    const Benchmark& b = benchmark(ctx);
    const fs::path out = ctx.workdir / "benchmark/analyze";
    cli({"analyze", "--checkpoint", (b.train / "model.ckpt").string(), "--out", out.string(), "--triples", "100",
         "--seed", kBenchmarkSeed});
    const Tsv cos = read_tsv(out / "tag_cosine.tsv");
    const double same = cos.number(cos.find("pairs", "same_tags"), "mean_cosine");
    const double all = cos.number(cos.find("pairs", "all"), "mean_cosine");
    const Tsv analogies = read_tsv(out / "analogies.tsv");
    std::size_t with_tags = 0, overlapping = 0;
    for (std::size_t r = 0; r < analogies.rows.size(); ++r) {
        with_tags += !analogies.text(r, "predicted_tags").empty();
        overlapping += analogies.number(r, "overlap") > 0;
    }
    const bool pass = same - all >= 0.05 && analogies.rows.size() == 100 && with_tags == 100;
    return {pass, "same-tag cosine " + num(same, 3) + " vs all pairs " + num(all, 3) + " (difference " +
                      num(same - all, 3) + " >= 0.05); " + std::to_string(analogies.rows.size()) +
                      " analogies, " + std::to_string(with_tags) + " with predicted tags, " +
                      std::to_string(overlapping) + " overlapping the true tags"};
}

// ---------------------------------------------------------------- 10

Outcome timestep_curves(const Context& ctx) {
    const Tsv curve = read_tsv(benchmark(ctx).eval / "timestep.tsv");
    std::set<std::size_t> steps;
    double early = 0, late = 0;
    std::size_t n_early = 0, n_late = 0, complete = 0;
    for (std::size_t r = 0; r < curve.rows.size(); ++r) {
        const auto t = std::size_t(curve.number(r, "t"));
        steps.insert(t);
        const double a = curve.number(r, "auc");
        complete += std::isfinite(a) && std::isfinite(curve.number(r, "f1")) && std::isfinite(curve.number(r, "acc"));
        if (!std::isfinite(a)) continue;
        if (t >= 2 && t <= 10) early += a, ++n_early;
        if (t >= 50 && t <= 100) late += a, ++n_late;
    }
    early /= double(std::max<std::size_t>(n_early, 1));
    late /= double(std::max<std::size_t>(n_late, 1));
    const bool covered = steps.size() == 99 && *steps.begin() == 2 && *steps.rbegin() == 100;
    const bool pass = covered && complete == 99 && n_early == 9 && n_late == 51 && late > early;
    return {pass, std::to_string(steps.size()) + " steps in [2,100] (" + std::to_string(complete) +
                      " with AUC/F1/ACC); mean AUC t in [50,100] " + num(late, 4) + " vs t in [2,10] " +
                      num(early, 4)};
}

}  // namespace

std::vector<Criterion> learning_criteria() {
    return {
        {5, "overfit sanity", overfit},
        {6, "simulator benchmark", simulator_benchmark},
        {7, "ablation harness", ablation_harness},
        {8, "attention-tag correlation", attention_tags},
        {9, "embedding structure", embedding_structure},
        {10, "per-timestep curves", timestep_curves},
    };
}

}  // namespace acceptance
