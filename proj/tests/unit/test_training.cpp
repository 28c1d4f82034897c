#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "kt/data/simulator.hpp"
#include "kt/training/training.hpp"

using namespace kt;

namespace {

ModelConfig small_model(std::size_t vocab) {
    ModelConfig cfg;
    cfg.question_vocab = vocab;
    cfg.d_embed = 8;
    cfg.d_lstm = 6;
    cfg.lstm_layers = 1;
    cfg.d_attn = 8;
    cfg.head_dims = {8};
    cfg.window = 10;
    return cfg;
}

SimResult small_sim(std::size_t users, std::uint64_t seed = 3) {
    SimConfig s;
    s.n_users = users;
    s.n_questions = 30;
    s.n_tags = 3;
    s.sequence_length = 20;
    s.seed = seed;
    return simulate(s);
}

Checkpoint sample_checkpoint() {
    Checkpoint c;
    ModelConfig cfg = small_model(3);
    c.params = xavier_init<float>(cfg, 5);
    c.question_ids = {"a", "b", "c"};
    c.tags = {{"a", {"x", "y"}}, {"c", {"z"}}};
    c.info.epoch = 4;
    c.info.val_auc = 0.7123456789;
    c.info.base_rate = 0.61;
    c.info.seed = 99;
    c.info.split_seed = 7;
    return c;
}

std::string bytes_of(const Checkpoint& c) {
    std::ostringstream out(std::ios::binary);
    save_checkpoint(out, c);
    return out.str();
}

CheckpointError::Kind load_error(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    try {
        load_checkpoint(in);
    } catch (const CheckpointError& e) {
        return e.kind();
    }
    FAIL("expected CheckpointError");
    return CheckpointError::Kind::io;
}

}  // namespace

TEST_CASE("xavier_init bounds, biases and determinism") {
    ModelConfig cfg;
    cfg.question_vocab = 50;
    const auto p = xavier_init<float>(cfg, 11);
    // w_input of layer 1 is 256 x 512; the head's first layer is 384 x 512.
    const double bound = std::sqrt(6.0 / (128 + 256));
    CHECK(bound == doctest::Approx(0.125));
    for (float v : p.at("attention.u_a").span()) CHECK(std::abs(v) <= bound);
    const auto& emb = p.at("embed.question");
    const double emb_bound = std::sqrt(6.0 / 256);
    float emb_max = 0;
    for (float v : emb.span()) emb_max = std::max(emb_max, std::abs(v));
    CHECK(emb_max <= emb_bound);
    CHECK(emb_max > 0.9 * emb_bound);

    const auto& bias = p.at("encoder.l0.fwd.bias");
    for (std::size_t j = 0; j < 512; ++j) CHECK(bias(0, j) == ((j >= 128 && j < 256) ? 1.0f : 0.0f));
    for (float v : p.at("head.l0.bias").span()) CHECK(v == 0.0f);

    CHECK(xavier_init<float>(cfg, 11) == p);
    CHECK(!(xavier_init<float>(cfg, 12) == p));

    ModelConfig wide;
    wide.question_vocab = 1;
    wide.d_embed = 512;
    wide.d_lstm = 256;
    const auto w = xavier_init<double>(wide, 3);
    double sum = 0;
    const auto& m = w.at("encoder.l0.fwd.w_hidden");  // 256 x 1024
    for (double v : m.span()) sum += v;
    CHECK(std::abs(sum / double(m.size())) < 0.01);
}

TEST_CASE("bce_loss examples") {
    CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(0.9, 0) == doctest::Approx(2.302585093).epsilon(1e-9));
    CHECK(bce_loss(1.0 - 1e-12, 1) < 1e-6);
    CHECK(std::isfinite(bce_loss(0.0, 1)));
    CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("adam first step closed form") {
    ModelConfig cfg = small_model(2);
    Parameters<double> p(cfg), g(cfg);
    p.at("head.out.bias")(0, 0) = 1.0;
    g.at("head.out.bias")(0, 0) = 2.0;
    AdamState<double> st(cfg);
    TrainConfig tc;
    adam_step(p, g, st, tc);
    CHECK(st.step == 1);
    CHECK(p.at("head.out.bias")(0, 0) == doctest::Approx(1.0 - 0.001 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
    // Zero gradients elsewhere leave the parameters unchanged.
    CHECK(p.at("head.l0.bias")(0, 0) == 0.0);

    g.set_zero();
    const double before = p.at("head.out.bias")(0, 0);
    const double m_before = st.m.at("head.out.bias")(0, 0);
    adam_step(p, g, st, tc);
    CHECK(st.m.at("head.out.bias")(0, 0) == doctest::Approx(0.9 * m_before));
    CHECK(p.at("head.out.bias")(0, 0) < before);  // momentum keeps moving

    g.at("attention.w_a")(1, 1) = std::nan("");
    try {
        adam_step(p, g, st, tc);
        FAIL("expected NonFiniteGradient");
    } catch (const NonFiniteGradient& e) {
        CHECK(e.tensor() == "attention.w_a");
    }
}

TEST_CASE("adam decreases a convex quadratic") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3, 3);
    ModelConfig cfg = small_model(2);
    for (int trial = 0; trial < 100; ++trial) {
        Parameters<double> p(cfg), g(cfg);
        AdamState<double> st(cfg);
        double before = 0;
        for (std::size_t i = 0; i < p.count(); ++i)
            for (auto& v : p.tensor(i).span()) v = u(rng);
        for (std::size_t i = 0; i < p.count(); ++i) {
            auto ps = p.tensor(i).span();
            auto gs = g.tensor(i).span();
            for (std::size_t j = 0; j < ps.size(); ++j) {
                before += 0.5 * ps[j] * ps[j];
                gs[j] = ps[j];
            }
        }
        adam_step(p, g, st, TrainConfig{});
        double after = 0;
        for (std::size_t i = 0; i < p.count(); ++i)
            for (double v : p.tensor(i).span()) after += 0.5 * v * v;
        CHECK(after < before);
    }
}

TEST_CASE("clip_global_norm") {
    ModelConfig cfg = small_model(2);
    Parameters<double> g(cfg);
    g.at("head.out.bias")(0, 0) = 3.0;
    g.at("head.l0.bias")(0, 0) = 4.0;
    CHECK(clip_global_norm(g, 5.0) == doctest::Approx(5.0));
    CHECK(g.at("head.out.bias")(0, 0) == 3.0);
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g.at("head.out.bias")(0, 0) == doctest::Approx(0.6));
    CHECK(g.at("head.l0.bias")(0, 0) == doctest::Approx(0.8));
    g.at("head.out.bias")(0, 0) = 30.0;
    clip_global_norm(g, 0.0);
    CHECK(g.at("head.out.bias")(0, 0) == 30.0);
}

TEST_CASE("batch loss is the mean of per-example losses") {
    const auto sim = small_sim(10);
    const auto cat = Catalog::from_sequences(sim.sequences, sim.tags);
    ModelConfig cfg = small_model(cat.vocab());
    const auto params = xavier_init<float>(cfg, 2);
    std::vector<std::vector<Step>> enc;
    for (const auto& s : sim.sequences) enc.push_back(cat.encode(s));
    for (const auto& batch : window_and_batch(enc, cfg.window, 17)) {
        Engine<float> e(params);
        const auto p = e.forward(batch);
        double mean = 0;
        for (std::size_t b = 0; b < batch.size; ++b) mean += bce_loss(p[b], batch.labels[b]);
        CHECK(e.mean_loss() == doctest::Approx(mean / double(batch.size)).epsilon(1e-6));
    }
}

TEST_CASE("predict_examples is independent of batching") {
    const auto sim = small_sim(12);
    const auto cat = Catalog::from_sequences(sim.sequences, sim.tags);
    const auto params = xavier_init<float>(small_model(cat.vocab()), 2);
    std::vector<std::vector<Step>> enc;
    for (const auto& s : sim.sequences) enc.push_back(cat.encode(s));
    const auto ex = enumerate_examples(enc);
    const auto a = predict_examples(params, enc, ex, 1);
    const auto b = predict_examples(params, enc, ex, 64);
    CHECK(a == b);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const Checkpoint c = sample_checkpoint();
    const std::string bytes = bytes_of(c);
    std::istringstream in(bytes, std::ios::binary);
    const Checkpoint back = load_checkpoint(in);
    CHECK(back == c);
    CHECK(bytes_of(back) == bytes);
}

TEST_CASE("checkpoint corruption yields named errors") {
    const std::string bytes = bytes_of(sample_checkpoint());
    using K = CheckpointError::Kind;

    std::string bumped = bytes;
    bumped[8] = char(kCheckpointVersion + 1);
    CHECK(load_error(bumped) == K::version);
    try {
        std::istringstream in(bumped, std::ios::binary);
        load_checkpoint(in);
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("version 2") != std::string::npos);
    }

    CHECK(load_error(bytes.substr(0, bytes.size() - 3)) == K::truncated);
    CHECK(load_error(bytes.substr(0, 5)) == K::truncated);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK(load_error(magic) == K::bad_magic);
    CHECK(load_error(bytes + "x") == K::metadata);

    // Rename a tensor: unknown name.
    std::string renamed = bytes;
    const auto pos = renamed.find("head.out.bias");
    REQUIRE(pos != std::string::npos);
    renamed[pos] = 'H';
    CHECK(load_error(renamed) == K::unknown_tensor);

    // Drop the last tensor and fix up the count: missing tensor named.
    Checkpoint c = sample_checkpoint();
    std::ostringstream out(std::ios::binary);
    save_checkpoint(out, c);
    std::string full = out.str();
    const std::size_t last = full.rfind("head.out.bias") - 4;
    std::string dropped = full.substr(0, last);
    // Tensor count lives right after the metadata block.
    const std::uint32_t meta_len = std::uint8_t(full[12]) | std::uint8_t(full[13]) << 8 |
                                   std::uint8_t(full[14]) << 16 | std::uint8_t(full[15]) << 24;
    const std::size_t count_at = 16 + meta_len;
    dropped[count_at] = char(std::uint8_t(dropped[count_at]) - 1);
    try {
        std::istringstream in(dropped, std::ios::binary);
        load_checkpoint(in);
        FAIL("expected missing tensor error");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == K::missing_tensor);
        CHECK(std::string(e.what()).find("head.out.bias") != std::string::npos);
    }
}

TEST_CASE("fit keeps the best validation epoch and is deterministic") {
    const auto sim = small_sim(40);
    const auto split = split_by_user(sim.sequences, {0.8, 0.1, 0.1}, 1);
    const auto cat = Catalog::from_sequences(split.train, sim.tags);
    TrainConfig tc;
    tc.max_epochs = 4;
    tc.batch_size = 32;
    tc.seed = 5;
    const auto a = fit(split.train, split.validation, cat, small_model(0), tc);
    const auto b = fit(split.train, split.validation, cat, small_model(0), tc);
    REQUIRE(a.log.size() == 4);
    CHECK(bytes_of(a.best) == bytes_of(b.best));
    std::ostringstream la, lb;
    write_epoch_log(la, a.log);
    write_epoch_log(lb, b.log);
    CHECK(la.str() == lb.str());
    for (const auto& r : a.log) CHECK(a.best.info.val_auc >= r.val_auc);
    CHECK(a.log.back().loss < a.log.front().loss);
    CHECK(a.best.params.config().question_vocab == cat.vocab());
}

TEST_CASE("fit stops after patience stale epochs") {
    const auto sim = small_sim(20);
    const auto split = split_by_user(sim.sequences, {0.6, 0.2, 0.2}, 1);
    const auto cat = Catalog::from_sequences(split.train, sim.tags);
    TrainConfig tc;
    tc.max_epochs = 30;
    tc.patience = 5;
    tc.learning_rate = 1e-12;  // validation AUC never improves after epoch 1
    const auto r = fit(split.train, split.validation, cat, small_model(0), tc);
    CHECK(r.reason == StopReason::patience);
    CHECK(r.log.size() == 6);
    CHECK(r.best.info.epoch == 1);
}
