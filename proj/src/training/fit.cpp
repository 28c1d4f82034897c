#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "kt/training/training.hpp"

namespace kt {

namespace {

// Shuffled batches whose members have similar prefix lengths: a shuffled
// stream is cut into pools of 32 batches, each pool is sorted by length and
// sliced, and the resulting batch order is shuffled again.
std::vector<std::vector<ExampleRef>> epoch_batches(std::vector<ExampleRef> examples, std::size_t batch_size,
                                                   std::size_t window, std::mt19937_64& rng) {
    std::shuffle(examples.begin(), examples.end(), rng);
    const std::size_t pool = batch_size * 32;
    auto len = [&](const ExampleRef& e) { return std::min<std::size_t>(e.t, window); };
    std::vector<std::vector<ExampleRef>> batches;
    for (std::size_t start = 0; start < examples.size(); start += pool) {
        const auto first = examples.begin() + start;
        const auto last = examples.begin() + std::min(examples.size(), start + pool);
        std::stable_sort(first, last, [&](const auto& a, const auto& b) { return len(a) < len(b); });
        for (auto it = first; it < last; it += std::min<std::ptrdiff_t>(batch_size, last - it))
            batches.emplace_back(it, it + std::min<std::ptrdiff_t>(batch_size, last - it));
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

}  // namespace

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::max_epochs:
            return "max_epochs";
        case StopReason::patience:
            return "patience";
        case StopReason::time_limit:
            return "time_limit";
        case StopReason::diverged:
            return "diverged";
        case StopReason::callback:
            return "callback";
    }
    return "?";
}

void write_epoch_log(std::ostream& out, const std::vector<EpochRecord>& log) {
    out << "epoch\tloss\tval_auc\tval_acc\tval_f1\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", r.epoch, r.loss, r.val_auc, r.val_acc,
                      r.val_f1);
        out << buf;
    }
}

FitResult fit(const std::vector<UserSequence>& train, const std::vector<UserSequence>& validation,
              const Catalog& catalog, ModelConfig model, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train.empty() || validation.empty()) throw std::invalid_argument("fit: empty train or validation split");
    model.question_vocab = catalog.vocab();
    model.validate();

    std::vector<std::vector<Step>> train_enc, val_enc;
    std::size_t correct = 0, events = 0;
    for (const auto& s : train) {
        train_enc.push_back(catalog.encode(s));
        for (const auto& x : s.interactions) correct += x.correct;
        events += s.size();
    }
    for (const auto& s : validation) val_enc.push_back(catalog.encode(s));
    const auto train_examples = enumerate_examples(train_enc);
    const auto val_examples = enumerate_examples(val_enc);
    if (train_examples.empty() || val_examples.empty())
        throw std::invalid_argument("fit: splits need users with at least two interactions");
    const auto val_labels = example_labels(val_enc, val_examples);

    FitResult result;
    Parameters<float> params = xavier_init<float>(model, config.seed);
    Parameters<float> grads(model);
    AdamState<float> adam(model);
    Engine<float> engine(params);

    result.best.params = params;
    result.best.question_ids = catalog.ids();
    result.best.tags = catalog.tag_table();
    result.best.info.seed = config.seed;
    result.best.info.base_rate = events ? double(correct) / double(events) : 0.5;
    result.best.info.val_auc = -1;

    const auto t0 = std::chrono::steady_clock::now();
    std::size_t stale = 0;
    std::vector<PrefixView> views;
    result.reason = StopReason::max_epochs;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::seed_seq seq{std::uint32_t(config.seed), std::uint32_t(config.seed >> 32), std::uint32_t(epoch)};
        std::mt19937_64 rng(seq);
        const auto batches = epoch_batches(train_examples, config.batch_size, model.window, rng);

        double loss_sum = 0;
        bool diverged = false;
        for (const auto& members : batches) {
            views.clear();
            for (const auto& ex : members) views.push_back(prefix_view(train_enc, ex, model.window));
            const Batch batch = make_batch(views);
            engine.forward(batch);
            const double loss = engine.mean_loss();
            if (!std::isfinite(loss)) {
                diverged = true;
                break;
            }
            loss_sum += loss * double(batch.size);
            grads.set_zero();
            engine.backward(engine.mean_bce_logit_grads(), grads);
            try {
                clip_global_norm(grads, config.clip_norm);
                adam_step(params, grads, adam, config);
            } catch (const NonFiniteGradient&) {
                diverged = true;
                break;
            }
        }
        if (diverged) {
            result.reason = StopReason::diverged;
            break;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / double(train_examples.size());
        const auto val_p = predict_examples(params, val_enc, val_examples);
        const auto m = evaluate(val_p, val_labels);
        rec.val_auc = m.auc;
        rec.val_acc = m.acc;
        rec.val_f1 = m.f1;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);

        if (epoch == 1 || rec.val_auc > result.best.info.val_auc) {
            result.best.params = params;
            auto& info = result.best.info;
            info.epoch = epoch;
            info.val_auc = rec.val_auc;
            info.val_acc = rec.val_acc;
            info.val_f1 = rec.val_f1;
            stale = 0;
        } else {
            ++stale;
        }
        if (on_epoch && !on_epoch(rec, params)) {
            result.reason = StopReason::callback;
            break;
        }
        if (stale >= config.patience) {
            result.reason = StopReason::patience;
            break;
        }
        if (config.max_seconds > 0 && rec.seconds >= config.max_seconds) {
            result.reason = StopReason::time_limit;
            break;
        }
    }
    return result;
}

}  // namespace kt
