#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kt/training/training.hpp"

namespace kt {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(std::string("train config: ") + msg);
    };
    require(learning_rate > 0, "learning_rate must be > 0");
    require(beta1 >= 0 && beta1 < 1, "beta1 must be in [0, 1)");
    require(beta2 >= 0 && beta2 < 1, "beta2 must be in [0, 1)");
    require(epsilon > 0, "epsilon must be > 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(max_epochs >= 1, "max_epochs must be >= 1");
    require(patience >= 1, "patience must be >= 1");
    require(max_seconds >= 0, "max_seconds must be >= 0");
}

template <typename Real>
Parameters<Real> xavier_init(const ModelConfig& config, std::uint64_t seed) {
    Parameters<Real> params(config);
    const ParamLayout& lay = params.layout();
    std::vector<bool> is_bias(params.count(), false);
    for (const auto& dirs : lay.lstm)
        for (const auto& s : dirs)
            if (s.bias != kAbsent) is_bias[s.bias] = true;
    for (std::size_t i : lay.head_bias) is_bias[i] = true;
    for (std::size_t i : {lay.fc_bias, lay.out_bias})
        if (i != kAbsent) is_bias[i] = true;

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto& t = params.tensor(i);
        if (is_bias[i]) {
            t.fill(Real(0));
            continue;
        }
        double fan_in = double(t.rows()), fan_out = double(t.cols());
        if (i == lay.question_embed || i == lay.response_embed) {
            fan_in = fan_out = double(config.d_embed);
        } else if (i == lay.attn_v) {
            fan_in = double(config.d_attn);
            fan_out = 1;
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : t.span()) v = static_cast<Real>(u(rng));
    }
    for (const auto& dirs : lay.lstm)
        for (const auto& s : dirs) {
            if (s.bias == kAbsent) continue;
            auto row = params.tensor(s.bias).row(0);
            for (std::size_t j = config.d_lstm; j < 2 * config.d_lstm; ++j) row[j] = Real(1);
        }
    return params;
}

double bce_loss(double p, double label) {
    const double q = std::clamp(p, 1e-7, 1.0 - 1e-7);
    return -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
}

template <typename Real>
void adam_step(Parameters<Real>& params, const Parameters<Real>& grads, AdamState<Real>& state,
               const TrainConfig& config) {
    for (std::size_t i = 0; i < grads.count(); ++i)
        for (Real g : grads.tensor(i).span())
            if (!std::isfinite(g)) throw NonFiniteGradient(grads.name(i));

    ++state.step;
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, double(state.step));
    const double c2 = 1.0 - std::pow(b2, double(state.step));
    const double lr = config.learning_rate;
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto p = params.tensor(i).span();
        auto g = grads.tensor(i).span();
        auto m = state.m.tensor(i).span();
        auto v = state.v.tensor(i).span();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<Real>(mj);
            v[j] = static_cast<Real>(vj);
            p[j] = static_cast<Real>(p[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + config.epsilon));
        }
    }
}

template <typename Real>
double clip_global_norm(Parameters<Real>& grads, double max_norm) {
    double sq = 0;
    for (std::size_t i = 0; i < grads.count(); ++i)
        for (Real g : grads.tensor(i).span()) sq += double(g) * double(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (std::size_t i = 0; i < grads.count(); ++i)
            for (auto& g : grads.tensor(i).span()) g = static_cast<Real>(g * scale);
    }
    return norm;
}

template <typename Real>
void for_each_prediction(const Parameters<Real>& params, const std::vector<std::vector<Step>>& encoded,
                         std::span<const ExampleRef> examples, std::size_t batch_size,
                         const std::function<void(const Engine<Real>&, std::size_t, std::size_t)>& visit) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    const std::size_t window = params.config().window;
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    auto len = [&](std::size_t i) { return std::min<std::size_t>(examples[i].t, window); };
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return len(a) < len(b); });

    Engine<Real> engine(params);
    std::vector<PrefixView> views;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        views.clear();
        for (std::size_t k = start; k < end; ++k) views.push_back(prefix_view(encoded, examples[order[k]], window));
        const Batch batch = make_batch(views);
        engine.forward(batch);
        for (std::size_t k = start; k < end; ++k) visit(engine, k - start, order[k]);
    }
}

template <typename Real>
std::vector<double> predict_examples(const Parameters<Real>& params,
                                     const std::vector<std::vector<Step>>& encoded,
                                     std::span<const ExampleRef> examples, std::size_t batch_size) {
    std::vector<double> out(examples.size());
    for_each_prediction<Real>(params, encoded, examples, batch_size,
                              [&](const Engine<Real>& e, std::size_t b, std::size_t i) {
                                  out[i] = double(e.probabilities()[b]);
                              });
    return out;
}

std::vector<std::uint8_t> example_labels(const std::vector<std::vector<Step>>& encoded,
                                         std::span<const ExampleRef> examples) {
    std::vector<std::uint8_t> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(encoded[ex.user][ex.t].response);
    return out;
}

#define KT_INSTANTIATE(Real)                                                                          \
    template Parameters<Real> xavier_init<Real>(const ModelConfig&, std::uint64_t);                   \
    template void adam_step(Parameters<Real>&, const Parameters<Real>&, AdamState<Real>&,             \
                            const TrainConfig&);                                                      \
    template double clip_global_norm(Parameters<Real>&, double);                                      \
    template void for_each_prediction(                                                                \
        const Parameters<Real>&, const std::vector<std::vector<Step>>&, std::span<const ExampleRef>,  \
        std::size_t, const std::function<void(const Engine<Real>&, std::size_t, std::size_t)>&);     \
    template std::vector<double> predict_examples(const Parameters<Real>&,                            \
                                                  const std::vector<std::vector<Step>>&,              \
                                                  std::span<const ExampleRef>, std::size_t);

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)

}  // namespace kt
