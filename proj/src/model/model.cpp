#include "kt/model/model.hpp"

#include <cmath>
#include <string>

#include "kt/numerics/ops.hpp"

namespace kt {

namespace {

template <typename Real>
Vector<Real> row_vector(const Matrix<Real>& m, std::size_t r = 0) {
    const auto row = m.row(r);
    return Vector<Real>(std::vector<Real>(row.begin(), row.end()));
}

template <typename Real>
Vector<Real> concat(const Vector<Real>& a, const Vector<Real>& b) {
    std::vector<Real> out(a.values());
    out.insert(out.end(), b.values().begin(), b.values().end());
    return Vector<Real>(std::move(out));
}

template <typename Real>
Vector<Real> tanh_affine(const Vector<Real>& x, const Matrix<Real>& w, const Matrix<Real>& b) {
    return activations(affine(x, w, row_vector(b)), Activation::tanh);
}

template <typename Real>
std::vector<Vector<Real>> run_lstm(const LstmWeights<Real>& w, const std::vector<Vector<Real>>& xs,
                                   bool reverse) {
    const std::size_t h = w.w_hidden.rows();
    std::vector<Vector<Real>> out(xs.size());
    LstmState<Real> state{Vector<Real>(h), Vector<Real>(h)};
    for (std::size_t t = 0; t < xs.size(); ++t) {
        const std::size_t k = reverse ? xs.size() - 1 - t : t;
        state = lstm_cell(w, xs[k], state.h, state.c);
        out[k] = state.h;
    }
    return out;
}

}  // namespace

template <typename Real>
struct TraceCache {
    const Parameters<Real>* params;
    Batch batch;
    Engine<Real> engine;

    TraceCache(const Parameters<Real>& p, Batch b) : params(&p), batch(std::move(b)), engine(p) {}
};

template <typename Real>
Vector<Real> embed_interaction(const Parameters<Real>& params, std::size_t question,
                               unsigned response) {
    const auto& qe = params.tensor(params.layout().question_embed);
    const auto& re = params.tensor(params.layout().response_embed);
    if (question >= qe.rows())
        throw std::out_of_range("question index " + std::to_string(question) + " >= " +
                                std::to_string(qe.rows()));
    if (response > 1) throw std::out_of_range("response bit must be 0 or 1");
    return elementwise_mul(row_vector(qe, question), row_vector(re, response));
}

template <typename Real>
LstmState<Real> lstm_cell(const LstmWeights<Real>& w, const Vector<Real>& x,
                          const Vector<Real>& h_prev, const Vector<Real>& c_prev) {
    const std::size_t h = w.w_hidden.rows();
    if (w.w_hidden.cols() != 4 * h || w.w_input.cols() != 4 * h || w.bias.cols() != 4 * h)
        throw ShapeError("lstm_cell: weights must have 4 * hidden columns");
    if (h_prev.dim() != h || c_prev.dim() != h)
        throw ShapeError("lstm_cell: state dim " + std::to_string(h_prev.dim()) +
                         " != hidden " + std::to_string(h));
    Vector<Real> pre = affine(x, w.w_input, row_vector(w.bias));
    const Vector<Real> rec = affine(h_prev, w.w_hidden, Vector<Real>(4 * h));
    for (std::size_t j = 0; j < 4 * h; ++j) pre[j] += rec[j];

    LstmState<Real> next{Vector<Real>(h), Vector<Real>(h)};
    for (std::size_t j = 0; j < h; ++j) {
        const Real i = sigmoid(pre[j]);
        const Real f = sigmoid(pre[h + j]);
        const Real o = sigmoid(pre[2 * h + j]);
        const Real g = std::tanh(pre[3 * h + j]);
        next.c[j] = f * c_prev[j] + i * g;
        next.h[j] = o * std::tanh(next.c[j]);
    }
    return next;
}

template <typename Real>
std::vector<Vector<Real>> encode_prefix(const Parameters<Real>& params,
                                        const std::vector<Vector<Real>>& fused) {
    const ModelConfig& cfg = params.config();
    const ParamLayout& lay = params.layout();
    if (fused.empty()) throw ColdStartError("encode_prefix: empty prefix");
    if (fused.size() > cfg.window)
        throw std::invalid_argument("encode_prefix: prefix longer than the window");

    if (cfg.encoder == EncoderKind::fc) {
        std::vector<Vector<Real>> z;
        for (const auto& x : fused)
            z.push_back(tanh_affine(x, params.tensor(lay.fc_weight), params.tensor(lay.fc_bias)));
        return z;
    }
    std::vector<Vector<Real>> xs = fused;
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
        auto weights = [&](int dir) {
            const LstmSlots& s = lay.lstm[l][dir];
            return LstmWeights<Real>{params.tensor(s.w_input), params.tensor(s.w_hidden),
                                     params.tensor(s.bias)};
        };
        const auto fwd = run_lstm(weights(0), xs, false);
        if (cfg.encoder == EncoderKind::bilstm) {
            const auto bwd = run_lstm(weights(1), xs, true);
            for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = concat(fwd[k], bwd[k]);
        } else {
            xs = fwd;
        }
    }
    if (cfg.encoder == EncoderKind::lstm)
        for (auto& z : xs) z = concat(z, Vector<Real>(cfg.d_lstm));
    return xs;
}

template <typename Real>
AttentionResult<Real> attend(const Parameters<Real>& params, const std::vector<Vector<Real>>& z,
                             const Mask& mask, const Vector<Real>& q_target) {
    const ModelConfig& cfg = params.config();
    const ParamLayout& lay = params.layout();
    const std::size_t e = cfg.encoder_dim();
    if (z.size() != mask.length()) throw ShapeError("attend: z count != mask length");
    if (q_target.dim() != cfg.d_embed) throw ShapeError("attend: target dim != d_embed");
    if (mask.count_valid() == 0) throw std::invalid_argument("attend: every step is masked");

    AttentionResult<Real> out{Vector<Real>(e), Vector<Real>(z.size()), Vector<Real>(z.size())};
    if (cfg.attention == AttentionKind::none) {
        const Real w = Real(1) / Real(mask.count_valid());
        for (std::size_t k = 0; k < z.size(); ++k)
            if (mask.valid(k)) out.alpha[k] = w;
    } else {
        const Vector<Real> zero(cfg.d_attn);
        const Vector<Real> pq = affine(q_target, params.tensor(lay.attn_u), zero);
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (!mask.valid(k)) continue;
            Vector<Real> pz = affine(z[k], params.tensor(lay.attn_w), zero);
            Real score = 0;
            if (cfg.attention == AttentionKind::additive) {
                const auto& v = params.tensor(lay.attn_v);
                for (std::size_t j = 0; j < cfg.d_attn; ++j)
                    score += v(0, j) * std::tanh(pz[j] + pq[j]);
            } else {
                for (std::size_t j = 0; j < cfg.d_attn; ++j) score += pz[j] * pq[j];
            }
            out.scores[k] = score;
        }
        out.alpha = masked_softmax(out.scores, mask);
    }
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (!mask.valid(k)) continue;
        if (z[k].dim() != e) throw ShapeError("attend: encoder output dim != 2 * d_lstm");
        for (std::size_t j = 0; j < e; ++j) out.u[j] += out.alpha[k] * z[k][j];
    }
    return out;
}

template <typename Real>
Real predict_head(const Parameters<Real>& params, const Vector<Real>& u,
                  const Vector<Real>& q_target) {
    const ModelConfig& cfg = params.config();
    const ParamLayout& lay = params.layout();
    if (u.dim() != cfg.encoder_dim() || q_target.dim() != cfg.d_embed)
        throw ShapeError("predict_head: input dims do not match the config");
    Vector<Real> a = concat(u, q_target);
    for (std::size_t k = 0; k < cfg.head_dims.size(); ++k)
        a = tanh_affine(a, params.tensor(lay.head_weight[k]), params.tensor(lay.head_bias[k]));
    const Vector<Real> logit =
        affine(a, params.tensor(lay.out_weight), row_vector(params.tensor(lay.out_bias)));
    return sigmoid(logit[0]);
}

template <typename Real>
ForwardTrace<Real> forward_step(const Parameters<Real>& params, std::span<const Step> history,
                                std::uint32_t target, bool keep_cache) {
    if (history.empty()) throw ColdStartError("forward_step: empty history");
    const std::size_t window = params.config().window;
    if (history.size() > window) history = history.subspan(history.size() - window);

    const PrefixView view{history, target, 0};
    auto cache = std::make_shared<TraceCache<Real>>(params, make_batch({&view, 1}));
    Engine<Real>& eng = cache->engine;
    eng.forward(cache->batch);

    const ModelConfig& cfg = params.config();
    const std::size_t len = history.size();
    auto vec = [](std::span<const Real> s) {
        return Vector<Real>(std::vector<Real>(s.begin(), s.end()));
    };
    ForwardTrace<Real> trace;
    trace.scores = Vector<Real>(len);
    trace.alpha = Vector<Real>(len);
    for (std::size_t s = 0; s < len; ++s) {
        trace.fused.push_back(vec(eng.fused_input(s, 0)));
        trace.z.push_back(vec(eng.encoder_output(s, 0)));
        if (cfg.encoder != EncoderKind::fc) trace.hidden_forward.push_back(vec(eng.direction_output(0, s, 0)));
        if (cfg.encoder == EncoderKind::bilstm)
            trace.hidden_backward.push_back(vec(eng.direction_output(1, s, 0)));
        trace.scores[s] = eng.attention_score(0, s);
        trace.alpha[s] = eng.attention_weight(0, s);
    }
    trace.u = vec(eng.user_vector(0));
    trace.logit = eng.logits()[0];
    trace.p = eng.probabilities()[0];
    if (keep_cache) trace.cache = std::move(cache);
    return trace;
}

template <typename Real>
Parameters<Real> backward_step(const Parameters<Real>& params, const ForwardTrace<Real>& trace,
                               Real label) {
    if (!trace.has_cache())
        throw std::logic_error("backward_step: trace was produced without cached activations");
    if (trace.cache->params != &params)
        throw std::invalid_argument("backward_step: trace belongs to different parameters");
    Parameters<Real> grads(params.config());
    const Real dlogit = trace.p - label;
    trace.cache->engine.backward({&dlogit, 1}, grads);
    return grads;
}

#define KT_INSTANTIATE(Real)                                                                   \
    template Vector<Real> embed_interaction(const Parameters<Real>&, std::size_t, unsigned);   \
    template LstmState<Real> lstm_cell(const LstmWeights<Real>&, const Vector<Real>&,          \
                                       const Vector<Real>&, const Vector<Real>&);              \
    template std::vector<Vector<Real>> encode_prefix(const Parameters<Real>&,                  \
                                                     const std::vector<Vector<Real>>&);        \
    template AttentionResult<Real> attend(const Parameters<Real>&,                             \
                                          const std::vector<Vector<Real>>&, const Mask&,       \
                                          const Vector<Real>&);                                \
    template Real predict_head(const Parameters<Real>&, const Vector<Real>&,                   \
                               const Vector<Real>&);                                           \
    template ForwardTrace<Real> forward_step(const Parameters<Real>&, std::span<const Step>,   \
                                             std::uint32_t, bool);                             \
    template Parameters<Real> backward_step(const Parameters<Real>&, const ForwardTrace<Real>&, \
                                            Real);

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)
KT_INSTANTIATE(long double)

}  // namespace kt
