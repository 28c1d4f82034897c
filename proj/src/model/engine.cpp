#include "kt/model/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kt/numerics/kernels.hpp"

namespace kt {

namespace {

template <typename Real>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const Real* a,
          std::size_t lda, const Real* b, std::size_t ldb, bool acc, Real* c, std::size_t ldc) {
    kernels::gemm<Real>(ta, tb, m, n, k, a, lda, b, ldb, acc, c, ldc);
}

template <typename Real>
void sigmoid_inplace(Real* x, std::size_t n) {
    kernels::sigmoid<Real>(std::span<const Real>(x, n), std::span<Real>(x, n));
}

template <typename Real>
void tanh_inplace(Real* x, std::size_t n) {
    kernels::tanh<Real>(std::span<const Real>(x, n), std::span<Real>(x, n));
}

template <typename Real>
void add_row_bias(Real* m, std::size_t rows, std::size_t cols, const Real* bias) {
    for (std::size_t r = 0; r < rows; ++r) {
        Real* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
    }
}

template <typename Real>
void add_column_sums(const Real* m, std::size_t rows, std::size_t cols, Real* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* row = m + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
    }
}

template <typename Real>
void resize(std::vector<Real>& v, std::size_t n) {
    v.resize(n);
}

}  // namespace

template <typename Real>
Engine<Real>::Engine(const Parameters<Real>& params)
    : params_(params),
      cfg_(params.config()),
      lay_(params.layout()),
      de_(cfg_.d_embed),
      h_(cfg_.d_lstm),
      e_(cfg_.encoder_dim()),
      da_(cfg_.d_attn) {}

template <typename Real>
std::size_t Engine<Real>::layer_in_dim(std::size_t layer) const {
    if (layer == 0) return de_;
    return bidirectional() ? 2 * h_ : h_;
}

template <typename Real>
std::size_t Engine<Real>::layer_out_dim(std::size_t layer) const {
    if (cfg_.encoder == EncoderKind::fc) return e_;
    if (bidirectional() || layer + 1 == cfg_.lstm_layers) return e_;
    return h_;
}

template <typename Real>
const Real* Engine<Real>::layer_input(std::size_t layer) const {
    return layer == 0 ? x0_.data() : out_[layer - 1].data();
}

template <typename Real>
std::span<const Real> Engine<Real>::forward(const Batch& batch) {
    if (batch.size == 0 || batch.steps == 0) throw std::invalid_argument("forward: empty batch");
    const std::size_t vocab_rows = cfg_.question_vocab + 1;
    for (std::size_t i = 0; i < batch.questions.size(); ++i) {
        if (batch.valid[i] && (batch.questions[i] >= vocab_rows || batch.responses[i] > 1))
            throw std::out_of_range("forward: interaction index out of range");
    }
    for (std::size_t b = 0; b < batch.size; ++b) {
        if (batch.targets[b] >= vocab_rows)
            throw std::out_of_range("forward: target question index " +
                                    std::to_string(batch.targets[b]) + " out of range");
        if (batch.lengths[b] == 0) throw std::invalid_argument("forward: empty prefix");
    }
    batch_ = &batch;
    b_ = batch.size;
    l_ = batch.steps;
    n_ = b_ * l_;
    embed();
    encode();
    attend();
    head();
    return probs_;
}

template <typename Real>
void Engine<Real>::embed() {
    const auto& qe = params_.tensor(lay_.question_embed);
    const auto& re = params_.tensor(lay_.response_embed);
    resize(x0_, n_ * de_);
    for (std::size_t i = 0; i < n_; ++i) {
        Real* dst = x0_.data() + i * de_;
        if (!batch_->valid[i]) {
            std::fill(dst, dst + de_, Real(0));
            continue;
        }
        const auto q = qe.row(batch_->questions[i]);
        const auto r = re.row(batch_->responses[i]);
        for (std::size_t j = 0; j < de_; ++j) dst[j] = q[j] * r[j];
    }
    resize(qt_, b_ * de_);
    for (std::size_t b = 0; b < b_; ++b) {
        const auto q = qe.row(batch_->targets[b]);
        std::copy(q.begin(), q.end(), qt_.begin() + b * de_);
    }
}

template <typename Real>
void Engine<Real>::encode() {
    if (cfg_.encoder == EncoderKind::fc) {
        out_.resize(1);
        auto& z = out_[0];
        resize(z, n_ * e_);
        gemm<Real>(false, false, n_, e_, de_, x0_.data(), de_,
                   params_.tensor(lay_.fc_weight).data(), e_, false, z.data(), e_);
        add_row_bias(z.data(), n_, e_, params_.tensor(lay_.fc_bias).data());
        tanh_inplace(z.data(), z.size());
        for (std::size_t i = 0; i < n_; ++i)
            if (!batch_->valid[i]) std::fill(z.begin() + i * e_, z.begin() + (i + 1) * e_, Real(0));
        return;
    }
    const std::size_t layers = cfg_.lstm_layers;
    out_.resize(layers);
    dirs_.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t od = layer_out_dim(l);
        resize(out_[l], n_ * od);
        if (!bidirectional() && od > h_) {
            // Unidirectional output padded to 2H.
            for (std::size_t i = 0; i < n_; ++i)
                std::fill(out_[l].begin() + i * od + h_, out_[l].begin() + (i + 1) * od, Real(0));
        }
        run_direction(l, 0);
        if (bidirectional()) run_direction(l, 1);
    }
}

template <typename Real>
void Engine<Real>::run_direction(std::size_t layer, int dir) {
    const LstmSlots& slots = lay_.lstm[layer][dir];
    const std::size_t in = layer_in_dim(layer);
    const std::size_t g4 = 4 * h_;
    const std::size_t od = layer_out_dim(layer);
    const std::size_t col = dir == 0 ? 0 : h_;
    Direction& d = dirs_[layer][dir];
    resize(d.gates, n_ * g4);
    resize(d.cell, n_ * h_);
    resize(d.tcell, n_ * h_);
    Real* out = out_[layer].data();

    gemm<Real>(false, false, n_, g4, in, layer_input(layer), in,
               params_.tensor(slots.w_input).data(), g4, false, d.gates.data(), g4);
    add_row_bias(d.gates.data(), n_, g4, params_.tensor(slots.bias).data());
    const Real* w_hidden = params_.tensor(slots.w_hidden).data();

    for (std::size_t t = 0; t < l_; ++t) {
        const std::size_t s = dir == 0 ? t : l_ - 1 - t;
        const bool has_prev = t > 0;
        const std::size_t prev = dir == 0 ? s - 1 : s + 1;
        Real* gs = d.gates.data() + s * b_ * g4;
        if (has_prev)
            gemm<Real>(false, false, b_, g4, h_, out + prev * b_ * od + col, od, w_hidden, g4, true,
                       gs, g4);
        for (std::size_t b = 0; b < b_; ++b) {
            Real* row = gs + b * g4;
            sigmoid_inplace(row, 3 * h_);
            tanh_inplace(row + 3 * h_, h_);
        }
        Real* cs = d.cell.data() + s * b_ * h_;
        for (std::size_t b = 0; b < b_; ++b) {
            const Real* g = gs + b * g4;
            Real* c = cs + b * h_;
            const Real* cp = has_prev ? d.cell.data() + (prev * b_ + b) * h_ : nullptr;
            for (std::size_t j = 0; j < h_; ++j) {
                const Real carry = cp ? g[h_ + j] * cp[j] : Real(0);
                c[j] = carry + g[j] * g[3 * h_ + j];
            }
        }
        Real* tcs = d.tcell.data() + s * b_ * h_;
        std::copy(cs, cs + b_ * h_, tcs);
        tanh_inplace(tcs, b_ * h_);
        for (std::size_t b = 0; b < b_; ++b) {
            Real* hrow = out + (s * b_ + b) * od + col;
            if (!batch_->is_valid(s, b)) {
                std::fill(cs + b * h_, cs + (b + 1) * h_, Real(0));
                std::fill(tcs + b * h_, tcs + (b + 1) * h_, Real(0));
                std::fill(hrow, hrow + h_, Real(0));
                continue;
            }
            const Real* o = gs + b * g4 + 2 * h_;
            const Real* tc = tcs + b * h_;
            for (std::size_t j = 0; j < h_; ++j) hrow[j] = o[j] * tc[j];
        }
    }
}

template <typename Real>
void Engine<Real>::attend() {
    const auto& z = out_.back();
    resize(scores_, b_ * l_);
    resize(alpha_, b_ * l_);
    std::fill(scores_.begin(), scores_.end(), Real(0));
    std::fill(alpha_.begin(), alpha_.end(), Real(0));

    if (cfg_.attention == AttentionKind::none) {
        for (std::size_t b = 0; b < b_; ++b) {
            const Real w = Real(1) / Real(batch_->lengths[b]);
            for (std::size_t s = batch_->first_step(b); s < l_; ++s) alpha_[b * l_ + s] = w;
        }
    } else {
        resize(pz_, n_ * da_);
        resize(pq_, b_ * da_);
        gemm<Real>(false, false, n_, da_, e_, z.data(), e_, params_.tensor(lay_.attn_w).data(), da_,
                   false, pz_.data(), da_);
        gemm<Real>(false, false, b_, da_, de_, qt_.data(), de_, params_.tensor(lay_.attn_u).data(),
                   da_, false, pq_.data(), da_);
        if (cfg_.attention == AttentionKind::additive) {
            resize(ahid_, n_ * da_);
            for (std::size_t s = 0; s < l_; ++s)
                for (std::size_t b = 0; b < b_; ++b) {
                    const Real* p = pz_.data() + (s * b_ + b) * da_;
                    const Real* q = pq_.data() + b * da_;
                    Real* a = ahid_.data() + (s * b_ + b) * da_;
                    for (std::size_t j = 0; j < da_; ++j) a[j] = p[j] + q[j];
                }
            tanh_inplace(ahid_.data(), ahid_.size());
            const Real* v = params_.tensor(lay_.attn_v).data();
            for (std::size_t b = 0; b < b_; ++b)
                for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
                    const Real* a = ahid_.data() + (s * b_ + b) * da_;
                    Real acc = 0;
                    for (std::size_t j = 0; j < da_; ++j) acc += a[j] * v[j];
                    scores_[b * l_ + s] = acc;
                }
        } else {
            for (std::size_t b = 0; b < b_; ++b)
                for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
                    const Real* p = pz_.data() + (s * b_ + b) * da_;
                    const Real* q = pq_.data() + b * da_;
                    Real acc = 0;
                    for (std::size_t j = 0; j < da_; ++j) acc += p[j] * q[j];
                    scores_[b * l_ + s] = acc;
                }
        }
        // Masked softmax, stabilised by the largest valid score.
        for (std::size_t b = 0; b < b_; ++b) {
            const std::size_t s0 = batch_->first_step(b);
            Real* sc = scores_.data() + b * l_;
            Real* al = alpha_.data() + b * l_;
            const Real peak = *std::max_element(sc + s0, sc + l_);
            Real total = 0;
            for (std::size_t s = s0; s < l_; ++s) {
                al[s] = std::exp(sc[s] - peak);
                total += al[s];
            }
            for (std::size_t s = s0; s < l_; ++s) al[s] /= total;
        }
    }

    resize(u_, b_ * e_);
    std::fill(u_.begin(), u_.end(), Real(0));
    for (std::size_t b = 0; b < b_; ++b) {
        Real* u = u_.data() + b * e_;
        for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
            const Real w = alpha_[b * l_ + s];
            const Real* zr = z.data() + (s * b_ + b) * e_;
            for (std::size_t j = 0; j < e_; ++j) u[j] += w * zr[j];
        }
    }
}

template <typename Real>
void Engine<Real>::head() {
    const std::size_t layers = cfg_.head_dims.size();
    acts_.resize(layers + 1);
    const std::size_t in0 = cfg_.head_input_dim();
    resize(acts_[0], b_ * in0);
    for (std::size_t b = 0; b < b_; ++b) {
        std::copy(u_.begin() + b * e_, u_.begin() + (b + 1) * e_, acts_[0].begin() + b * in0);
        std::copy(qt_.begin() + b * de_, qt_.begin() + (b + 1) * de_,
                  acts_[0].begin() + b * in0 + e_);
    }
    std::size_t in = in0;
    for (std::size_t k = 0; k < layers; ++k) {
        const std::size_t w = cfg_.head_dims[k];
        resize(acts_[k + 1], b_ * w);
        gemm<Real>(false, false, b_, w, in, acts_[k].data(), in,
                   params_.tensor(lay_.head_weight[k]).data(), w, false, acts_[k + 1].data(), w);
        add_row_bias(acts_[k + 1].data(), b_, w, params_.tensor(lay_.head_bias[k]).data());
        tanh_inplace(acts_[k + 1].data(), acts_[k + 1].size());
        in = w;
    }
    resize(logits_, b_);
    gemm<Real>(false, false, b_, 1, in, acts_[layers].data(), in,
               params_.tensor(lay_.out_weight).data(), 1, false, logits_.data(), 1);
    const Real bias = params_.tensor(lay_.out_bias)(0, 0);
    for (auto& v : logits_) v += bias;
    probs_ = logits_;
    sigmoid_inplace(probs_.data(), probs_.size());
}

template <typename Real>
double Engine<Real>::mean_loss() const {
    double total = 0.0;
    for (std::size_t b = 0; b < b_; ++b) {
        const double p = std::clamp<double>(probs_[b], 1e-7, 1.0 - 1e-7);
        total += batch_->labels[b] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / double(b_);
}

template <typename Real>
std::vector<Real> Engine<Real>::mean_bce_logit_grads() const {
    std::vector<Real> g(b_);
    for (std::size_t b = 0; b < b_; ++b)
        g[b] = (probs_[b] - Real(batch_->labels[b])) / Real(b_);
    return g;
}

template <typename Real>
void Engine<Real>::backward(std::span<const Real> logit_grads, Parameters<Real>& grads) {
    if (batch_ == nullptr) throw std::logic_error("backward: no cached forward pass");
    if (logit_grads.size() != b_) throw std::invalid_argument("backward: gradient count != batch size");
    if (!(grads.config() == cfg_)) throw std::invalid_argument("backward: gradient layout mismatch");
    backward_head(logit_grads, grads);
    backward_attention(grads);
    backward_encoder(grads);
    backward_embedding(grads);
}

template <typename Real>
void Engine<Real>::backward_head(std::span<const Real> logit_grads, Parameters<Real>& grads) {
    const std::size_t layers = cfg_.head_dims.size();
    const std::size_t last = layers == 0 ? cfg_.head_input_dim() : cfg_.head_dims.back();
    // Output layer.
    gemm<Real>(true, false, last, 1, b_, acts_[layers].data(), last, logit_grads.data(), 1, true,
               grads.tensor(lay_.out_weight).data(), 1);
    for (Real g : logit_grads) grads.tensor(lay_.out_bias)(0, 0) += g;
    resize(dact_, b_ * last);
    gemm<Real>(false, true, b_, last, 1, logit_grads.data(), 1,
               params_.tensor(lay_.out_weight).data(), 1, false, dact_.data(), last);

    for (std::size_t k = layers; k-- > 0;) {
        const std::size_t w = cfg_.head_dims[k];
        const std::size_t in = k == 0 ? cfg_.head_input_dim() : cfg_.head_dims[k - 1];
        const auto& a = acts_[k + 1];
        for (std::size_t i = 0; i < b_ * w; ++i) dact_[i] *= Real(1) - a[i] * a[i];
        gemm<Real>(true, false, in, w, b_, acts_[k].data(), in, dact_.data(), w, true,
                   grads.tensor(lay_.head_weight[k]).data(), w);
        add_column_sums(dact_.data(), b_, w, grads.tensor(lay_.head_bias[k]).data());
        resize(dact_prev_, b_ * in);
        gemm<Real>(false, true, b_, in, w, dact_.data(), w,
                   params_.tensor(lay_.head_weight[k]).data(), w, false, dact_prev_.data(), in);
        std::swap(dact_, dact_prev_);
    }
    // dact_ now holds the gradient of [u, q_target].
    const std::size_t in0 = cfg_.head_input_dim();
    resize(dqt_, b_ * de_);
    for (std::size_t b = 0; b < b_; ++b)
        std::copy(dact_.begin() + b * in0 + e_, dact_.begin() + (b + 1) * in0,
                  dqt_.begin() + b * de_);
}

template <typename Real>
void Engine<Real>::backward_attention(Parameters<Real>& grads) {
    const auto& z = out_.back();
    const std::size_t in0 = cfg_.head_input_dim();
    auto du = [&](std::size_t b) { return dact_.data() + b * in0; };

    resize(dz_, n_ * e_);
    std::fill(dz_.begin(), dz_.end(), Real(0));
    for (std::size_t b = 0; b < b_; ++b)
        for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
            const Real w = alpha_[b * l_ + s];
            Real* d = dz_.data() + (s * b_ + b) * e_;
            const Real* g = du(b);
            for (std::size_t j = 0; j < e_; ++j) d[j] = w * g[j];
        }
    if (cfg_.attention == AttentionKind::none) return;

    // Softmax backward: de = α (dα − Σ α dα).
    std::vector<Real> de(b_ * l_, Real(0));
    for (std::size_t b = 0; b < b_; ++b) {
        const std::size_t s0 = batch_->first_step(b);
        Real weighted = 0;
        for (std::size_t s = s0; s < l_; ++s) {
            const Real* zr = z.data() + (s * b_ + b) * e_;
            const Real* g = du(b);
            Real dalpha = 0;
            for (std::size_t j = 0; j < e_; ++j) dalpha += g[j] * zr[j];
            de[b * l_ + s] = dalpha;
            weighted += alpha_[b * l_ + s] * dalpha;
        }
        for (std::size_t s = s0; s < l_; ++s)
            de[b * l_ + s] = alpha_[b * l_ + s] * (de[b * l_ + s] - weighted);
    }

    resize(dpz_, n_ * da_);
    std::fill(dpz_.begin(), dpz_.end(), Real(0));
    resize(dpq_, b_ * da_);
    std::fill(dpq_.begin(), dpq_.end(), Real(0));
    if (cfg_.attention == AttentionKind::additive) {
        const Real* v = params_.tensor(lay_.attn_v).data();
        Real* dv = grads.tensor(lay_.attn_v).data();
        for (std::size_t b = 0; b < b_; ++b)
            for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
                const Real g = de[b * l_ + s];
                const Real* a = ahid_.data() + (s * b_ + b) * da_;
                Real* dp = dpz_.data() + (s * b_ + b) * da_;
                Real* dq = dpq_.data() + b * da_;
                for (std::size_t j = 0; j < da_; ++j) {
                    dv[j] += g * a[j];
                    dp[j] = g * v[j] * (Real(1) - a[j] * a[j]);
                    dq[j] += dp[j];
                }
            }
    } else {
        for (std::size_t b = 0; b < b_; ++b)
            for (std::size_t s = batch_->first_step(b); s < l_; ++s) {
                const Real g = de[b * l_ + s];
                const Real* p = pz_.data() + (s * b_ + b) * da_;
                const Real* q = pq_.data() + b * da_;
                Real* dp = dpz_.data() + (s * b_ + b) * da_;
                Real* dq = dpq_.data() + b * da_;
                for (std::size_t j = 0; j < da_; ++j) {
                    dp[j] = g * q[j];
                    dq[j] += g * p[j];
                }
            }
    }
    const Real* wa = params_.tensor(lay_.attn_w).data();
    const Real* ua = params_.tensor(lay_.attn_u).data();
    gemm<Real>(true, false, e_, da_, n_, z.data(), e_, dpz_.data(), da_, true,
               grads.tensor(lay_.attn_w).data(), da_);
    gemm<Real>(false, true, n_, e_, da_, dpz_.data(), da_, wa, da_, true, dz_.data(), e_);
    gemm<Real>(true, false, de_, da_, b_, qt_.data(), de_, dpq_.data(), da_, true,
               grads.tensor(lay_.attn_u).data(), da_);
    gemm<Real>(false, true, b_, de_, da_, dpq_.data(), da_, ua, da_, true, dqt_.data(), de_);
}

template <typename Real>
void Engine<Real>::backward_encoder(Parameters<Real>& grads) {
    resize(dx0_, n_ * de_);
    if (cfg_.encoder == EncoderKind::fc) {
        const auto& z = out_[0];
        for (std::size_t i = 0; i < n_; ++i) {
            Real* d = dz_.data() + i * e_;
            const Real* zr = z.data() + i * e_;
            if (!batch_->valid[i]) {
                std::fill(d, d + e_, Real(0));
                continue;
            }
            for (std::size_t j = 0; j < e_; ++j) d[j] *= Real(1) - zr[j] * zr[j];
        }
        gemm<Real>(true, false, de_, e_, n_, x0_.data(), de_, dz_.data(), e_, true,
                   grads.tensor(lay_.fc_weight).data(), e_);
        add_column_sums(dz_.data(), n_, e_, grads.tensor(lay_.fc_bias).data());
        gemm<Real>(false, true, n_, de_, e_, dz_.data(), e_, params_.tensor(lay_.fc_weight).data(),
                   e_, false, dx0_.data(), de_);
        return;
    }
    const std::size_t layers = cfg_.lstm_layers;
    dout_.resize(layers);
    dout_[layers - 1] = dz_;
    for (std::size_t l = layers; l-- > 0;) {
        if (l > 0) {
            resize(dout_[l - 1], n_ * layer_out_dim(l - 1));
            std::fill(dout_[l - 1].begin(), dout_[l - 1].end(), Real(0));
        } else {
            std::fill(dx0_.begin(), dx0_.end(), Real(0));
        }
        backward_direction(l, 0, grads);
        if (bidirectional()) backward_direction(l, 1, grads);
    }
}

template <typename Real>
void Engine<Real>::backward_direction(std::size_t layer, int dir, Parameters<Real>& grads) {
    const LstmSlots& slots = lay_.lstm[layer][dir];
    const std::size_t in = layer_in_dim(layer);
    const std::size_t g4 = 4 * h_;
    const std::size_t od = layer_out_dim(layer);
    const std::size_t col = dir == 0 ? 0 : h_;
    const Direction& d = dirs_[layer][dir];
    const Real* dout = dout_[layer].data();
    const Real* w_hidden = params_.tensor(slots.w_hidden).data();

    resize(dgates_, n_ * g4);
    resize(dh_rec_, b_ * h_);
    resize(dc_rec_, b_ * h_);
    std::fill(dh_rec_.begin(), dh_rec_.end(), Real(0));
    std::fill(dc_rec_.begin(), dc_rec_.end(), Real(0));

    for (std::size_t t = l_; t-- > 0;) {
        const std::size_t s = dir == 0 ? t : l_ - 1 - t;
        const bool has_prev = t > 0;
        const std::size_t prev = dir == 0 ? s - 1 : s + 1;
        Real* dgs = dgates_.data() + s * b_ * g4;
        for (std::size_t b = 0; b < b_; ++b) {
            Real* dg = dgs + b * g4;
            Real* dhr = dh_rec_.data() + b * h_;
            Real* dcr = dc_rec_.data() + b * h_;
            if (!batch_->is_valid(s, b)) {
                std::fill(dg, dg + g4, Real(0));
                std::fill(dhr, dhr + h_, Real(0));
                std::fill(dcr, dcr + h_, Real(0));
                continue;
            }
            const Real* g = d.gates.data() + (s * b_ + b) * g4;
            const Real* tc = d.tcell.data() + (s * b_ + b) * h_;
            const Real* cp = has_prev ? d.cell.data() + (prev * b_ + b) * h_ : nullptr;
            const Real* dh_out = dout + (s * b_ + b) * od + col;
            for (std::size_t j = 0; j < h_; ++j) {
                const Real ig = g[j], fg = g[h_ + j], og = g[2 * h_ + j], cg = g[3 * h_ + j];
                const Real dh = dh_out[j] + dhr[j];
                const Real dc = dcr[j] + dh * og * (Real(1) - tc[j] * tc[j]);
                const Real c_prev = cp ? cp[j] : Real(0);
                dg[j] = dc * cg * ig * (Real(1) - ig);
                dg[h_ + j] = dc * c_prev * fg * (Real(1) - fg);
                dg[2 * h_ + j] = dh * tc[j] * og * (Real(1) - og);
                dg[3 * h_ + j] = dc * ig * (Real(1) - cg * cg);
                dcr[j] = dc * fg;
            }
        }
        if (has_prev)
            gemm<Real>(false, true, b_, h_, g4, dgs, g4, w_hidden, g4, false, dh_rec_.data(), h_);
    }

    const Real* out = out_[layer].data();
    gemm<Real>(true, false, in, g4, n_, layer_input(layer), in, dgates_.data(), g4, true,
               grads.tensor(slots.w_input).data(), g4);
    if (l_ > 1) {
        const std::size_t rows = (l_ - 1) * b_;
        const Real* h_prev = dir == 0 ? out + col : out + b_ * od + col;
        const Real* dg = dir == 0 ? dgates_.data() + b_ * g4 : dgates_.data();
        gemm<Real>(true, false, h_, g4, rows, h_prev, od, dg, g4, true,
                   grads.tensor(slots.w_hidden).data(), g4);
    }
    add_column_sums(dgates_.data(), n_, g4, grads.tensor(slots.bias).data());
    Real* din = layer == 0 ? dx0_.data() : dout_[layer - 1].data();
    gemm<Real>(false, true, n_, in, g4, dgates_.data(), g4, params_.tensor(slots.w_input).data(),
               g4, true, din, in);
}

template <typename Real>
void Engine<Real>::backward_embedding(Parameters<Real>& grads) {
    const auto& qe = params_.tensor(lay_.question_embed);
    const auto& re = params_.tensor(lay_.response_embed);
    auto& dq = grads.tensor(lay_.question_embed);
    auto& dr = grads.tensor(lay_.response_embed);
    for (std::size_t i = 0; i < n_; ++i) {
        if (!batch_->valid[i]) continue;
        const std::size_t qi = batch_->questions[i], ri = batch_->responses[i];
        const Real* g = dx0_.data() + i * de_;
        const auto q = qe.row(qi);
        const auto r = re.row(ri);
        auto gq = dq.row(qi);
        auto gr = dr.row(ri);
        for (std::size_t j = 0; j < de_; ++j) {
            gq[j] += g[j] * r[j];
            gr[j] += g[j] * q[j];
        }
    }
    for (std::size_t b = 0; b < b_; ++b) {
        auto gq = dq.row(batch_->targets[b]);
        const Real* g = dqt_.data() + b * de_;
        for (std::size_t j = 0; j < de_; ++j) gq[j] += g[j];
    }
}

template <typename Real>
std::span<const Real> Engine<Real>::fused_input(std::size_t s, std::size_t b) const {
    return {x0_.data() + (s * b_ + b) * de_, de_};
}

template <typename Real>
std::span<const Real> Engine<Real>::encoder_output(std::size_t s, std::size_t b) const {
    return {out_.back().data() + (s * b_ + b) * e_, e_};
}

template <typename Real>
std::span<const Real> Engine<Real>::direction_output(std::size_t dir, std::size_t s,
                                                     std::size_t b) const {
    if (cfg_.encoder == EncoderKind::fc) return {};
    if (dir == 1 && !bidirectional()) return {};
    return {out_.back().data() + (s * b_ + b) * e_ + dir * h_, h_};
}

template <typename Real>
std::span<const Real> Engine<Real>::user_vector(std::size_t b) const {
    return {u_.data() + b * e_, e_};
}

template class Engine<float>;
template class Engine<double>;
template class Engine<long double>;

}  // namespace kt
