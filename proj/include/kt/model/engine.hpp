#pragma once

// Batched forward and reverse pass of the correctness model.
//
//   fused input   i_k = q_k ∘ r_k
//   encoder       z_k = [h_fwd_k, h_bwd_k]       (stacked, per config)
//   attention     e_k = v_aᵀ tanh(z_k W_a + q U_a),  α = softmax(e),  u = Σ α_k z_k
//   head          p = σ(fc(...tanh(fc([u, q]))))
//
// The engine owns its activation buffers and reuses them between calls, so
// one instance should be used per thread. Parameters are only read.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "kt/model/batch.hpp"
#include "kt/model/parameters.hpp"

namespace kt {

template <typename Real>
class Engine {
public:
    explicit Engine(const Parameters<Real>& params);

    /// Runs the model and returns one probability per example.
    std::span<const Real> forward(const Batch& batch);

    /// Mean binary cross-entropy of the last forward pass (clamped to
    /// [1e-7, 1 - 1e-7]).
    double mean_loss() const;

    /// dLoss/dlogit of the mean cross-entropy, (p - y) / B per example.
    std::vector<Real> mean_bce_logit_grads() const;

    /// Accumulates (+=) parameter gradients for the given per-example logit
    /// gradients. Must follow forward() on the same batch.
    void backward(std::span<const Real> logit_grads, Parameters<Real>& grads);

    const Batch& batch() const { return *batch_; }
    std::span<const Real> probabilities() const { return probs_; }
    std::span<const Real> logits() const { return logits_; }

    // Views into the cached activations, for traces and reports.
    std::size_t encoder_dim() const { return e_; }
    std::span<const Real> fused_input(std::size_t s, std::size_t b) const;
    std::span<const Real> encoder_output(std::size_t s, std::size_t b) const;
    /// Last-layer hidden state of one direction (0 forward, 1 backward).
    std::span<const Real> direction_output(std::size_t dir, std::size_t s, std::size_t b) const;
    Real attention_weight(std::size_t b, std::size_t s) const { return alpha_[b * l_ + s]; }
    Real attention_score(std::size_t b, std::size_t s) const { return scores_[b * l_ + s]; }
    std::span<const Real> user_vector(std::size_t b) const;

private:
    struct Direction {
        std::vector<Real> gates;  // N x 4H, activated
        std::vector<Real> cell;   // N x H
        std::vector<Real> tcell;  // N x H, tanh(cell)
    };

    void embed();
    void encode();
    void run_direction(std::size_t layer, int dir);
    void attend();
    void head();

    void backward_head(std::span<const Real> logit_grads, Parameters<Real>& grads);
    void backward_attention(Parameters<Real>& grads);
    void backward_encoder(Parameters<Real>& grads);
    void backward_direction(std::size_t layer, int dir, Parameters<Real>& grads);
    void backward_embedding(Parameters<Real>& grads);

    std::size_t layer_in_dim(std::size_t layer) const;
    std::size_t layer_out_dim(std::size_t layer) const;
    const Real* layer_input(std::size_t layer) const;
    bool bidirectional() const { return cfg_.encoder == EncoderKind::bilstm; }

    const Parameters<Real>& params_;
    const ModelConfig& cfg_;
    const ParamLayout& lay_;
    const Batch* batch_ = nullptr;

    std::size_t b_ = 0, l_ = 0, n_ = 0;
    std::size_t de_, h_, e_, da_;

    std::vector<Real> x0_;                          // N x De
    std::vector<std::vector<Real>> out_;            // per layer: N x out_dim
    std::vector<std::array<Direction, 2>> dirs_;    // per layer
    std::vector<Real> qt_;                          // B x De
    std::vector<Real> pz_, pq_, ahid_;              // attention projections
    std::vector<Real> scores_, alpha_;              // B x L
    std::vector<Real> u_;                           // B x E
    std::vector<std::vector<Real>> acts_;           // head input + hidden activations
    std::vector<Real> logits_, probs_;

    // Backward scratch.
    std::vector<Real> dz_, dqt_, dpz_, dpq_, dgates_, dh_rec_, dc_rec_, dx0_;
    std::vector<std::vector<Real>> dout_;
    std::vector<Real> dact_, dact_prev_;
};

extern template class Engine<float>;
extern template class Engine<double>;
extern template class Engine<long double>;

}  // namespace kt
