#pragma once

// Per-example model API. The free functions embed_interaction, lstm_cell,
// encode_prefix, attend and predict_head are plain vector implementations of
// each stage; forward_step/backward_step run the batched Engine on a batch of
// one and are what training and inference use.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "kt/model/batch.hpp"
#include "kt/model/engine.hpp"
#include "kt/model/parameters.hpp"
#include "kt/numerics/tensor.hpp"

namespace kt {

/// Raised when a prediction is requested for an empty history. Callers fall
/// back to the cold-start prior.
class ColdStartError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename Real>
Vector<Real> embed_interaction(const Parameters<Real>& params, std::size_t question,
                               unsigned response);

template <typename Real>
struct LstmWeights {
    const Matrix<Real>& w_input;   // in x 4H
    const Matrix<Real>& w_hidden;  // H x 4H
    const Matrix<Real>& bias;      // 1 x 4H
};

template <typename Real>
struct LstmState {
    Vector<Real> h;
    Vector<Real> c;
};

/// One gated update; gate columns are [input, forget, output, candidate].
template <typename Real>
LstmState<Real> lstm_cell(const LstmWeights<Real>& w, const Vector<Real>& x,
                          const Vector<Real>& h_prev, const Vector<Real>& c_prev);

/// Encodes a prefix with the encoder named in params.config(). Each output has
/// 2 * d_lstm entries.
template <typename Real>
std::vector<Vector<Real>> encode_prefix(const Parameters<Real>& params,
                                        const std::vector<Vector<Real>>& fused);

template <typename Real>
struct AttentionResult {
    Vector<Real> u;
    Vector<Real> alpha;
    Vector<Real> scores;  // all zero for the uniform variant
};

template <typename Real>
AttentionResult<Real> attend(const Parameters<Real>& params, const std::vector<Vector<Real>>& z,
                             const Mask& mask, const Vector<Real>& q_target);

template <typename Real>
Real predict_head(const Parameters<Real>& params, const Vector<Real>& u,
                  const Vector<Real>& q_target);

template <typename Real>
struct TraceCache;

template <typename Real>
struct ForwardTrace {
    std::vector<Vector<Real>> fused;
    std::vector<Vector<Real>> hidden_forward;   // last encoder layer, empty for fc
    std::vector<Vector<Real>> hidden_backward;  // bilstm only
    std::vector<Vector<Real>> z;
    Vector<Real> scores;
    Vector<Real> alpha;
    Vector<Real> u;
    Real logit = 0;
    Real p = 0;

    std::shared_ptr<TraceCache<Real>> cache;
    bool has_cache() const { return cache != nullptr; }
};

/// Predicts the target from the most recent config.window steps of history.
/// Throws ColdStartError on an empty history.
template <typename Real>
ForwardTrace<Real> forward_step(const Parameters<Real>& params, std::span<const Step> history,
                                std::uint32_t target, bool keep_cache = false);

/// Exact gradients of the cross-entropy -[y log p + (1-y) log(1-p)] of one
/// trace. The trace must come from forward_step(..., keep_cache = true) with
/// the same params.
template <typename Real>
Parameters<Real> backward_step(const Parameters<Real>& params, const ForwardTrace<Real>& trace,
                               Real label);

}  // namespace kt
