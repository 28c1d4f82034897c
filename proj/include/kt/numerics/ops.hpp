#pragma once

// Vector-level building blocks. These are the readable reference forms of the
// operations the batched model engine performs with the kernels.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kt/numerics/kernels.hpp"
#include "kt/numerics/tensor.hpp"

namespace kt {

enum class Activation { sigmoid, tanh };

/// Returns xᵀW + b.
template <typename Real>
Vector<Real> affine(const Vector<Real>& x, const Matrix<Real>& w, const Vector<Real>& b) {
    if (x.dim() != w.rows()) {
        throw ShapeError("affine: input dim " + std::to_string(x.dim()) +
                         " != weight rows " + std::to_string(w.rows()));
    }
    if (b.dim() != w.cols()) {
        throw ShapeError("affine: bias dim " + std::to_string(b.dim()) +
                         " != weight cols " + std::to_string(w.cols()));
    }
    Vector<Real> out = b;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const Real xi = x[i];
        const auto row = w.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) out[j] += xi * row[j];
    }
    return out;
}

template <typename Real>
Vector<Real> elementwise_mul(const Vector<Real>& a, const Vector<Real>& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("elementwise_mul: dims " + std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()));
    }
    Vector<Real> out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

template <typename Real>
Vector<Real> activations(const Vector<Real>& x, Activation kind) {
    Vector<Real> out(x.dim());
    if (kind == Activation::sigmoid) {
        kernels::scalar::sigmoid(x.data(), out.data(), x.dim());
    } else {
        kernels::scalar::tanh(x.data(), out.data(), x.dim());
    }
    return out;
}

/// Softmax over the valid positions only; masked positions are exactly 0.
template <typename Real>
Vector<Real> masked_softmax(const Vector<Real>& scores, const Mask& mask) {
    if (scores.dim() != mask.length()) {
        throw ShapeError("masked_softmax: scores dim " + std::to_string(scores.dim()) +
                         " != mask length " + std::to_string(mask.length()));
    }
    bool any = false;
    Real peak = Real(0);
    for (std::size_t i = 0; i < scores.dim(); ++i) {
        if (!mask.valid(i)) continue;
        peak = any ? std::max(peak, scores[i]) : scores[i];
        any = true;
    }
    if (!any) throw std::invalid_argument("masked_softmax: every position is masked");
    Vector<Real> out(scores.dim());
    Real total = Real(0);
    for (std::size_t i = 0; i < scores.dim(); ++i) {
        if (!mask.valid(i)) continue;
        out[i] = std::exp(scores[i] - peak);
        total += out[i];
    }
    for (std::size_t i = 0; i < scores.dim(); ++i) out[i] /= total;
    return out;
}

}  // namespace kt
