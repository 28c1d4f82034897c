#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kt/model/config.hpp"
#include "kt/numerics/tensor.hpp"

namespace kt {

inline constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();

struct TensorSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

/// Slots of one recurrent direction. Gate columns are ordered
/// [input, forget, output, candidate], each d_lstm wide.
struct LstmSlots {
    std::size_t w_input = kAbsent;
    std::size_t w_hidden = kAbsent;
    std::size_t bias = kAbsent;
};

/// Stable enumeration of every learnable tensor, derived from the config alone.
struct ParamLayout {
    std::vector<TensorSpec> specs;
    std::size_t question_embed = kAbsent;
    std::size_t response_embed = kAbsent;
    /// lstm[layer][0] is the forward direction, [1] the backward one.
    std::vector<std::array<LstmSlots, 2>> lstm;
    std::size_t fc_weight = kAbsent;
    std::size_t fc_bias = kAbsent;
    std::size_t attn_w = kAbsent;
    std::size_t attn_u = kAbsent;
    std::size_t attn_v = kAbsent;
    std::vector<std::size_t> head_weight;
    std::vector<std::size_t> head_bias;
    std::size_t out_weight = kAbsent;
    std::size_t out_bias = kAbsent;

    std::size_t find(std::string_view name) const;
};

ParamLayout make_layout(const ModelConfig& config);

/// All learnable tensors of a model. The same type holds gradients.
template <typename Real>
class Parameters {
public:
    Parameters() = default;
    explicit Parameters(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const ParamLayout& layout() const { return layout_; }

    std::size_t count() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return layout_.specs[i].name; }
    Matrix<Real>& tensor(std::size_t i) { return tensors_[i]; }
    const Matrix<Real>& tensor(std::size_t i) const { return tensors_[i]; }

    /// Lookup by name; throws std::out_of_range naming the tensor.
    Matrix<Real>& at(std::string_view name);
    const Matrix<Real>& at(std::string_view name) const;

    std::size_t total_elements() const;
    void set_zero();

    template <typename Other>
    Parameters<Other> cast() const {
        Parameters<Other> out(config_);
        for (std::size_t i = 0; i < tensors_.size(); ++i) {
            auto src = tensors_[i].span();
            auto dst = out.tensor(i).span();
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<Other>(src[j]);
        }
        return out;
    }

    bool operator==(const Parameters& other) const {
        return config_ == other.config_ && tensors_ == other.tensors_;
    }

private:
    ModelConfig config_;
    ParamLayout layout_;
    std::vector<Matrix<Real>> tensors_;
};

extern template class Parameters<float>;
extern template class Parameters<double>;
extern template class Parameters<long double>;

}  // namespace kt
