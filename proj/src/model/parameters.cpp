#include "kt/model/parameters.hpp"

namespace kt {

std::size_t ParamLayout::find(std::string_view name) const {
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].name == name) return i;
    return kAbsent;
}

ParamLayout make_layout(const ModelConfig& config) {
    config.validate();
    ParamLayout layout;
    auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
        layout.specs.push_back({std::move(name), rows, cols});
        return layout.specs.size() - 1;
    };

    const std::size_t h = config.d_lstm;
    const std::size_t e = config.encoder_dim();
    layout.question_embed = add("embed.question", config.question_vocab + 1, config.d_embed);
    layout.response_embed = add("embed.response", 2, config.d_embed);

    if (config.encoder == EncoderKind::fc) {
        layout.fc_weight = add("encoder.fc.weight", config.d_embed, e);
        layout.fc_bias = add("encoder.fc.bias", 1, e);
    } else {
        const bool both = config.encoder == EncoderKind::bilstm;
        for (std::size_t l = 0; l < config.lstm_layers; ++l) {
            const std::size_t in = l == 0 ? config.d_embed : (both ? 2 * h : h);
            std::array<LstmSlots, 2> slots{};
            for (int dir = 0; dir < (both ? 2 : 1); ++dir) {
                const std::string prefix =
                    "encoder.l" + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
                slots[dir].w_input = add(prefix + ".w_input", in, 4 * h);
                slots[dir].w_hidden = add(prefix + ".w_hidden", h, 4 * h);
                slots[dir].bias = add(prefix + ".bias", 1, 4 * h);
            }
            layout.lstm.push_back(slots);
        }
    }

    if (config.attention != AttentionKind::none) {
        layout.attn_w = add("attention.w_a", e, config.d_attn);
        layout.attn_u = add("attention.u_a", config.d_embed, config.d_attn);
        if (config.attention == AttentionKind::additive)
            layout.attn_v = add("attention.v_a", 1, config.d_attn);
    }

    std::size_t in = config.head_input_dim();
    for (std::size_t k = 0; k < config.head_dims.size(); ++k) {
        const std::string prefix = "head.l" + std::to_string(k);
        layout.head_weight.push_back(add(prefix + ".weight", in, config.head_dims[k]));
        layout.head_bias.push_back(add(prefix + ".bias", 1, config.head_dims[k]));
        in = config.head_dims[k];
    }
    layout.out_weight = add("head.out.weight", in, 1);
    layout.out_bias = add("head.out.bias", 1, 1);
    return layout;
}

template <typename Real>
Parameters<Real>::Parameters(const ModelConfig& config)
    : config_(config), layout_(make_layout(config)) {
    tensors_.reserve(layout_.specs.size());
    for (const auto& spec : layout_.specs) tensors_.emplace_back(spec.rows, spec.cols);
}

template <typename Real>
Matrix<Real>& Parameters<Real>::at(std::string_view name) {
    const std::size_t i = layout_.find(name);
    if (i == kAbsent) throw std::out_of_range("no parameter tensor named '" + std::string(name) + "'");
    return tensors_[i];
}

template <typename Real>
const Matrix<Real>& Parameters<Real>::at(std::string_view name) const {
    const std::size_t i = layout_.find(name);
    if (i == kAbsent) throw std::out_of_range("no parameter tensor named '" + std::string(name) + "'");
    return tensors_[i];
}

template <typename Real>
std::size_t Parameters<Real>::total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

template <typename Real>
void Parameters<Real>::set_zero() {
    for (auto& t : tensors_) t.fill(Real(0));
}

template class Parameters<float>;
template class Parameters<double>;
template class Parameters<long double>;

}  // namespace kt
