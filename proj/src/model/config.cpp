#include "kt/model/config.hpp"

#include <stdexcept>

namespace kt {

std::string_view to_string(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::bilstm:
            return "bilstm";
        case EncoderKind::lstm:
            return "lstm";
        case EncoderKind::fc:
            return "fc";
    }
    return "?";
}

std::string_view to_string(AttentionKind kind) {
    switch (kind) {
        case AttentionKind::additive:
            return "additive";
        case AttentionKind::dot:
            return "dot";
        case AttentionKind::none:
            return "none";
    }
    return "?";
}

EncoderKind parse_encoder_kind(std::string_view text) {
    if (text == "bilstm") return EncoderKind::bilstm;
    if (text == "lstm") return EncoderKind::lstm;
    if (text == "fc") return EncoderKind::fc;
    throw std::invalid_argument("unknown encoder kind '" + std::string(text) +
                                "' (expected bilstm, lstm or fc)");
}

AttentionKind parse_attention_kind(std::string_view text) {
    if (text == "additive") return AttentionKind::additive;
    if (text == "dot") return AttentionKind::dot;
    if (text == "none") return AttentionKind::none;
    throw std::invalid_argument("unknown attention kind '" + std::string(text) +
                                "' (expected additive, dot or none)");
}

void ModelConfig::validate() const {
    auto require = [](bool ok, const char* field) {
        if (!ok) throw std::invalid_argument(std::string("model config: ") + field + " must be >= 1");
    };
    require(question_vocab >= 1, "question_vocab");
    require(d_embed >= 1, "d_embed");
    require(d_lstm >= 1, "d_lstm");
    require(lstm_layers >= 1, "lstm_layers");
    require(d_attn >= 1, "d_attn");
    require(window >= 1, "window");
    for (std::size_t w : head_dims) require(w >= 1, "head_dims");
}

}  // namespace kt
