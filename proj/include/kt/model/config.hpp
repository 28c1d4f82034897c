#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kt {

enum class EncoderKind { bilstm, lstm, fc };
enum class AttentionKind { additive, dot, none };

std::string_view to_string(EncoderKind kind);
std::string_view to_string(AttentionKind kind);
EncoderKind parse_encoder_kind(std::string_view text);
AttentionKind parse_attention_kind(std::string_view text);

/// Architecture of the correctness model. Defaults are the published
/// hyperparameters: 128-d embeddings, three stacked bidirectional layers of
/// 128 units per direction, 256-d additive attention and a 512/256/128 head.
struct ModelConfig {
    std::size_t question_vocab = 0;
    std::size_t d_embed = 128;
    std::size_t d_lstm = 128;
    std::size_t lstm_layers = 3;
    std::size_t d_attn = 256;
    std::vector<std::size_t> head_dims{512, 256, 128};
    AttentionKind attention = AttentionKind::additive;
    EncoderKind encoder = EncoderKind::bilstm;
    std::size_t window = 50;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    /// Width of every encoder output z (both directions concatenated).
    std::size_t encoder_dim() const { return 2 * d_lstm; }
    /// Row of the question table reserved for ids unseen during training.
    std::size_t unknown_question() const { return question_vocab; }
    std::size_t head_input_dim() const { return encoder_dim() + d_embed; }

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace kt
