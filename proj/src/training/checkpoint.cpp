#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "kt/training/training.hpp"

namespace kt {

namespace {

constexpr char kMagic[8] = {'K', 'T', 'C', 'K', 'P', 'T', '\r', '\n'};

using Json = nlohmann::json;
using Kind = CheckpointError::Kind;

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    read_exact(in, b, 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

Json config_json(const ModelConfig& c) {
    return {{"question_vocab", c.question_vocab},
            {"d_embed", c.d_embed},
            {"d_lstm", c.d_lstm},
            {"lstm_layers", c.lstm_layers},
            {"d_attn", c.d_attn},
            {"head_dims", c.head_dims},
            {"attention", std::string(to_string(c.attention))},
            {"encoder", std::string(to_string(c.encoder))},
            {"window", c.window}};
}

ModelConfig config_from(const Json& j) {
    ModelConfig c;
    c.question_vocab = j.at("question_vocab").get<std::size_t>();
    c.d_embed = j.at("d_embed").get<std::size_t>();
    c.d_lstm = j.at("d_lstm").get<std::size_t>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.d_attn = j.at("d_attn").get<std::size_t>();
    c.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
    c.attention = parse_attention_kind(j.at("attention").get<std::string>());
    c.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    c.window = j.at("window").get<std::size_t>();
    return c;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
    const auto& a = info;
    const auto& b = o.info;
    return params == o.params && question_ids == o.question_ids && tags == o.tags && a.epoch == b.epoch &&
           a.val_auc == b.val_auc && a.val_acc == b.val_acc && a.val_f1 == b.val_f1 && a.seed == b.seed &&
           a.base_rate == b.base_rate && a.split_ratios == b.split_ratios && a.split_seed == b.split_seed;
}

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
    const auto& info = ckpt.info;
    Json tags = Json::object();
    for (const auto& [q, set] : ckpt.tags) tags[q] = set;
    const Json meta = {{"config", config_json(ckpt.params.config())},
                       {"question_ids", ckpt.question_ids},
                       {"tags", tags},
                       {"training",
                        {{"epoch", info.epoch},
                         {"val_auc", info.val_auc},
                         {"val_acc", info.val_acc},
                         {"val_f1", info.val_f1},
                         {"seed", info.seed},
                         {"base_rate", info.base_rate},
                         {"split_ratios", info.split_ratios},
                         {"split_seed", info.split_seed}}}};
    const std::string text = meta.dump();

    out.write(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.count()));
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) {
        const auto& name = ckpt.params.name(i);
        const auto& t = ckpt.params.tensor(i);
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, 2);
        put_u32(out, static_cast<std::uint32_t>(t.rows()));
        put_u32(out, static_cast<std::uint32_t>(t.cols()));
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError(Kind::io, "failed to write checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
    char magic[sizeof kMagic];
    read_exact(in, magic, sizeof magic, "magic bytes");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError(Kind::bad_magic, "not a checkpoint file (bad magic bytes)");
    const std::uint32_t version = get_u32(in, "version");
    if (version != kCheckpointVersion)
        throw CheckpointError(Kind::version, "unsupported checkpoint version " + std::to_string(version) +
                                                 " (this build reads version " +
                                                 std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t meta_len = get_u32(in, "metadata length");
    std::string text(meta_len, '\0');
    read_exact(in, text.data(), meta_len, "metadata");

    Checkpoint ckpt;
    ModelConfig config;
    try {
        const Json meta = Json::parse(text);
        config = config_from(meta.at("config"));
        config.validate();
        ckpt.question_ids = meta.at("question_ids").get<std::vector<std::string>>();
        for (const auto& [q, set] : meta.at("tags").items())
            ckpt.tags[q] = set.get<std::set<std::string>>();
        const Json& tr = meta.at("training");
        auto& info = ckpt.info;
        info.epoch = tr.at("epoch").get<std::size_t>();
        info.val_auc = tr.at("val_auc").get<double>();
        info.val_acc = tr.at("val_acc").get<double>();
        info.val_f1 = tr.at("val_f1").get<double>();
        info.seed = tr.at("seed").get<std::uint64_t>();
        info.base_rate = tr.at("base_rate").get<double>();
        info.split_ratios = tr.at("split_ratios").get<std::array<double, 3>>();
        info.split_seed = tr.at("split_seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::metadata, std::string("corrupt checkpoint metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(Kind::metadata, std::string("invalid checkpoint config: ") + e.what());
    }
    if (ckpt.question_ids.size() != config.question_vocab)
        throw CheckpointError(Kind::metadata, "question id map has " + std::to_string(ckpt.question_ids.size()) +
                                                  " entries but the config vocab is " +
                                                  std::to_string(config.question_vocab));

    ckpt.params = Parameters<float>(config);
    std::vector<bool> seen(ckpt.params.count(), false);
    const std::uint32_t count = get_u32(in, "tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = get_u32(in, "tensor name length");
        if (name_len > 4096) throw CheckpointError(Kind::metadata, "implausible tensor name length");
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name_len, "tensor name");
        const std::size_t slot = ckpt.params.layout().find(name);
        if (slot == kAbsent) throw CheckpointError(Kind::unknown_tensor, "unknown tensor '" + name + "'");
        if (seen[slot]) throw CheckpointError(Kind::unknown_tensor, "duplicate tensor '" + name + "'");
        seen[slot] = true;
        const std::uint32_t rank = get_u32(in, "tensor rank");
        if (rank != 2) throw CheckpointError(Kind::shape, "tensor '" + name + "' has rank " + std::to_string(rank));
        const std::uint32_t rows = get_u32(in, "tensor dims");
        const std::uint32_t cols = get_u32(in, "tensor dims");
        auto& t = ckpt.params.tensor(slot);
        if (rows != t.rows() || cols != t.cols())
            throw CheckpointError(Kind::shape, "tensor '" + name + "' is " + std::to_string(rows) + "x" +
                                                   std::to_string(cols) + " but the config implies " +
                                                   std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
        read_exact(in, t.data(), t.size() * sizeof(float), ("tensor '" + name + "'").c_str());
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw CheckpointError(Kind::missing_tensor, "missing tensor '" + ckpt.params.name(i) + "'");
    if (in.peek() != std::char_traits<char>::eof())
        throw CheckpointError(Kind::metadata, "trailing bytes after the last tensor");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(Kind::io, "cannot open '" + path + "' for writing");
    save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint '" + path + "'");
    return load_checkpoint(in);
}

}  // namespace kt
