#include "rtfn/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rtfn {

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
    return os.str();
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse integer '" + s + "' for " + what);
    }
}

double parse_dbl(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse number '" + s + "' for " + what);
    }
}

bool parse_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("cannot parse bool '" + s + "' for " + what);
}

}  // namespace

// ----------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
    if (input_length < 1) throw ConfigError("input_length must be positive");
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (conv_heads.empty()) throw ConfigError("conv_heads must not be empty");
    for (const auto& [k, f] : conv_heads)
        if (k < 1 || f < 1) throw ConfigError("conv head (kernel, filters) must be positive");
    if (residual_channels.empty()) throw ConfigError("residual_channels must not be empty");
    for (int c : residual_channels)
        if (c < 1) throw ConfigError("residual channel counts must be positive");
    if (lstm_hidden < 1) throw ConfigError("lstm_hidden must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must be in [0, 1)");
    if (!decoder_widths.empty()) {
        if (decoder_widths.size() != 4)
            throw ConfigError("decoder_widths needs exactly four entries");
        if (decoder_widths.back() != input_length)
            throw ConfigError("last decoder width must equal input_length");
        for (int w : decoder_widths)
            if (w < 1) throw ConfigError("decoder widths must be positive");
    }
}

std::vector<int> ModelConfig::effective_decoder_widths() const {
    if (!decoder_widths.empty()) return decoder_widths;
    return {128, 256, std::max(input_length / 2, 64), input_length};
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "input_length = " << input_length << '\n';
    os << "num_classes = " << num_classes << '\n';
    os << "conv_heads = ";
    for (std::size_t i = 0; i < conv_heads.size(); ++i) {
        if (i) os << ',';
        os << conv_heads[i].first << ':' << conv_heads[i].second;
    }
    os << '\n';
    os << "residual_channels = " << join_ints(residual_channels) << '\n';
    os << "lstm_hidden = " << lstm_hidden << '\n';
    os << "use_attentional_lstm = " << (use_attentional_lstm ? "true" : "false") << '\n';
    os << "shared_qkv_lstm = " << (shared_qkv_lstm ? "true" : "false") << '\n';
    os << "dropout_rate = " << format_double(dropout_rate) << '\n';
    os << "decoder_widths = " << join_ints(decoder_widths) << '\n';
    os << "scaled_attention = " << (scaled_attention ? "true" : "false") << '\n';
    os << "seed = " << seed << '\n';
    return os.str();
}

std::uint64_t ModelConfig::config_hash() const {
    // FNV-1a over the canonical text form
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : to_text()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

void apply_config_entry(ModelConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "input_length") {
        cfg.input_length = parse_int(value, key);
    } else if (key == "num_classes") {
        cfg.num_classes = parse_int(value, key);
    } else if (key == "conv_heads") {
        cfg.conv_heads.clear();
        for (const auto& part : split(value, ',')) {
            const auto kv = split(part, ':');
            if (kv.size() != 2) throw ConfigError("conv_heads entry '" + part + "' is not k:f");
            cfg.conv_heads.emplace_back(parse_int(kv[0], key), parse_int(kv[1], key));
        }
    } else if (key == "residual_channels") {
        cfg.residual_channels.clear();
        for (const auto& part : split(value, ','))
            cfg.residual_channels.push_back(parse_int(part, key));
    } else if (key == "lstm_hidden") {
        cfg.lstm_hidden = parse_int(value, key);
    } else if (key == "use_attentional_lstm") {
        cfg.use_attentional_lstm = parse_bool(value, key);
    } else if (key == "shared_qkv_lstm") {
        cfg.shared_qkv_lstm = parse_bool(value, key);
    } else if (key == "dropout_rate") {
        cfg.dropout_rate = parse_dbl(value, key);
    } else if (key == "decoder_widths") {
        cfg.decoder_widths.clear();
        for (const auto& part : split(value, ','))
            cfg.decoder_widths.push_back(parse_int(part, key));
    } else if (key == "scaled_attention") {
        cfg.scaled_attention = parse_bool(value, key);
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else {
        throw ConfigError("unknown model config key '" + key + "'");
    }
}

// ------------------------------------------------------------- RtfnModel

RtfnModel::RtfnModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    // Branch init streams are independent so toggling the a-LSTM branch
    // leaves temporal-branch values untouched under the same seed.
    Rng temporal_rng(derive_seed(cfg_.seed, 1));
    conv_a_ = std::make_unique<MultiHeadConv>(store_, "conv_a", 1, cfg_.conv_heads,
                                              temporal_rng);
    attn_ = std::make_unique<SelfAttention>(store_, "attn", conv_a_->out_channels(),
                                            temporal_rng);
    conv_b_ = std::make_unique<MultiHeadConv>(store_, "conv_b", conv_a_->out_channels(),
                                              cfg_.conv_heads, temporal_rng);
    int channels = conv_b_->out_channels();
    for (std::size_t i = 0; i < cfg_.residual_channels.size(); ++i) {
        residual_.emplace_back(store_, "res" + std::to_string(i), channels,
                               cfg_.residual_channels[i], temporal_rng);
        channels = cfg_.residual_channels[i];
    }
    feature_dim_ = channels;
    if (cfg_.use_attentional_lstm) {
        Rng alstm_rng(derive_seed(cfg_.seed, 2));
        alstm_ = std::make_unique<AttentionalLstm>(store_, "alstm", 1, cfg_.lstm_hidden,
                                                   cfg_.shared_qkv_lstm,
                                                   cfg_.scaled_attention, alstm_rng);
        feature_dim_ += cfg_.lstm_hidden;
    }
}

Tensor RtfnModel::features(Tape& tp, const Tensor& x, bool training) const {
    if (x.rank() != 3 || x.shape[1] != 1 || x.shape[2] != cfg_.input_length)
        throw DimensionError("rtfn: input " + shape_str(x.shape) +
                             " does not match expected b×1×" +
                             std::to_string(cfg_.input_length));
    Tensor y = conv_a_->forward(tp, x, training);
    y = attn_->forward(tp, y);
    y = conv_b_->forward(tp, y, training);
    for (const auto& block : residual_) y = block.forward(tp, y, training);
    Tensor feat = global_avg_pool(tp, y);

    if (alstm_) {
        const int t = cfg_.input_length;
        std::vector<Tensor> pooled;
        pooled.reserve(static_cast<std::size_t>(x.shape[0]));
        for (int i = 0; i < x.shape[0]; ++i) {
            Tensor xi = reshape(tp, select(tp, x, i), {t, 1});
            Tensor attended = alstm_->forward(tp, xi);     // t×hidden
            pooled.push_back(reduce_mean(tp, attended, 0));  // hidden
        }
        feat = concat(tp, {feat, stack0(tp, pooled)}, 1);
    }
    return feat;
}

// -------------------------------------------------------- SupervisedModel

SupervisedModel::SupervisedModel(const ModelConfig& cfg) : rtfn_(cfg) {
    Rng head_rng(derive_seed(cfg.seed, 3));
    head_ = std::make_unique<DenseLayer>(rtfn_.store(), "head", rtfn_.feature_dim(),
                                         cfg.num_classes, head_rng);
}

Tensor SupervisedModel::logits(Tape& tp, const Tensor& x, bool training,
                               Rng& dropout_rng) const {
    Tensor feat = rtfn_.features(tp, x, training);
    feat = dropout(tp, feat, rtfn_.config().dropout_rate, training, dropout_rng);
    return head_->forward(tp, feat);
}

std::vector<int> SupervisedModel::classify(const Tensor& x) const {
    Tape tape(false);
    Rng unused(0);
    return argmax_rows(logits(tape, x, false, unused));
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2)
        throw DimensionError("argmax_rows: expects b×C, got " + shape_str(logits.shape));
    std::vector<int> out(static_cast<std::size_t>(logits.shape[0]));
    for (int i = 0; i < logits.shape[0]; ++i) {
        int best = 0;
        for (int j = 1; j < logits.shape[1]; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// ------------------------------------------------------- AutoencoderModel

AutoencoderModel::AutoencoderModel(const ModelConfig& cfg) : rtfn_(cfg) {
    Rng dec_rng(derive_seed(cfg.seed, 4));
    int in = rtfn_.feature_dim();
    const auto widths = cfg.effective_decoder_widths();
    for (std::size_t i = 0; i < widths.size(); ++i) {
        decoder_.emplace_back(rtfn_.store(), "decoder.fc" + std::to_string(i), in,
                              widths[i], dec_rng);
        in = widths[i];
    }
}

Tensor decode(Tape& tp, const std::vector<DenseLayer>& decoder, const Tensor& z) {
    Tensor y = z;
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        y = decoder[i].forward(tp, y);
        if (i + 1 < decoder.size()) y = relu(tp, y);
    }
    return y;
}

Tensor AutoencoderModel::reconstruct(Tape& tp, const Tensor& x, bool training) const {
    return decode(tp, decoder_, rtfn_.features(tp, x, training));
}

Tensor AutoencoderModel::encode(const Tensor& x) const {
    Tape tape(false);
    return rtfn_.features(tape, x, false);
}

// ---------------------------------------------------------------- losses

Tensor supervised_loss(Tape& tp, const Tensor& logits, const std::vector<int>& labels) {
    return cross_entropy(tp, logits, labels);
}

Tensor reconstruction_loss(Tape& tp, const Tensor& x, const Tensor& x_rec) {
    if (x.shape != x_rec.shape)
        throw DimensionError("reconstruction_loss: shapes " + shape_str(x.shape) +
                             " and " + shape_str(x_rec.shape) + " differ");
    return reduce_mean(tp, square(tp, sub(tp, x, x_rec)));
}

// ------------------------------------------------------------ checkpoint

namespace {

constexpr char kMagic[8] = {'R', 'T', 'F', 'N', '0', '0', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
        throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw DataError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

std::string config_blob(const ModelConfig& cfg, const CheckpointMeta& meta) {
    std::ostringstream os;
    os << "pipeline = " << meta.pipeline << '\n';
    os << "dataset = " << meta.dataset << '\n';
    os << "label_map = ";
    for (std::size_t i = 0; i < meta.raw_labels.size(); ++i) {
        if (i) os << ',';
        os << format_double(meta.raw_labels[i]);
    }
    os << '\n';
    os << cfg.to_text();
    return os.str();
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const CheckpointMeta& meta, const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    const std::string blob = config_blob(cfg, meta);
    write_u64(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    write_u64(os, store.count());
    for (const auto& name : store.names()) {
        const Param& p = store.at(name);
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) write_u32(os, static_cast<std::uint32_t>(d));
        for (double v : p.value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            write_u64(os, bits);
        }
    }
    if (!os) throw DataError("write to '" + path + "' failed");
}

LoadedCheckpoint read_checkpoint_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("'" + path + "' is not an RTFN0001 checkpoint");
    const std::uint64_t blob_len = read_u64(is);
    std::string blob(blob_len, '\0');
    if (!is.read(blob.data(), static_cast<std::streamsize>(blob_len)))
        throw DataError("checkpoint truncated in config blob");

    LoadedCheckpoint out;
    const auto kv = parse_flat_kv(blob);
    for (const auto& [key, value] : kv) {
        if (key == "pipeline") {
            out.meta.pipeline = value;
        } else if (key == "dataset") {
            out.meta.dataset = value;
        } else if (key == "label_map") {
            for (const auto& part : split(value, ','))
                if (!part.empty()) out.meta.raw_labels.push_back(parse_dbl(part, key));
        } else {
            apply_config_entry(out.config, key, value);
        }
    }
    out.config.validate();
    return out;
}

void restore_params(const std::string& path, ParamStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    is.seekg(8);
    const std::uint64_t blob_len = read_u64(is);
    is.seekg(static_cast<std::streamoff>(blob_len), std::ios::cur);
    const std::uint64_t count = read_u64(is);
    if (count != store.count())
        throw DataError("checkpoint holds " + std::to_string(count) + " params, model has " +
                        std::to_string(store.count()));
    for (std::uint64_t pi = 0; pi < count; ++pi) {
        const std::uint64_t name_len = read_u64(is);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw DataError("checkpoint truncated in param name");
        if (!store.has(name)) throw DataError("checkpoint param '" + name + "' is unknown");
        Param& p = store.at(name);
        const std::uint32_t rank = read_u32(is);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(is));
        if (shape != p.shape)
            throw DataError("checkpoint param '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(p.shape));
        for (auto& v : p.value) {
            const std::uint64_t bits = read_u64(is);
            std::memcpy(&v, &bits, 8);
        }
    }
}

}  // namespace rtfn
