#ifndef RTFN_MODEL_HPP
#define RTFN_MODEL_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtfn/layers.hpp"
#include "rtfn/param_store.hpp"

namespace rtfn {

// Every architecture knob with its pinned default. input_length and
// num_classes come from the dataset at hand.
struct ModelConfig {
    int input_length = 0;
    int num_classes = 0;  // clusters, for the unsupervised pipeline
    std::vector<std::pair<int, int>> conv_heads = {{3, 32}, {5, 32}, {8, 32}};
    std::vector<int> residual_channels = {128, 256, 128};
    int lstm_hidden = 64;
    bool use_attentional_lstm = true;
    bool shared_qkv_lstm = false;
    double dropout_rate = 0.3;
    std::vector<int> decoder_widths;  // empty -> {128, 256, max(L/2,64), L}
    bool scaled_attention = false;
    std::uint64_t seed = 42;

    void validate() const;
    std::vector<int> effective_decoder_widths() const;

    // flat key=value form; the canonical text also feeds config_hash()
    std::string to_text() const;
    std::uint64_t config_hash() const;
};

// Apply one "key = value" pair; unknown keys raise ConfigError.
void apply_config_entry(ModelConfig& cfg, const std::string& key, const std::string& value);

// The feature extractor: a convolutional temporal branch (multi-head conv →
// self-attention → multi-head conv → residual stack → global average pool)
// in parallel with an attentional-LSTM branch, fused by concatenation.
class RtfnModel {
public:
    explicit RtfnModel(const ModelConfig& cfg);

    RtfnModel(const RtfnModel&) = delete;
    RtfnModel& operator=(const RtfnModel&) = delete;

    // x: b×1×t -> b×F
    Tensor features(Tape& tp, const Tensor& x, bool training) const;

    int feature_dim() const { return feature_dim_; }
    const ModelConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

private:
    ModelConfig cfg_;
    ParamStore store_;
    std::unique_ptr<MultiHeadConv> conv_a_, conv_b_;
    std::unique_ptr<SelfAttention> attn_;
    std::vector<ResidualBlock> residual_;
    std::unique_ptr<AttentionalLstm> alstm_;
    int feature_dim_ = 0;
};

// RTFN + dropout + fully-connected classifier.
class SupervisedModel {
public:
    explicit SupervisedModel(const ModelConfig& cfg);

    Tensor logits(Tape& tp, const Tensor& x, bool training, Rng& dropout_rng) const;

    // eval-mode argmax; ties resolve to the lowest class id
    std::vector<int> classify(const Tensor& x) const;

    RtfnModel& rtfn() { return rtfn_; }
    const RtfnModel& rtfn() const { return rtfn_; }
    ParamStore& store() { return rtfn_.store(); }
    const ModelConfig& config() const { return rtfn_.config(); }

private:
    RtfnModel rtfn_;
    std::unique_ptr<DenseLayer> head_;
};

// RTFN encoder + four-dense-layer decoder.
class AutoencoderModel {
public:
    explicit AutoencoderModel(const ModelConfig& cfg);

    // x: b×1×t -> reconstruction b×t
    Tensor reconstruct(Tape& tp, const Tensor& x, bool training) const;
    // eval-mode features, b×F
    Tensor encode(const Tensor& x) const;

    RtfnModel& rtfn() { return rtfn_; }
    const RtfnModel& rtfn() const { return rtfn_; }
    ParamStore& store() { return rtfn_.store(); }
    const ModelConfig& config() const { return rtfn_.config(); }

private:
    RtfnModel rtfn_;
    std::vector<DenseLayer> decoder_;
};

// Decoder stack application; exposed for direct gradient checks.
Tensor decode(Tape& tp, const std::vector<DenseLayer>& decoder, const Tensor& z);

// Mean over the batch of -log softmax(logits)[label].
Tensor supervised_loss(Tape& tp, const Tensor& logits, const std::vector<int>& labels);

// Mean squared difference over all b·t entries.
Tensor reconstruction_loss(Tape& tp, const Tensor& x, const Tensor& x_rec);

std::vector<int> argmax_rows(const Tensor& logits);

// ---- checkpoint format -------------------------------------------------
// "RTFN0001" | u64 config-blob length | flat key=value text (model config,
// pipeline kind, dataset name, raw label map) | u64 param count | per param:
// u64 name length, name, u32 rank, u32 extents…, f64 little-endian payload.

struct CheckpointMeta {
    std::string pipeline;  // "supervised" | "autoencoder"
    std::string dataset;
    std::vector<double> raw_labels;  // ascending; index = class id
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const CheckpointMeta& meta, const ParamStore& store);

struct LoadedCheckpoint {
    ModelConfig config;
    CheckpointMeta meta;
};

// Reads config+meta, rebuilds nothing: call restore_params afterwards with a
// freshly constructed model's store.
LoadedCheckpoint read_checkpoint_header(const std::string& path);
void restore_params(const std::string& path, ParamStore& store);

}  // namespace rtfn

#endif
