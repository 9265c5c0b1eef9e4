#ifndef RTFN_LAYERS_HPP
#define RTFN_LAYERS_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtfn/param_store.hpp"
#include "rtfn/tensor.hpp"

namespace rtfn {

// Standard LSTM over one sequence. Twelve parameter blocks (W/U/b for the
// input, forget, output and candidate gates); forget-gate bias starts at 1,
// weights uniform ±sqrt(1/fan_in). The whole recurrence is recorded as one
// tape op whose backward pass runs truncated-free BPTT.
class LstmLayer {
public:
    LstmLayer(ParamStore& store, std::string prefix, int input_dim, int hidden, Rng& rng);

    // x: t×input_dim. Returns all hidden states, t×hidden. h0/c0 default to
    // zeros and are treated as constants.
    Tensor forward(Tape& tp, const Tensor& x,
                   const std::vector<double>* h0 = nullptr,
                   const std::vector<double>* c0 = nullptr) const;

    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }

private:
    ParamStore* store_;
    std::string prefix_;
    int input_dim_, hidden_;
};

// softmax(fq · fk^T) · fv, the combination step of Eq-style dot-product
// attention over feature matrices. `scaled` divides scores by sqrt(hidden).
Tensor attention_combine(Tape& tp, const Tensor& fq, const Tensor& fk,
                         const Tensor& fv, bool scaled);

// Attentional LSTM block: three feature-extracting LSTMs produce the query,
// key and value matrices which are combined by unscaled dot-product
// attention. `shared` collapses the three extractors into one.
class AttentionalLstm {
public:
    AttentionalLstm(ParamStore& store, std::string prefix, int input_dim, int hidden,
                    bool shared, bool scaled, Rng& rng);

    // x: t×input_dim -> t×hidden
    Tensor forward(Tape& tp, const Tensor& x) const;

    int hidden() const { return hidden_; }

private:
    std::vector<LstmLayer> lstms_;  // one when shared, else q/k/v
    bool shared_, scaled_;
    int hidden_;
};

// 1-D convolution layer; bias-free (the batch norm that follows carries the
// shift).
class Conv1dLayer {
public:
    Conv1dLayer(ParamStore& store, std::string prefix, int in_channels, int out_channels,
                int kernel, Rng& rng);

    Tensor forward(Tape& tp, const Tensor& x, Padding pad) const;

    int out_channels() const { return out_channels_; }

private:
    ParamStore* store_;
    std::string name_;
    int out_channels_;
};

// Per-channel batch norm over (batch, time); momentum 0.9, eps 1e-5.
// Running statistics update only while training.
class BatchNorm1d {
public:
    BatchNorm1d(ParamStore& store, std::string prefix, int channels);

    Tensor forward(Tape& tp, const Tensor& x, bool training) const;

private:
    ParamStore* store_;
    std::string prefix_;
    int channels_;
};

// Parallel convolutions with different kernel sizes, each conv→BN→relu,
// concatenated on the channel axis.
class MultiHeadConv {
public:
    MultiHeadConv(ParamStore& store, std::string prefix, int in_channels,
                  const std::vector<std::pair<int, int>>& heads, Rng& rng);

    Tensor forward(Tape& tp, const Tensor& x, bool training) const;

    int out_channels() const { return out_channels_; }

private:
    struct Head {
        Conv1dLayer conv;
        BatchNorm1d bn;
    };
    std::vector<Head> heads_;
    int out_channels_;
};

// Residual self-attention over the time axis: per item, Q/K/V are c×c
// projections of the feature map and the attended features are added back
// onto the input.
class SelfAttention {
public:
    SelfAttention(ParamStore& store, std::string prefix, int channels, Rng& rng);

    Tensor forward(Tape& tp, const Tensor& x) const;

private:
    ParamStore* store_;
    std::string prefix_;
    int channels_;
};

// conv8→BN→relu → conv5→BN→relu → conv3→BN, plus identity or 1×1-projection
// shortcut, relu after the join. Same padding keeps the length.
class ResidualBlock {
public:
    ResidualBlock(ParamStore& store, std::string prefix, int in_channels,
                  int out_channels, Rng& rng);

    Tensor forward(Tape& tp, const Tensor& x, bool training) const;

    int out_channels() const { return out_channels_; }

private:
    Conv1dLayer conv1_, conv2_, conv3_;
    BatchNorm1d bn1_, bn2_, bn3_;
    std::optional<Conv1dLayer> shortcut_;
    int out_channels_;
};

class DenseLayer {
public:
    DenseLayer(ParamStore& store, std::string prefix, int in_dim, int out_dim, Rng& rng);

    // x: b×in -> b×out
    Tensor forward(Tape& tp, const Tensor& x) const;

    int out_dim() const { return out_dim_; }

private:
    ParamStore* store_;
    std::string prefix_;
    int out_dim_;
};

// Inverted dropout: eval is the identity, training keeps each value with
// probability 1-rate and scales survivors by 1/(1-rate).
Tensor dropout(Tape& tp, const Tensor& x, double rate, bool training, Rng& rng);

// Mean over the time axis: b×c×t -> b×c.
Tensor global_avg_pool(Tape& tp, const Tensor& x);

}  // namespace rtfn

#endif
