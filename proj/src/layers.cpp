#include "rtfn/layers.hpp"

#include <cmath>
#include <memory>

namespace rtfn {

namespace {

const char* const kGates = "ifog";

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

// ----------------------------------------------------------------- LSTM

LstmLayer::LstmLayer(ParamStore& store, std::string prefix, int input_dim, int hidden,
                     Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), input_dim_(input_dim), hidden_(hidden) {
    if (input_dim < 1 || hidden < 1)
        throw ConfigError("lstm '" + prefix_ + "': dimensions must be positive");
    for (int gi = 0; gi < 4; ++gi) {
        const std::string g(1, kGates[gi]);
        init_uniform_fan_in(store.add(prefix_ + ".W_" + g, {input_dim, hidden}), input_dim, rng);
        init_uniform_fan_in(store.add(prefix_ + ".U_" + g, {hidden, hidden}), hidden, rng);
        Param& b = store.add(prefix_ + ".b_" + g, {hidden});
        if (kGates[gi] == 'f') std::fill(b.value.begin(), b.value.end(), 1.0);
    }
}

Tensor LstmLayer::forward(Tape& tp, const Tensor& x, const std::vector<double>* h0,
                          const std::vector<double>* c0) const {
    if (x.rank() != 2 || x.shape[1] != input_dim_)
        throw DimensionError("lstm '" + prefix_ + "': input " + shape_str(x.shape) +
                             " does not match input_dim " + std::to_string(input_dim_));
    const int t = x.shape[0], h = hidden_, in = input_dim_;

    Tensor W[4], U[4], B[4];
    for (int gi = 0; gi < 4; ++gi) {
        const std::string g(1, kGates[gi]);
        W[gi] = store_->use(tp, prefix_ + ".W_" + g);
        U[gi] = store_->use(tp, prefix_ + ".U_" + g);
        B[gi] = store_->use(tp, prefix_ + ".b_" + g);
    }

    std::vector<double> hprev = h0 ? *h0 : std::vector<double>(h, 0.0);
    std::vector<double> cprev = c0 ? *c0 : std::vector<double>(h, 0.0);
    if (static_cast<int>(hprev.size()) != h || static_cast<int>(cprev.size()) != h)
        throw DimensionError("lstm '" + prefix_ + "': h0/c0 must have length " +
                             std::to_string(h));

    // Pre-activations from the input for all steps at once: A_g = x·W_g + b_g.
    std::vector<std::vector<double>> pre(4);
    for (int gi = 0; gi < 4; ++gi) {
        pre[gi].assign(static_cast<std::size_t>(t) * h, 0.0);
        for (int s = 0; s < t; ++s)
            for (int j = 0; j < h; ++j)
                pre[gi][static_cast<std::size_t>(s) * h + j] = B[gi].values[j];
        gemm(false, false, t, h, in, 1.0, x.values.data(), in, W[gi].values.data(), h,
             1.0, pre[gi].data(), h);
    }

    // Gate activations and cell states saved for BPTT.
    std::vector<double> gi_v(static_cast<std::size_t>(t) * h), gf_v(gi_v.size()),
        go_v(gi_v.size()), gg_v(gi_v.size()), c_v(gi_v.size());
    Tensor out({t, h});

    std::vector<double> acc(h);
    for (int s = 0; s < t; ++s) {
        const std::size_t off = static_cast<std::size_t>(s) * h;
        for (int gi4 = 0; gi4 < 4; ++gi4) {
            // a += h_prev · U
            gemm(false, false, 1, h, h, 1.0, hprev.data(), h, U[gi4].values.data(), h,
                 1.0, pre[gi4].data() + off, h);
        }
        for (int j = 0; j < h; ++j) {
            const double ai = pre[0][off + j], af = pre[1][off + j];
            const double ao = pre[2][off + j], ag = pre[3][off + j];
            const double iv = sigmoid_scalar(ai), fv = sigmoid_scalar(af);
            const double ov = sigmoid_scalar(ao), gv = std::tanh(ag);
            const double cv = fv * cprev[j] + iv * gv;
            gi_v[off + j] = iv;
            gf_v[off + j] = fv;
            go_v[off + j] = ov;
            gg_v[off + j] = gv;
            c_v[off + j] = cv;
            out.values[off + j] = ov * std::tanh(cv);
        }
        std::copy_n(out.values.begin() + static_cast<std::ptrdiff_t>(off), h, hprev.begin());
        std::copy_n(c_v.begin() + static_cast<std::ptrdiff_t>(off), h, cprev.begin());
    }
    check_finite(out, "lstm_forward");

    bool any_param_tracked = x.tracked();
    for (int gi4 = 0; gi4 < 4 && !any_param_tracked; ++gi4)
        any_param_tracked = W[gi4].tracked() || U[gi4].tracked() || B[gi4].tracked();
    if (!tp.recording() || !any_param_tracked) return out;

    out.node = tp.new_node(out.size());
    struct Saved {
        int t, h, in;
        int xn;
        int wn[4], un[4], bn[4];
        std::vector<double> x, hseq, i, f, o, g, c, h0, c0;
        std::vector<double> w[4], u[4];
    };
    auto sv = std::make_shared<Saved>();
    sv->t = t;
    sv->h = h;
    sv->in = in;
    sv->xn = x.node;
    for (int gi4 = 0; gi4 < 4; ++gi4) {
        sv->wn[gi4] = W[gi4].node;
        sv->un[gi4] = U[gi4].node;
        sv->bn[gi4] = B[gi4].node;
        sv->w[gi4] = W[gi4].values;
        sv->u[gi4] = U[gi4].values;
    }
    sv->x = x.values;
    sv->hseq = out.values;
    sv->i = std::move(gi_v);
    sv->f = std::move(gf_v);
    sv->o = std::move(go_v);
    sv->g = std::move(gg_v);
    sv->c = std::move(c_v);
    sv->h0 = h0 ? *h0 : std::vector<double>(h, 0.0);
    sv->c0 = c0 ? *c0 : std::vector<double>(h, 0.0);

    tp.record(out.node, [sv](Tape& tape, const std::vector<double>& go) {
        const int t = sv->t, h = sv->h, in = sv->in;
        // per-gate pre-activation cotangents for every step
        std::vector<std::vector<double>> da(4);
        for (auto& v : da) v.assign(static_cast<std::size_t>(t) * h, 0.0);
        std::vector<double> dh(h, 0.0), dc(h, 0.0);

        for (int s = t - 1; s >= 0; --s) {
            const std::size_t off = static_cast<std::size_t>(s) * h;
            const double* cp = s > 0 ? sv->c.data() + off - h : sv->c0.data();
            for (int j = 0; j < h; ++j) {
                const double dhj = dh[j] + go[off + j];
                const double iv = sv->i[off + j], fv = sv->f[off + j];
                const double ov = sv->o[off + j], gv = sv->g[off + j];
                const double tc = std::tanh(sv->c[off + j]);
                const double dct = dhj * ov * (1.0 - tc * tc) + dc[j];
                da[0][off + j] = dct * gv * iv * (1.0 - iv);
                da[1][off + j] = dct * cp[j] * fv * (1.0 - fv);
                da[2][off + j] = dhj * tc * ov * (1.0 - ov);
                da[3][off + j] = dct * iv * (1.0 - gv * gv);
                dc[j] = dct * fv;
            }
            // dh_{s-1} = sum_g da_g[s] · U_g^T
            std::fill(dh.begin(), dh.end(), 0.0);
            for (int gi4 = 0; gi4 < 4; ++gi4)
                gemm(false, true, 1, h, h, 1.0, da[gi4].data() + off, h,
                     sv->u[gi4].data(), h, 1.0, dh.data(), h);
        }

        // H_prev rows: h0, h_0..h_{t-2}
        std::vector<double> hprev_mat(static_cast<std::size_t>(t) * h);
        std::copy(sv->h0.begin(), sv->h0.end(), hprev_mat.begin());
        if (t > 1)
            std::copy_n(sv->hseq.begin(), static_cast<std::size_t>(t - 1) * h,
                        hprev_mat.begin() + h);

        std::vector<double> buf;
        for (int gi4 = 0; gi4 < 4; ++gi4) {
            if (sv->wn[gi4] >= 0) {  // dW = x^T · dA
                buf.assign(static_cast<std::size_t>(in) * h, 0.0);
                gemm(true, false, in, h, t, 1.0, sv->x.data(), in, da[gi4].data(), h,
                     0.0, buf.data(), h);
                tape.accumulate(sv->wn[gi4], buf.data(), static_cast<std::int64_t>(buf.size()));
            }
            if (sv->un[gi4] >= 0) {  // dU = H_prev^T · dA
                buf.assign(static_cast<std::size_t>(h) * h, 0.0);
                gemm(true, false, h, h, t, 1.0, hprev_mat.data(), h, da[gi4].data(), h,
                     0.0, buf.data(), h);
                tape.accumulate(sv->un[gi4], buf.data(), static_cast<std::int64_t>(buf.size()));
            }
            if (sv->bn[gi4] >= 0) {  // db = column sums of dA
                buf.assign(static_cast<std::size_t>(h), 0.0);
                for (int s = 0; s < t; ++s)
                    for (int j = 0; j < h; ++j)
                        buf[static_cast<std::size_t>(j)] +=
                            da[gi4][static_cast<std::size_t>(s) * h + j];
                tape.accumulate(sv->bn[gi4], buf.data(), static_cast<std::int64_t>(buf.size()));
            }
        }
        if (sv->xn >= 0) {  // dx = sum_g dA_g · W_g^T
            buf.assign(static_cast<std::size_t>(t) * in, 0.0);
            for (int gi4 = 0; gi4 < 4; ++gi4)
                gemm(false, true, t, in, h, 1.0, da[gi4].data(), h, sv->w[gi4].data(), h,
                     1.0, buf.data(), in);
            tape.accumulate(sv->xn, buf.data(), static_cast<std::int64_t>(buf.size()));
        }
    });
    return out;
}

// ------------------------------------------------------ attentional LSTM

Tensor attention_combine(Tape& tp, const Tensor& fq, const Tensor& fk, const Tensor& fv,
                         bool scaled) {
    Tensor scores = matmul(tp, fq, fk, false, true);
    if (scaled) {
        Tensor inv({1});
        inv.values[0] = 1.0 / std::sqrt(static_cast<double>(fq.shape[1]));
        scores = mul(tp, scores, inv);
    }
    Tensor weights = softmax_rows(tp, scores);
    return matmul(tp, weights, fv);
}

AttentionalLstm::AttentionalLstm(ParamStore& store, std::string prefix, int input_dim,
                                 int hidden, bool shared, bool scaled, Rng& rng)
    : shared_(shared), scaled_(scaled), hidden_(hidden) {
    if (shared) {
        lstms_.emplace_back(store, prefix + ".qkv", input_dim, hidden, rng);
    } else {
        lstms_.emplace_back(store, prefix + ".q", input_dim, hidden, rng);
        lstms_.emplace_back(store, prefix + ".k", input_dim, hidden, rng);
        lstms_.emplace_back(store, prefix + ".v", input_dim, hidden, rng);
    }
}

Tensor AttentionalLstm::forward(Tape& tp, const Tensor& x) const {
    const Tensor fq = lstms_[0].forward(tp, x);
    const Tensor fk = lstms_[shared_ ? 0 : 1].forward(tp, x);
    const Tensor fv = lstms_[shared_ ? 0 : 2].forward(tp, x);
    return attention_combine(tp, fq, fk, fv, scaled_);
}

// ------------------------------------------------------------ conv + BN

Conv1dLayer::Conv1dLayer(ParamStore& store, std::string prefix, int in_channels,
                         int out_channels, int kernel, Rng& rng)
    : store_(&store), name_(prefix + ".kernel"), out_channels_(out_channels) {
    init_uniform_fan_in(store.add(name_, {out_channels, in_channels, kernel}),
                        in_channels * kernel, rng);
}

Tensor Conv1dLayer::forward(Tape& tp, const Tensor& x, Padding pad) const {
    return conv1d(tp, x, store_->use(tp, name_), pad);
}

BatchNorm1d::BatchNorm1d(ParamStore& store, std::string prefix, int channels)
    : store_(&store), prefix_(std::move(prefix)), channels_(channels) {
    Param& gamma = store.add(prefix_ + ".gamma", {channels});
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
    store.add(prefix_ + ".beta", {channels});
    store.add(prefix_ + ".run_mean", {channels}, /*trainable=*/false);
    Param& rv = store.add(prefix_ + ".run_var", {channels}, /*trainable=*/false);
    std::fill(rv.value.begin(), rv.value.end(), 1.0);
}

Tensor BatchNorm1d::forward(Tape& tp, const Tensor& x, bool training) const {
    constexpr double kMomentum = 0.9;
    constexpr double kEps = 1e-5;
    if (x.rank() != 3 || x.shape[1] != channels_)
        throw DimensionError("batchnorm '" + prefix_ + "': input " + shape_str(x.shape) +
                             " does not carry " + std::to_string(channels_) + " channels");
    const int b = x.shape[0], c = channels_, t = x.shape[2];
    const std::int64_t n = static_cast<std::int64_t>(b) * t;

    Tensor gamma = store_->use(tp, prefix_ + ".gamma");
    Tensor beta = store_->use(tp, prefix_ + ".beta");

    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (training) {
        for (int i = 0; i < b; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* row = x.values.data() + (static_cast<std::size_t>(i) * c + ch) * t;
                for (int s = 0; s < t; ++s) mean[ch] += row[s];
            }
        for (int ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(n);
        for (int i = 0; i < b; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const double* row = x.values.data() + (static_cast<std::size_t>(i) * c + ch) * t;
                for (int s = 0; s < t; ++s) {
                    const double d = row[s] - mean[ch];
                    var[ch] += d * d;
                }
            }
        for (int ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(n);

        auto& rm = store_->at(prefix_ + ".run_mean").value;
        auto& rv = store_->at(prefix_ + ".run_var").value;
        for (int ch = 0; ch < c; ++ch) {
            rm[ch] = kMomentum * rm[ch] + (1.0 - kMomentum) * mean[ch];
            rv[ch] = kMomentum * rv[ch] + (1.0 - kMomentum) * var[ch];
        }
    } else {
        mean = store_->at(prefix_ + ".run_mean").value;
        var = store_->at(prefix_ + ".run_var").value;
    }

    std::vector<double> inv_std(c);
    for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kEps);

    Tensor out(x.shape);
    std::vector<double> xhat(x.values.size());
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * t;
            for (int s = 0; s < t; ++s) {
                const double xh = (x.values[base + s] - mean[ch]) * inv_std[ch];
                xhat[base + s] = xh;
                out.values[base + s] = gamma.values[ch] * xh + beta.values[ch];
            }
        }
    check_finite(out, "batchnorm");

    if (!tp.recording() || (!x.tracked() && !gamma.tracked() && !beta.tracked()))
        return out;

    out.node = tp.new_node(out.size());
    tp.record(out.node, [xn = x.node, gn = gamma.node, bn = beta.node,
                         xhat = std::move(xhat), inv_std = std::move(inv_std),
                         gv = gamma.values, b, c, t, n,
                         training](Tape& tape, const std::vector<double>& go) {
        std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
        for (int i = 0; i < b; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * t;
                for (int s = 0; s < t; ++s) {
                    dgamma[ch] += go[base + s] * xhat[base + s];
                    dbeta[ch] += go[base + s];
                }
            }
        if (xn >= 0) {
            std::vector<double> dx(xhat.size());
            for (int i = 0; i < b; ++i)
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * t;
                    const double k = gv[ch] * inv_std[ch];
                    if (training) {
                        const double m_go = dbeta[ch] / static_cast<double>(n);
                        const double m_gx = dgamma[ch] / static_cast<double>(n);
                        for (int s = 0; s < t; ++s)
                            dx[base + s] = k * (go[base + s] - m_go - xhat[base + s] * m_gx);
                    } else {
                        for (int s = 0; s < t; ++s) dx[base + s] = k * go[base + s];
                    }
                }
            tape.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        }
        if (gn >= 0) tape.accumulate(gn, dgamma.data(), c);
        if (bn >= 0) tape.accumulate(bn, dbeta.data(), c);
    });
    return out;
}

MultiHeadConv::MultiHeadConv(ParamStore& store, std::string prefix, int in_channels,
                             const std::vector<std::pair<int, int>>& heads, Rng& rng)
    : out_channels_(0) {
    if (heads.empty()) throw ConfigError("multi-head conv '" + prefix + "': no heads");
    int idx = 0;
    for (const auto& [kernel, filters] : heads) {
        const std::string hp = prefix + ".h" + std::to_string(idx++);
        heads_.push_back({Conv1dLayer(store, hp, in_channels, filters, kernel, rng),
                          BatchNorm1d(store, hp + ".bn", filters)});
        out_channels_ += filters;
    }
}

Tensor MultiHeadConv::forward(Tape& tp, const Tensor& x, bool training) const {
    std::vector<Tensor> outs;
    outs.reserve(heads_.size());
    for (const auto& head : heads_)
        outs.push_back(relu(tp, head.bn.forward(tp, head.conv.forward(tp, x, Padding::same),
                                                training)));
    return outs.size() == 1 ? outs[0] : concat(tp, outs, 1);
}

// -------------------------------------------------------- self-attention

SelfAttention::SelfAttention(ParamStore& store, std::string prefix, int channels, Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), channels_(channels) {
    init_uniform_fan_in(store.add(prefix_ + ".q_proj", {channels, channels}), channels, rng);
    init_uniform_fan_in(store.add(prefix_ + ".k_proj", {channels, channels}), channels, rng);
    init_uniform_fan_in(store.add(prefix_ + ".v_proj", {channels, channels}), channels, rng);
}

Tensor SelfAttention::forward(Tape& tp, const Tensor& x) const {
    if (x.rank() != 3 || x.shape[1] != channels_)
        throw DimensionError("self-attention '" + prefix_ + "': input " +
                             shape_str(x.shape) + " does not carry " +
                             std::to_string(channels_) + " channels");
    Tensor pq = store_->use(tp, prefix_ + ".q_proj");
    Tensor pk = store_->use(tp, prefix_ + ".k_proj");
    Tensor pv = store_->use(tp, prefix_ + ".v_proj");

    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(x.shape[0]));
    for (int i = 0; i < x.shape[0]; ++i) {
        Tensor xi = select(tp, x, i);               // c×t
        Tensor q = matmul(tp, pq, xi);
        Tensor k = matmul(tp, pk, xi);
        Tensor v = matmul(tp, pv, xi);
        Tensor scores = matmul(tp, k, q, true, false);   // t×t
        Tensor weights = softmax_cols(tp, scores);
        outs.push_back(matmul(tp, v, weights));          // c×t
    }
    Tensor attended = stack0(tp, outs);
    return add(tp, x, attended);
}

// -------------------------------------------------------- residual block

ResidualBlock::ResidualBlock(ParamStore& store, std::string prefix, int in_channels,
                             int out_channels, Rng& rng)
    : conv1_(store, prefix + ".conv1", in_channels, out_channels, 8, rng),
      conv2_(store, prefix + ".conv2", out_channels, out_channels, 5, rng),
      conv3_(store, prefix + ".conv3", out_channels, out_channels, 3, rng),
      bn1_(store, prefix + ".bn1", out_channels),
      bn2_(store, prefix + ".bn2", out_channels),
      bn3_(store, prefix + ".bn3", out_channels),
      out_channels_(out_channels) {
    if (in_channels != out_channels)
        shortcut_.emplace(store, prefix + ".shortcut", in_channels, out_channels, 1, rng);
}

Tensor ResidualBlock::forward(Tape& tp, const Tensor& x, bool training) const {
    Tensor y = relu(tp, bn1_.forward(tp, conv1_.forward(tp, x, Padding::same), training));
    y = relu(tp, bn2_.forward(tp, conv2_.forward(tp, y, Padding::same), training));
    y = bn3_.forward(tp, conv3_.forward(tp, y, Padding::same), training);
    Tensor shortcut = shortcut_ ? shortcut_->forward(tp, x, Padding::same) : x;
    return relu(tp, add(tp, y, shortcut));
}

// ------------------------------------------------------------ dense etc.

DenseLayer::DenseLayer(ParamStore& store, std::string prefix, int in_dim, int out_dim,
                       Rng& rng)
    : store_(&store), prefix_(std::move(prefix)), out_dim_(out_dim) {
    init_uniform_fan_in(store.add(prefix_ + ".W", {in_dim, out_dim}), in_dim, rng);
    store.add(prefix_ + ".b", {out_dim});
}

Tensor DenseLayer::forward(Tape& tp, const Tensor& x) const {
    Tensor y = matmul(tp, x, store_->use(tp, prefix_ + ".W"));
    return add(tp, y, store_->use(tp, prefix_ + ".b"));
}

Tensor dropout(Tape& tp, const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate " + std::to_string(rate) + " outside [0, 1)");
    if (!training || rate == 0.0) return x;
    Tensor mask(x.shape);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask.values) m = uniform01(rng) >= rate ? keep_scale : 0.0;
    return mul(tp, x, mask);
}

Tensor global_avg_pool(Tape& tp, const Tensor& x) {
    if (x.rank() != 3)
        throw DimensionError("global_avg_pool: expects b×c×t, got " + shape_str(x.shape));
    return reduce_mean(tp, x, 2);
}

}  // namespace rtfn
