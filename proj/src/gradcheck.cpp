#include "rtfn/gradcheck.hpp"

#include <cmath>

#include "rtfn/layers.hpp"
#include "rtfn/model.hpp"

namespace rtfn {

namespace {

// Central differences pick up a bias of up to half the one-sided slope
// disagreement when the probe interval straddles a relu kink; for smooth
// stretches that disagreement is only step*f''. Subtracting it keeps the
// check strict where the measurement is valid and forgives exactly the
// measured nonsmoothness where it is not — all from function values alone,
// independent of the tape.
double fd_rel_err(double grad, double up, double mid, double down, double step) {
    const double fd = (up - down) / (2.0 * step);
    const double slope_gap = std::abs((up - mid) / step - (mid - down) / step);
    const double err = std::max(0.0, std::abs(grad - fd) - slope_gap);
    return err / std::max({std::abs(grad), std::abs(fd), 1e-2});
}

std::vector<int> pick_coords(std::int64_t n, int max_coords, Rng* rng) {
    std::vector<int> coords;
    if (max_coords <= 0 || n <= max_coords || rng == nullptr) {
        coords.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = static_cast<int>(i);
    } else {
        for (int i = 0; i < max_coords; ++i)
            coords.push_back(static_cast<int>(uniform_index(*rng, static_cast<std::size_t>(n))));
    }
    return coords;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t(std::move(shape));
    for (auto& v : t.values) v = uniform_range(rng, lo, hi);
    return t;
}

// weighted scalar readout so the whole Jacobian is exercised
Tensor weighted_sum(Tape& tp, const Tensor& y, Rng& rng) {
    Tensor w(y.shape);
    for (auto& v : w.values) v = uniform_range(rng, -1.0, 1.0);
    return reduce_sum(tp, mul(tp, y, w));
}

}  // namespace

double fd_max_rel_err(const std::function<Tensor(Tape&, std::vector<Tensor>&)>& forward,
                      std::vector<Tensor> leaves, double step, int max_coords,
                      Rng* coord_rng) {
    for (auto& leaf : leaves) leaf.node = -1;
    std::vector<Tensor> work = leaves;

    Tape tape;
    for (auto& leaf : work) tape.track(leaf);
    Tensor loss = forward(tape, work);
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    grads.reserve(work.size());
    for (const auto& leaf : work) grads.push_back(tape.grad(leaf.node));

    const double mid = loss.values[0];
    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        for (int c : pick_coords(leaves[li].size(), max_coords, coord_rng)) {
            std::vector<Tensor> probe = leaves;
            const double orig = probe[li].values[static_cast<std::size_t>(c)];
            Tape dead(false);
            probe[li].values[static_cast<std::size_t>(c)] = orig + step;
            const double up = forward(dead, probe).values[0];
            probe[li].values[static_cast<std::size_t>(c)] = orig - step;
            const double down = forward(dead, probe).values[0];
            probe[li].values[static_cast<std::size_t>(c)] = orig;
            worst = std::max(worst, fd_rel_err(grads[li][static_cast<std::size_t>(c)], up,
                                               mid, down, step));
        }
    }
    return worst;
}

double fd_max_rel_err_params(const std::function<Tensor(Tape&)>& forward, ParamStore& store,
                             const std::vector<std::string>& params, double step,
                             int max_coords, Rng* coord_rng) {
    store.zero_grads();
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);
    store.pull_grads(tape);

    const double mid = loss.values[0];
    double worst = 0.0;
    for (const auto& name : params) {
        Param& p = store.at(name);
        for (int c : pick_coords(static_cast<std::int64_t>(p.value.size()), max_coords,
                                 coord_rng)) {
            const double orig = p.value[static_cast<std::size_t>(c)];
            Tape dead(false);
            p.value[static_cast<std::size_t>(c)] = orig + step;
            const double up = forward(dead).values[0];
            p.value[static_cast<std::size_t>(c)] = orig - step;
            const double down = forward(dead).values[0];
            p.value[static_cast<std::size_t>(c)] = orig;
            worst = std::max(worst, fd_rel_err(p.grad[static_cast<std::size_t>(c)], up, mid,
                                               down, step));
        }
    }
    store.zero_grads();
    return worst;
}

namespace {

struct Suite {
    std::vector<GradCheckResult> results;
    Rng rng;

    explicit Suite(std::uint64_t seed) : rng(seed) {}

    void run(const std::string& name, int instances, double tolerance,
             const std::function<double(Rng&)>& one_instance) {
        GradCheckResult r;
        r.name = name;
        r.instances = instances;
        r.tolerance = tolerance;
        for (int i = 0; i < instances; ++i)
            r.max_rel_err = std::max(r.max_rel_err, one_instance(rng));
        r.pass = r.max_rel_err < tolerance;
        results.push_back(r);
    }
};

int dim(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
    Suite suite(seed);
    constexpr double kTol = 1e-4;
    constexpr double kTolComposite = 1e-3;

    suite.run("matmul", 20, kTol, [](Rng& rng) {
        const int m = dim(rng, 1, 5), k = dim(rng, 1, 5), n = dim(rng, 1, 5);
        const bool ta = uniform01(rng) < 0.5, tb = uniform01(rng) < 0.5;
        std::vector<Tensor> leaves{
            random_tensor(ta ? Shape{k, m} : Shape{m, k}, rng),
            random_tensor(tb ? Shape{n, k} : Shape{k, n}, rng)};
        Rng wrng(rng());
        return fd_max_rel_err(
            [ta, tb, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, matmul(tp, in[0], in[1], ta, tb), w);
            },
            leaves);
    });

    suite.run("softmax_rows", 20, kTol, [](Rng& rng) {
        std::vector<Tensor> leaves{random_tensor({dim(rng, 1, 5), dim(rng, 2, 6)}, rng)};
        Rng wrng(rng());
        return fd_max_rel_err(
            [&wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, softmax_rows(tp, in[0]), w);
            },
            leaves);
    });

    suite.run("softmax_cols", 20, kTol, [](Rng& rng) {
        std::vector<Tensor> leaves{random_tensor({dim(rng, 2, 6), dim(rng, 1, 5)}, rng)};
        Rng wrng(rng());
        return fd_max_rel_err(
            [&wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, softmax_cols(tp, in[0]), w);
            },
            leaves);
    });

    suite.run("conv1d", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 2), ci = dim(rng, 1, 3), co = dim(rng, 1, 3);
        const int k = dim(rng, 1, 5), t = dim(rng, k, k + 10);
        const Padding pad = uniform01(rng) < 0.5 ? Padding::same : Padding::valid;
        std::vector<Tensor> leaves{random_tensor({b, ci, t}, rng),
                                   random_tensor({co, ci, k}, rng)};
        Rng wrng(rng());
        return fd_max_rel_err(
            [pad, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, conv1d(tp, in[0], in[1], pad), w);
            },
            leaves);
    });

    const struct {
        const char* name;
        Tensor (*op)(Tape&, const Tensor&);
    } unaries[] = {{"relu", relu}, {"sigmoid", sigmoid}, {"tanh", tanh_op}, {"square", square}};
    for (const auto& u : unaries) {
        auto op = u.op;
        suite.run(u.name, 20, kTol, [op](Rng& rng) {
            Tensor x = random_tensor({dim(rng, 1, 4), dim(rng, 1, 6)}, rng);
            // keep relu kinks away from the probe step
            for (auto& v : x.values)
                if (std::abs(v) < 1e-3) v = 0.5;
            Rng wrng(rng());
            return fd_max_rel_err(
                [op, &wrng](Tape& tp, std::vector<Tensor>& in) {
                    Rng w = wrng;
                    return weighted_sum(tp, op(tp, in[0]), w);
                },
                {x});
        });
    }

    const struct {
        const char* name;
        Tensor (*op)(Tape&, const Tensor&, const Tensor&);
    } binaries[] = {{"add", add}, {"sub", sub}, {"mul", mul}};
    for (const auto& bop : binaries) {
        auto op = bop.op;
        suite.run(bop.name, 20, kTol, [op](Rng& rng) {
            const int b = dim(rng, 1, 3), n = dim(rng, 1, 5);
            const int mode = static_cast<int>(uniform_index(rng, 3));
            Shape bshape = mode == 0 ? Shape{b, n} : mode == 1 ? Shape{n} : Shape{1};
            std::vector<Tensor> leaves{random_tensor({b, n}, rng),
                                       random_tensor(bshape, rng)};
            Rng wrng(rng());
            return fd_max_rel_err(
                [op, &wrng](Tape& tp, std::vector<Tensor>& in) {
                    Rng w = wrng;
                    return weighted_sum(tp, op(tp, in[0], in[1]), w);
                },
                leaves);
        });
    }

    suite.run("reduce", 20, kTol, [](Rng& rng) {
        Tensor x = random_tensor({dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 1, 5)}, rng);
        const int mode = static_cast<int>(uniform_index(rng, 4));  // all, axis 0..2
        const Reduce kind = uniform01(rng) < 0.5 ? Reduce::sum : Reduce::mean;
        std::optional<int> axis;
        if (mode > 0) axis = mode - 1;
        Rng wrng(rng());
        return fd_max_rel_err(
            [kind, axis, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, reduce(tp, in[0], kind, axis), w);
            },
            {x});
    });

    suite.run("shape_ops", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 2, 4), c = dim(rng, 1, 3), t = dim(rng, 2, 5);
        std::vector<Tensor> leaves{random_tensor({b, c, t}, rng),
                                   random_tensor({c, t}, rng)};
        const int idx = dim(rng, 0, b - 1);
        Rng wrng(rng());
        return fd_max_rel_err(
            [idx, c, t, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                Tensor sel = select(tp, in[0], idx);                 // c×t
                Tensor tr = transpose(tp, in[1]);                    // t×c
                Tensor back = transpose(tp, tr);                     // c×t
                Tensor cat = concat(tp, {sel, back}, 1);             // c×2t
                Tensor flat = reshape(tp, cat, {c * 2 * t});
                Tensor stacked = stack0(tp, {flat, flat});           // 2×(c·2t)
                return weighted_sum(tp, stacked, w);
            },
            leaves);
    });

    suite.run("cross_entropy", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 5), c = dim(rng, 2, 5);
        Tensor logits = random_tensor({b, c}, rng, -2.0, 2.0);
        std::vector<int> labels(static_cast<std::size_t>(b));
        for (auto& l : labels) l = dim(rng, 0, c - 1);
        return fd_max_rel_err(
            [labels](Tape& tp, std::vector<Tensor>& in) {
                return cross_entropy(tp, in[0], labels);
            },
            {logits});
    });

    suite.run("conv_relu_mean_chain", 20, kTol, [](Rng& rng) {
        const int t = dim(rng, 6, 12);
        std::vector<Tensor> leaves{random_tensor({1, 1, t}, rng),
                                   random_tensor({2, 1, 3}, rng)};
        return fd_max_rel_err(
            [](Tape& tp, std::vector<Tensor>& in) {
                Tensor y = conv1d(tp, in[0], in[1], Padding::valid);
                for (auto& v : in[0].values) (void)v;
                return reduce_mean(tp, relu(tp, y));
            },
            leaves);
    });

    suite.run("lstm_forward", 20, kTol, [](Rng& rng) {
        const int in_dim = dim(rng, 1, 3), hidden = dim(rng, 2, 4), t = dim(rng, 2, 6);
        ParamStore store;
        Rng init(rng());
        LstmLayer lstm(store, "lstm", in_dim, hidden, init);
        Tensor x = random_tensor({t, in_dim}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&lstm, &x, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, lstm.forward(tp, x), w);
            },
            store, names);
    });

    suite.run("attentional_lstm", 20, kTol, [](Rng& rng) {
        const int hidden = dim(rng, 2, 4), t = dim(rng, 2, 5);
        const bool shared = uniform01(rng) < 0.3;
        ParamStore store;
        Rng init(rng());
        AttentionalLstm alstm(store, "alstm", 1, hidden, shared, false, init);
        Tensor x = random_tensor({t, 1}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&alstm, &x, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, alstm.forward(tp, x), w);
            },
            store, names);
    });

    suite.run("self_attention", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 2), c = dim(rng, 2, 4), t = dim(rng, 3, 6);
        ParamStore store;
        Rng init(rng());
        SelfAttention attn(store, "attn", c, init);
        Tensor x = random_tensor({b, c, t}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&attn, &x, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, attn.forward(tp, x), w);
            },
            store, names);
    });

    suite.run("multi_head_conv", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 2), c = dim(rng, 1, 2), t = dim(rng, 6, 12);
        ParamStore store;
        Rng init(rng());
        MultiHeadConv block(store, "mhc", c, {{3, 2}, {5, 2}}, init);
        Tensor x = random_tensor({b, c, t}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&block, &x, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, block.forward(tp, x, true), w);
            },
            store, names);
    });

    suite.run("residual_block", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 2), ci = dim(rng, 1, 3), co = dim(rng, 2, 3);
        const int t = dim(rng, 8, 14);
        ParamStore store;
        Rng init(rng());
        ResidualBlock block(store, "res", ci, co, init);
        Tensor x = random_tensor({b, ci, t}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&block, &x, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, block.forward(tp, x, true), w);
            },
            store, names);
    });

    suite.run("batchnorm", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 2, 3), c = dim(rng, 1, 3), t = dim(rng, 3, 6);
        ParamStore store;
        BatchNorm1d bn(store, "bn", c);
        // non-trivial scale/shift
        for (auto& v : store.at("bn.gamma").value) v = uniform_range(rng, 0.5, 1.5);
        for (auto& v : store.at("bn.beta").value) v = uniform_range(rng, -0.5, 0.5);
        Tensor x = random_tensor({b, c, t}, rng);
        Rng wrng(rng());
        return fd_max_rel_err(
            [&bn, &store, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, bn.forward(tp, in[0], true), w);
            },
            {x});
    });

    suite.run("dense_decoder", 20, kTol, [](Rng& rng) {
        const int b = dim(rng, 1, 3), f = dim(rng, 2, 4), t = dim(rng, 3, 6);
        ParamStore store;
        Rng init(rng());
        std::vector<DenseLayer> decoder;
        decoder.emplace_back(store, "fc0", f, 4, init);
        decoder.emplace_back(store, "fc1", 4, 5, init);
        decoder.emplace_back(store, "fc2", 5, 4, init);
        decoder.emplace_back(store, "fc3", 4, t, init);
        Tensor z = random_tensor({b, f}, rng);
        Rng wrng(rng());
        std::vector<std::string> names = store.names();
        return fd_max_rel_err_params(
            [&decoder, &z, &wrng](Tape& tp) {
                Rng w = wrng;
                return weighted_sum(tp, decode(tp, decoder, z), w);
            },
            store, names);
    });

    suite.run("global_avg_pool", 20, kTol, [](Rng& rng) {
        Tensor x = random_tensor({dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 2, 6)}, rng);
        Rng wrng(rng());
        return fd_max_rel_err(
            [&wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng w = wrng;
                return weighted_sum(tp, global_avg_pool(tp, in[0]), w);
            },
            {x});
    });

    suite.run("dropout", 20, kTol, [](Rng& rng) {
        Tensor x = random_tensor({dim(rng, 2, 4), dim(rng, 2, 5)}, rng);
        const std::uint64_t mask_seed = rng();
        Rng wrng(rng());
        return fd_max_rel_err(
            [mask_seed, &wrng](Tape& tp, std::vector<Tensor>& in) {
                Rng mask_rng(mask_seed);  // same mask on every probe
                Rng w = wrng;
                return weighted_sum(tp, dropout(tp, in[0], 0.4, true, mask_rng), w);
            },
            {x});
    });

    // full-model composites on the 2-sample length-32 toy config
    ModelConfig toy;
    toy.input_length = 32;
    toy.num_classes = 2;
    toy.conv_heads = {{3, 3}, {5, 3}};
    toy.residual_channels = {4};
    toy.lstm_hidden = 3;
    toy.dropout_rate = 0.0;
    toy.decoder_widths = {6, 8, 6, 32};
    toy.seed = seed ^ 0x5eed;

    suite.run("model_supervised_loss", 1, kTolComposite, [&toy](Rng& rng) {
        SupervisedModel model(toy);
        Tensor x = random_tensor({2, 1, toy.input_length}, rng);
        const std::vector<int> labels{0, 1};
        Rng coord_rng(rng());
        Rng dropout_rng(0);
        std::vector<std::string> names = model.store().names();
        std::vector<std::string> trainable;
        for (const auto& n : names)
            if (model.store().at(n).trainable) trainable.push_back(n);
        return fd_max_rel_err_params(
            [&model, &x, &labels, &dropout_rng](Tape& tp) {
                Rng drng = dropout_rng;
                return supervised_loss(tp, model.logits(tp, x, true, drng), labels);
            },
            model.store(), trainable, 1e-5, 8, &coord_rng);
    });

    suite.run("model_reconstruction_loss", 1, kTolComposite, [&toy](Rng& rng) {
        AutoencoderModel model(toy);
        Tensor x = random_tensor({2, 1, toy.input_length}, rng);
        Rng coord_rng(rng());
        std::vector<std::string> trainable;
        for (const auto& n : model.store().names())
            if (model.store().at(n).trainable) trainable.push_back(n);
        return fd_max_rel_err_params(
            [&model, &x](Tape& tp) {
                Tensor target = reshape(tp, x, {2, x.shape[2]});
                return reconstruction_loss(tp, target, model.reconstruct(tp, x, true));
            },
            model.store(), trainable, 1e-5, 8, &coord_rng);
    });

    return suite.results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

}  // namespace rtfn
