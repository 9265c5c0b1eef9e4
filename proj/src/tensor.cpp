#include "rtfn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cblas.h>
#include <cmath>
#include <cstring>
#include <sstream>

namespace rtfn {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

void debug_finite(const Tensor& t, const char* where) {
#ifndef NDEBUG
    check_finite(t, where);
#else
    (void)t;
    (void)where;
#endif
}

}  // namespace

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
        throw DimensionError("tensor: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
}

void check_finite(const Tensor& t, const char* where) {
    for (double v : t.values)
        if (!std::isfinite(v))
            throw ContractError(std::string("non-finite value produced by ") + where);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
                ldb, beta, c, ldc);
}

// ---------------------------------------------------------------- Tape

Tape::Tape(bool recording) : recording_(recording) {
    static std::atomic<std::uint64_t> next_stamp{1};
    stamp_ = next_stamp.fetch_add(1);
}

int Tape::track(Tensor& t) {
    if (!recording_) return -1;
    t.node = new_node(t.size());
    return t.node;
}

int Tape::new_node(std::int64_t size) {
    sizes_.push_back(size);
    grads_.emplace_back();
    return static_cast<int>(sizes_.size()) - 1;
}

void Tape::record(int out_node, Vjp vjp) {
    if (!recording_) return;
    ops_.push_back({out_node, std::move(vjp)});
}

void Tape::accumulate(int node, const double* g, std::int64_t n) {
    if (node < 0) return;
    auto& buf = grads_[static_cast<std::size_t>(node)];
    if (buf.empty()) buf.assign(static_cast<std::size_t>(sizes_[node]), 0.0);
    for (std::int64_t i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] += g[i];
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape));
    if (!loss.tracked())
        throw ContractError("backward: loss is not on the tape");
    const double one = 1.0;
    accumulate(loss.node, &one, 1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        const auto& g = grads_[static_cast<std::size_t>(it->out)];
        if (g.empty()) continue;  // nothing reached this record
        it->vjp(*this, g);
    }
}

std::vector<double> Tape::grad(int node) const {
    if (node < 0 || node >= static_cast<int>(sizes_.size()))
        throw ContractError("grad: unknown node " + std::to_string(node));
    const auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) return std::vector<double>(static_cast<std::size_t>(sizes_[node]), 0.0);
    return g;
}

// ------------------------------------------------------------- matmul

Tensor matmul(Tape& tp, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require(a.rank() == 2 && b.rank() == 2,
            "matmul: expects matrices, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
    const int m = trans_a ? a.shape[1] : a.shape[0];
    const int ka = trans_a ? a.shape[0] : a.shape[1];
    const int kb = trans_b ? b.shape[1] : b.shape[0];
    const int n = trans_b ? b.shape[0] : b.shape[1];
    require(ka == kb, "matmul: inner dimensions disagree, " + shape_str(a.shape) +
                          (trans_a ? "^T" : "") + " vs " + shape_str(b.shape) +
                          (trans_b ? "^T" : ""));
    const int k = ka;

    Tensor out({m, n});
    gemm(trans_a, trans_b, m, n, k, 1.0, a.values.data(), a.shape[1],
         b.values.data(), b.shape[1], 0.0, out.values.data(), n);
    debug_finite(out, "matmul");

    if (tp.recording() && (a.tracked() || b.tracked())) {
        out.node = tp.new_node(out.size());
        tp.record(out.node,
                  [an = a.node, bn = b.node, av = a.values, bv = b.values,
                   acols = a.shape[1], bcols = b.shape[1], m, n, k, trans_a,
                   trans_b](Tape& t, const std::vector<double>& go) {
                      if (an >= 0) {
                          std::vector<double> da(av.size());
                          if (!trans_a)  // dA[m×k] = G · B'^T
                              gemm(false, !trans_b, m, k, n, 1.0, go.data(), n,
                                   bv.data(), bcols, 0.0, da.data(), k);
                          else  // dA_raw[k×m] = B' · G^T
                              gemm(trans_b, true, k, m, n, 1.0, bv.data(), bcols,
                                   go.data(), n, 0.0, da.data(), m);
                          t.accumulate(an, da.data(), static_cast<std::int64_t>(da.size()));
                      }
                      if (bn >= 0) {
                          std::vector<double> db(bv.size());
                          if (!trans_b)  // dB[k×n] = A'^T · G
                              gemm(!trans_a, false, k, n, m, 1.0, av.data(), acols,
                                   go.data(), n, 0.0, db.data(), n);
                          else  // dB_raw[n×k] = G^T · A'
                              gemm(true, trans_a, n, k, m, 1.0, go.data(), n,
                                   av.data(), acols, 0.0, db.data(), k);
                          t.accumulate(bn, db.data(), static_cast<std::int64_t>(db.size()));
                      }
                  });
    }
    return out;
}

Tensor transpose(Tape& tp, const Tensor& a) {
    require(a.rank() == 2, "transpose: expects a matrix, got " + shape_str(a.shape));
    const int m = a.shape[0], n = a.shape[1];
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (tp.recording() && a.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [an = a.node, m, n](Tape& t, const std::vector<double>& go) {
            std::vector<double> da(static_cast<std::size_t>(m) * n);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i)
                    da[static_cast<std::size_t>(i) * n + j] = go[static_cast<std::size_t>(j) * m + i];
            t.accumulate(an, da.data(), static_cast<std::int64_t>(da.size()));
        });
    }
    return out;
}

// ------------------------------------------------------------ softmax

namespace {

// softmax over contiguous runs of length `len`, stride 1, `count` runs that
// start every `run_stride` elements with inner offset step `elem_stride`.
// Covers both row (stride 1) and column (stride = row length) layouts.
void softmax_lines(const std::vector<double>& x, std::vector<double>& y,
                   int count, int len, std::int64_t run_stride, std::int64_t elem_stride) {
    for (int r = 0; r < count; ++r) {
        const std::int64_t base = r * run_stride;
        double mx = x[static_cast<std::size_t>(base)];
        for (int i = 1; i < len; ++i)
            mx = std::max(mx, x[static_cast<std::size_t>(base + i * elem_stride)]);
        double sum = 0.0;
        for (int i = 0; i < len; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * elem_stride);
            y[idx] = std::exp(x[idx] - mx);
            sum += y[idx];
        }
        for (int i = 0; i < len; ++i) y[static_cast<std::size_t>(base + i * elem_stride)] /= sum;
    }
}

void softmax_lines_vjp(const std::vector<double>& y, const std::vector<double>& go,
                       std::vector<double>& dx, int count, int len,
                       std::int64_t run_stride, std::int64_t elem_stride) {
    for (int r = 0; r < count; ++r) {
        const std::int64_t base = r * run_stride;
        double dot = 0.0;
        for (int i = 0; i < len; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * elem_stride);
            dot += go[idx] * y[idx];
        }
        for (int i = 0; i < len; ++i) {
            const auto idx = static_cast<std::size_t>(base + i * elem_stride);
            dx[idx] = y[idx] * (go[idx] - dot);
        }
    }
}

Tensor softmax_impl(Tape& tp, const Tensor& x, bool rows) {
    require(x.rank() == 2, "softmax: expects a matrix, got " + shape_str(x.shape));
    const int m = x.shape[0], n = x.shape[1];
    Tensor out(x.shape);
    const int count = rows ? m : n;
    const int len = rows ? n : m;
    const std::int64_t run_stride = rows ? n : 1;
    const std::int64_t elem_stride = rows ? 1 : n;
    softmax_lines(x.values, out.values, count, len, run_stride, elem_stride);
    debug_finite(out, "softmax");
    if (tp.recording() && x.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [xn = x.node, y = out.values, count, len, run_stride,
                             elem_stride](Tape& t, const std::vector<double>& go) {
            std::vector<double> dx(y.size());
            softmax_lines_vjp(y, go, dx, count, len, run_stride, elem_stride);
            t.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

}  // namespace

Tensor softmax_rows(Tape& tp, const Tensor& x) { return softmax_impl(tp, x, true); }
Tensor softmax_cols(Tape& tp, const Tensor& x) { return softmax_impl(tp, x, false); }

// ------------------------------------------------------------- conv1d

namespace {

struct ConvGeom {
    int b, c_in, t, c_out, k, t_out, pad_left;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& kernels, Padding pad) {
    require(x.rank() == 3, "conv1d: input must be b×c_in×t, got " + shape_str(x.shape));
    require(kernels.rank() == 3,
            "conv1d: kernels must be c_out×c_in×k, got " + shape_str(kernels.shape));
    require(x.shape[1] == kernels.shape[1],
            "conv1d: channel mismatch, input " + shape_str(x.shape) + " vs kernels " +
                shape_str(kernels.shape));
    ConvGeom g;
    g.b = x.shape[0];
    g.c_in = x.shape[1];
    g.t = x.shape[2];
    g.c_out = kernels.shape[0];
    g.k = kernels.shape[2];
    if (pad == Padding::valid) {
        require(g.k <= g.t, "conv1d: kernel length " + std::to_string(g.k) +
                                " exceeds input length " + std::to_string(g.t));
        g.t_out = g.t - g.k + 1;
        g.pad_left = 0;
    } else {
        g.t_out = g.t;
        g.pad_left = (g.k - 1) / 2;  // extra zero goes on the right
    }
    return g;
}

// col[(ci*k + kk), j] = x_i[ci, j + kk - pad_left], zero outside.
void im2col(const double* xi, const ConvGeom& g, std::vector<double>& col) {
    std::fill(col.begin(), col.end(), 0.0);
    for (int ci = 0; ci < g.c_in; ++ci) {
        const double* row = xi + static_cast<std::size_t>(ci) * g.t;
        for (int kk = 0; kk < g.k; ++kk) {
            double* dst = col.data() + (static_cast<std::size_t>(ci) * g.k + kk) * g.t_out;
            const int shift = kk - g.pad_left;
            const int j0 = std::max(0, -shift);
            const int j1 = std::min(g.t_out, g.t - shift);
            for (int j = j0; j < j1; ++j) dst[j] = row[j + shift];
        }
    }
}

void col2im_add(const std::vector<double>& col, const ConvGeom& g, double* dxi) {
    for (int ci = 0; ci < g.c_in; ++ci) {
        double* row = dxi + static_cast<std::size_t>(ci) * g.t;
        for (int kk = 0; kk < g.k; ++kk) {
            const double* src = col.data() + (static_cast<std::size_t>(ci) * g.k + kk) * g.t_out;
            const int shift = kk - g.pad_left;
            const int j0 = std::max(0, -shift);
            const int j1 = std::min(g.t_out, g.t - shift);
            for (int j = j0; j < j1; ++j) row[j + shift] += src[j];
        }
    }
}

}  // namespace

Tensor conv1d(Tape& tp, const Tensor& x, const Tensor& kernels, Padding pad) {
    const ConvGeom g = conv_geometry(x, kernels, pad);
    Tensor out({g.b, g.c_out, g.t_out});
    const int cols_rows = g.c_in * g.k;
    std::vector<double> col(static_cast<std::size_t>(cols_rows) * g.t_out);
    for (int i = 0; i < g.b; ++i) {
        im2col(x.values.data() + static_cast<std::size_t>(i) * g.c_in * g.t, g, col);
        gemm(false, false, g.c_out, g.t_out, cols_rows, 1.0, kernels.values.data(),
             cols_rows, col.data(), g.t_out, 0.0,
             out.values.data() + static_cast<std::size_t>(i) * g.c_out * g.t_out, g.t_out);
    }
    debug_finite(out, "conv1d");

    if (tp.recording() && (x.tracked() || kernels.tracked())) {
        out.node = tp.new_node(out.size());
        // x values are always needed (kernel grads); kernel values only if
        // the input wants gradients.
        std::vector<double> kv = x.tracked() ? kernels.values : std::vector<double>();
        tp.record(out.node, [xn = x.node, kn = kernels.node, xv = x.values,
                             kv = std::move(kv), g](Tape& t, const std::vector<double>& go) {
            const int cols_rows = g.c_in * g.k;
            std::vector<double> col(static_cast<std::size_t>(cols_rows) * g.t_out);
            std::vector<double> dk;
            if (kn >= 0) dk.assign(static_cast<std::size_t>(g.c_out) * cols_rows, 0.0);
            std::vector<double> dx;
            if (xn >= 0) dx.assign(xv.size(), 0.0);
            std::vector<double> dcol(col.size());
            for (int i = 0; i < g.b; ++i) {
                const double* goi = go.data() + static_cast<std::size_t>(i) * g.c_out * g.t_out;
                if (kn >= 0) {
                    im2col(xv.data() + static_cast<std::size_t>(i) * g.c_in * g.t, g, col);
                    gemm(false, true, g.c_out, cols_rows, g.t_out, 1.0, goi, g.t_out,
                         col.data(), g.t_out, 1.0, dk.data(), cols_rows);
                }
                if (xn >= 0) {
                    gemm(true, false, cols_rows, g.t_out, g.c_out, 1.0, kv.data(),
                         cols_rows, goi, g.t_out, 0.0, dcol.data(), g.t_out);
                    col2im_add(dcol, g, dx.data() + static_cast<std::size_t>(i) * g.c_in * g.t);
                }
            }
            if (kn >= 0) t.accumulate(kn, dk.data(), static_cast<std::int64_t>(dk.size()));
            if (xn >= 0) t.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

// -------------------------------------------------------- pointwise ops

namespace {

template <typename F, typename DF>
Tensor unary_op(Tape& tp, const Tensor& x, const char* name, F f, DF dfdx_from_xy) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.values.size(); ++i) out.values[i] = f(x.values[i]);
    debug_finite(out, name);
    if (tp.recording() && x.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [xn = x.node, xv = x.values, yv = out.values,
                             dfdx_from_xy](Tape& t, const std::vector<double>& go) {
            std::vector<double> dx(xv.size());
            for (std::size_t i = 0; i < xv.size(); ++i)
                dx[i] = go[i] * dfdx_from_xy(xv[i], yv[i]);
            t.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

enum class Broadcast { exact, tail, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* name) {
    if (a.shape == b.shape) return Broadcast::exact;
    if (b.size() == 1) return Broadcast::scalar;
    if (b.rank() < a.rank() &&
        std::equal(b.shape.begin(), b.shape.end(), a.shape.end() - b.rank()))
        return Broadcast::tail;
    throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape) + " are not broadcastable");
}

// Fold a full-size gradient down to the broadcast operand's extent.
std::vector<double> fold_to(const std::vector<double>& g, std::int64_t b_size, Broadcast bc) {
    if (bc == Broadcast::exact) return g;
    std::vector<double> out(static_cast<std::size_t>(b_size), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) out[i % static_cast<std::size_t>(b_size)] += g[i];
    return out;
}

template <typename F, typename DA, typename DB>
Tensor binary_op(Tape& tp, const Tensor& a, const Tensor& b, const char* name,
                 F f, DA dfda, DB dfdb) {
    const Broadcast bc = broadcast_kind(a, b, name);
    Tensor out(a.shape);
    const std::size_t bs = b.values.size();
    for (std::size_t i = 0; i < a.values.size(); ++i)
        out.values[i] = f(a.values[i], b.values[i % bs]);
    debug_finite(out, name);
    if (tp.recording() && (a.tracked() || b.tracked())) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [an = a.node, bn = b.node, av = a.values, bv = b.values,
                             bc, dfda, dfdb](Tape& t, const std::vector<double>& go) {
            const std::size_t bs = bv.size();
            if (an >= 0) {
                std::vector<double> da(av.size());
                for (std::size_t i = 0; i < av.size(); ++i)
                    da[i] = go[i] * dfda(av[i], bv[i % bs]);
                t.accumulate(an, da.data(), static_cast<std::int64_t>(da.size()));
            }
            if (bn >= 0) {
                std::vector<double> full(av.size());
                for (std::size_t i = 0; i < av.size(); ++i)
                    full[i] = go[i] * dfdb(av[i], bv[i % bs]);
                auto db = fold_to(full, static_cast<std::int64_t>(bs), bc);
                t.accumulate(bn, db.data(), static_cast<std::int64_t>(db.size()));
            }
        });
    }
    return out;
}

}  // namespace

Tensor relu(Tape& tp, const Tensor& x) {
    return unary_op(
        tp, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tp, const Tensor& x) {
    return unary_op(
        tp, x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(Tape& tp, const Tensor& x) {
    return unary_op(
        tp, x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor square(Tape& tp, const Tensor& x) {
    return unary_op(
        tp, x, "square", [](double v) { return v * v; },
        [](double v, double) { return 2.0 * v; });
}

Tensor add(Tape& tp, const Tensor& a, const Tensor& b) {
    return binary_op(
        tp, a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(Tape& tp, const Tensor& a, const Tensor& b) {
    return binary_op(
        tp, a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(Tape& tp, const Tensor& a, const Tensor& b) {
    return binary_op(
        tp, a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

// ------------------------------------------------------------- reduce

Tensor reduce(Tape& tp, const Tensor& x, Reduce kind, std::optional<int> axis) {
    if (axis) {
        require(*axis >= 0 && *axis < x.rank(),
                "reduce: axis " + std::to_string(*axis) + " out of range for " +
                    shape_str(x.shape));
    }
    Shape out_shape;
    std::int64_t outer = 1, mid, inner = 1;
    if (!axis) {
        out_shape = {1};
        mid = x.size();
    } else {
        for (int d = 0; d < x.rank(); ++d)
            if (d != *axis) out_shape.push_back(x.shape[d]);
        if (out_shape.empty()) out_shape = {1};
        for (int d = 0; d < *axis; ++d) outer *= x.shape[d];
        mid = x.shape[*axis];
        for (int d = *axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
    }
    const double scale = kind == Reduce::mean ? 1.0 / static_cast<double>(mid) : 1.0;

    Tensor out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            double s = 0.0;
            for (std::int64_t m = 0; m < mid; ++m)
                s += x.values[static_cast<std::size_t>((o * mid + m) * inner + i)];
            out.values[static_cast<std::size_t>(o * inner + i)] = s * scale;
        }
    debug_finite(out, "reduce");

    if (tp.recording() && x.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [xn = x.node, outer, mid, inner, scale,
                             n = x.size()](Tape& t, const std::vector<double>& go) {
            std::vector<double> dx(static_cast<std::size_t>(n));
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t i = 0; i < inner; ++i) {
                    const double g = go[static_cast<std::size_t>(o * inner + i)] * scale;
                    for (std::int64_t m = 0; m < mid; ++m)
                        dx[static_cast<std::size_t>((o * mid + m) * inner + i)] = g;
                }
            t.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

Tensor reduce_sum(Tape& tp, const Tensor& x, std::optional<int> axis) {
    return reduce(tp, x, Reduce::sum, axis);
}

Tensor reduce_mean(Tape& tp, const Tensor& x, std::optional<int> axis) {
    return reduce(tp, x, Reduce::mean, axis);
}

// ----------------------------------------------------------- plumbing

Tensor reshape(Tape& tp, const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape) + " to " +
                                          shape_str(shape) + " changes element count");
    require(!shape.empty() && shape.size() <= 3, "reshape: rank must be 1..3");
    Tensor out(std::move(shape), x.values);
    if (tp.recording() && x.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [xn = x.node](Tape& t, const std::vector<double>& go) {
            t.accumulate(xn, go.data(), static_cast<std::int64_t>(go.size()));
        });
    }
    return out;
}

Tensor select(Tape& tp, const Tensor& x, int index) {
    require(x.rank() >= 2, "select: needs rank >= 2, got " + shape_str(x.shape));
    require(index >= 0 && index < x.shape[0],
            "select: index " + std::to_string(index) + " out of range for " +
                shape_str(x.shape));
    Shape out_shape(x.shape.begin() + 1, x.shape.end());
    const std::int64_t chunk = numel(out_shape);
    Tensor out(out_shape);
    std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(index * chunk), chunk,
                out.values.begin());
    if (tp.recording() && x.tracked()) {
        out.node = tp.new_node(out.size());
        tp.record(out.node, [xn = x.node, index, chunk,
                             n = x.size()](Tape& t, const std::vector<double>& go) {
            std::vector<double> dx(static_cast<std::size_t>(n), 0.0);
            std::copy(go.begin(), go.end(),
                      dx.begin() + static_cast<std::ptrdiff_t>(index * chunk));
            t.accumulate(xn, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
    }
    return out;
}

Tensor stack0(Tape& tp, const std::vector<Tensor>& parts) {
    require(!parts.empty(), "stack0: no tensors given");
    require(parts[0].rank() <= 2, "stack0: parts must have rank <= 2");
    for (const auto& p : parts)
        require(p.shape == parts[0].shape, "stack0: mismatched part shapes " +
                                               shape_str(parts[0].shape) + " vs " +
                                               shape_str(p.shape));
    Shape out_shape;
    out_shape.push_back(static_cast<int>(parts.size()));
    for (int d : parts[0].shape) out_shape.push_back(d);
    const std::int64_t chunk = parts[0].size();
    Tensor out(out_shape);
    bool any_tracked = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::copy(parts[i].values.begin(), parts[i].values.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(i * chunk));
        any_tracked = any_tracked || parts[i].tracked();
    }
    if (tp.recording() && any_tracked) {
        out.node = tp.new_node(out.size());
        std::vector<int> nodes(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) nodes[i] = parts[i].node;
        tp.record(out.node, [nodes, chunk](Tape& t, const std::vector<double>& go) {
            for (std::size_t i = 0; i < nodes.size(); ++i)
                if (nodes[i] >= 0)
                    t.accumulate(nodes[i], go.data() + static_cast<std::ptrdiff_t>(i * chunk),
                                 chunk);
        });
    }
    return out;
}

Tensor concat(Tape& tp, const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "concat: no tensors given");
    const int rank = parts[0].rank();
    require(axis >= 0 && axis < rank,
            "concat: axis " + std::to_string(axis) + " out of range for rank " +
                std::to_string(rank));
    int total = 0;
    for (const auto& p : parts) {
        require(p.rank() == rank, "concat: rank mismatch");
        for (int d = 0; d < rank; ++d)
            require(d == axis || p.shape[d] == parts[0].shape[d],
                    "concat: shapes " + shape_str(parts[0].shape) + " and " +
                        shape_str(p.shape) + " differ off-axis");
        total += p.shape[axis];
    }
    Shape out_shape = parts[0].shape;
    out_shape[axis] = total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    Tensor out(out_shape);
    bool any_tracked = false;
    std::int64_t offset = 0;  // running offset along the axis
    for (const auto& p : parts) {
        const std::int64_t ext = p.shape[axis];
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p.values.begin() + static_cast<std::ptrdiff_t>(o * ext * inner),
                        ext * inner,
                        out.values.begin() +
                            static_cast<std::ptrdiff_t>((o * total + offset) * inner));
        offset += ext;
        any_tracked = any_tracked || p.tracked();
    }
    if (tp.recording() && any_tracked) {
        out.node = tp.new_node(out.size());
        struct PartInfo {
            int node;
            std::int64_t ext, size;
        };
        std::vector<PartInfo> info;
        info.reserve(parts.size());
        for (const auto& p : parts) info.push_back({p.node, p.shape[axis], p.size()});
        tp.record(out.node, [info, outer, inner, total](Tape& t,
                                                        const std::vector<double>& go) {
            std::int64_t offset = 0;
            for (const auto& pi : info) {
                if (pi.node >= 0) {
                    std::vector<double> dp(static_cast<std::size_t>(pi.size));
                    for (std::int64_t o = 0; o < outer; ++o)
                        std::copy_n(go.begin() + static_cast<std::ptrdiff_t>(
                                                     (o * total + offset) * inner),
                                    pi.ext * inner,
                                    dp.begin() + static_cast<std::ptrdiff_t>(o * pi.ext * inner));
                    t.accumulate(pi.node, dp.data(), pi.size);
                }
                offset += pi.ext;
            }
        });
    }
    return out;
}

// ------------------------------------------------------- cross entropy

Tensor cross_entropy(Tape& tp, const Tensor& logits, const std::vector<int>& labels) {
    require(logits.rank() == 2, "cross_entropy: logits must be b×C, got " +
                                    shape_str(logits.shape));
    const int b = logits.shape[0], c = logits.shape[1];
    if (static_cast<int>(labels.size()) != b)
        throw DataError("cross_entropy: " + std::to_string(labels.size()) +
                        " labels for batch of " + std::to_string(b));
    for (int i = 0; i < b; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(c) + ")");

    std::vector<double> p(logits.values.size());
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = logits.values.data() + static_cast<std::size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < c; ++j)
            p[static_cast<std::size_t>(i) * c + j] = std::exp(row[j] - lse);
        loss += lse - row[labels[i]];
    }
    Tensor out({1});
    out.values[0] = loss / b;
    debug_finite(out, "cross_entropy");

    if (tp.recording() && logits.tracked()) {
        out.node = tp.new_node(1);
        tp.record(out.node, [ln = logits.node, p = std::move(p), labels, b,
                             c](Tape& t, const std::vector<double>& go) {
            std::vector<double> dl(p.size());
            const double g = go[0] / b;
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < c; ++j) {
                    const auto idx = static_cast<std::size_t>(i) * c + j;
                    dl[idx] = g * (p[idx] - (j == labels[i] ? 1.0 : 0.0));
                }
            t.accumulate(ln, dl.data(), static_cast<std::int64_t>(dl.size()));
        });
    }
    return out;
}

}  // namespace rtfn
