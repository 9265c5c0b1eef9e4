#ifndef RTFN_TENSOR_HPP
#define RTFN_TENSOR_HPP

#include <functional>
#include <optional>
#include <vector>

#include "rtfn/common.hpp"

namespace rtfn {

// Dense row-major tensor, rank 1..3, 64-bit values. `node` is the handle
// into the tape that recorded the op producing this tensor; -1 means the
// tensor is a constant the tape does not differentiate through.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    int node = -1;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), values(numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> v);

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool tracked() const { return node >= 0; }

    double& at(int i) { return values[static_cast<std::size_t>(i)]; }
    double at(int i) const { return values[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return values[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
};

// Throws ContractError if the tensor holds a NaN or Inf.
void check_finite(const Tensor& t, const char* where);

// Recording tape for reverse-mode differentiation. Ops append records in
// execution order, so parents always precede consumers; backward() walks the
// records once, in reverse. One tape per training step; a tape constructed
// with recording=false turns track/record into no-ops, which is how frozen
// inference runs without autodiff overhead.
class Tape {
public:
    using Vjp = std::function<void(Tape&, const std::vector<double>& out_grad)>;

    explicit Tape(bool recording = true);

    bool recording() const { return recording_; }
    std::uint64_t stamp() const { return stamp_; }
    std::size_t num_nodes() const { return sizes_.size(); }
    std::size_t num_ops() const { return ops_.size(); }

    // Register a leaf (parameter or input); returns its node id.
    int track(Tensor& t);

    // Allocate a node id for an op output of the given element count.
    int new_node(std::int64_t size);

    // Record a primitive. `vjp` receives the output cotangent and must call
    // accumulate() on every tracked parent.
    void record(int out_node, Vjp vjp);

    // Seed the loss cotangent with 1 and propagate. Loss must be a tracked
    // scalar. Each record is visited exactly once; records whose output
    // never received a cotangent are skipped (their parents keep zero grad).
    void backward(const Tensor& loss);

    // Gradient of a node after backward(); zeros if nothing reached it.
    std::vector<double> grad(int node) const;

    void accumulate(int node, const double* g, std::int64_t n);

private:
    struct Record {
        int out;
        Vjp vjp;
    };
    bool recording_;
    std::uint64_t stamp_;
    std::vector<Record> ops_;
    std::vector<std::int64_t> sizes_;
    std::vector<std::vector<double>> grads_;  // lazily allocated per node
};

enum class Padding { same, valid };

// ---- primitive operations ---------------------------------------------

// Standard matrix product a[m×k] · b[k×n]. trans_a / trans_b multiply by the
// transpose without materializing it.
Tensor matmul(Tape& tp, const Tensor& a, const Tensor& b,
              bool trans_a = false, bool trans_b = false);

Tensor transpose(Tape& tp, const Tensor& a);

// Row-stable softmax over the last axis of a matrix / each row.
Tensor softmax_rows(Tape& tp, const Tensor& x);
// Column-wise variant used by the self-attention bridge.
Tensor softmax_cols(Tape& tp, const Tensor& x);

// Cross-correlation of x[b×c_in×t] with kernels[c_out×c_in×k]. "same"
// pads zeros symmetrically with the extra element on the right.
Tensor conv1d(Tape& tp, const Tensor& x, const Tensor& kernels, Padding pad);

Tensor relu(Tape& tp, const Tensor& x);
Tensor sigmoid(Tape& tp, const Tensor& x);
Tensor tanh_op(Tape& tp, const Tensor& x);
Tensor square(Tape& tp, const Tensor& x);

// Binary pointwise ops. Shapes must match, or b must match a with the
// leading (batch) axes dropped, or b must be a scalar; b is then broadcast.
Tensor add(Tape& tp, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tp, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tp, const Tensor& a, const Tensor& b);

enum class Reduce { sum, mean };

// Reduce over all elements (axis omitted, scalar result) or one axis
// (that axis is removed from the shape).
Tensor reduce(Tape& tp, const Tensor& x, Reduce kind,
              std::optional<int> axis = std::nullopt);
Tensor reduce_sum(Tape& tp, const Tensor& x, std::optional<int> axis = std::nullopt);
Tensor reduce_mean(Tape& tp, const Tensor& x, std::optional<int> axis = std::nullopt);

// Plumbing: same data, new extents.
Tensor reshape(Tape& tp, const Tensor& x, Shape shape);
// Index the leading axis: x[b×...] -> x[i] with rank reduced by one.
Tensor select(Tape& tp, const Tensor& x, int index);
// Inverse of select over a full set: stack equal-shaped tensors along a new
// leading axis.
Tensor stack0(Tape& tp, const std::vector<Tensor>& parts);
// Concatenate along an existing axis; all other extents must agree.
Tensor concat(Tape& tp, const std::vector<Tensor>& parts, int axis);

// Mean cross-entropy between row-softmaxed logits and integer labels,
// p = softmax_rows(logits), loss = -(1/b) sum_i log p[i, label_i].
Tensor cross_entropy(Tape& tp, const Tensor& logits, const std::vector<int>& labels);

// raw GEMM used by the primitives; exposed for the fused LSTM kernel.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

}  // namespace rtfn

#endif
