#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mixgen {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.empty()) {
            grad.assign(data.size(), T(0));
        }
        return grad;
    }
};

// Dense row-major tensor with reverse-mode differentiation. Copies are
// shallow: two Tensor handles may refer to the same node.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
    static Tensor scalar(T value) { return from({}, {value}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(int axis) const;
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }

    std::span<const T> data() const { return node_->data; }
    // Writable view; only meaningful for leaves (parameters, inputs).
    std::span<T> mutable_data() { return node_->data; }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return !node_->backward; }

    T item() const;
    T at(std::initializer_list<std::int64_t> index) const;

    // Accumulates d(this)/d(leaf) into every reachable leaf that requires
    // grad. Throws NotScalar or DetachedGraph.
    void backward() const;

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Generic strided matrix product C = alpha * op(A) * op(B) + beta * C.
template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha, const T* a,
          std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c, std::int64_t ldc);

// --- kernels ----------------------------------------------------------------
// Binary elementwise ops accept either equal shapes or a right operand whose
// shape is a suffix of the left operand's (broadcast over leading axes).

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <class T> Tensor<T> square(const Tensor<T>& a);
template <class T> Tensor<T> exp(const Tensor<T>& a);
template <class T> Tensor<T> log(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
template <class T> Tensor<T> silu(const Tensor<T>& a);
template <class T> Tensor<T> gelu(const Tensor<T>& a);

// [m,k] x [k,n] -> [m,n]; leading axes of `a` are folded into m.
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// Batched: [b,m,k] x [b,k,n] (or [b,n,k] when trans_b) -> [b,m,n].
template <class T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false);
// x W + bias with W shaped [in,out]; bias may be undefined.
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <class T> Tensor<T> softmax(const Tensor<T>& a, int axis = -1);
// Normalizes each slice along `axis` to zero mean, unit variance (no affine).
template <class T> Tensor<T> layer_norm(const Tensor<T>& a, int axis, T eps);
// x / rms(x) along the last axis, times `weight`.
template <class T> Tensor<T> rms_norm(const Tensor<T>& a, const Tensor<T>& weight, T eps);

template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a, int axis);

template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <class T> std::vector<Tensor<T>> split(const Tensor<T>& a, int axis, const std::vector<std::int64_t>& sizes);

// Row gather from a [V,d] table. Throws IdOutOfRange.
template <class T> Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);
// Rows of a 2-D tensor by index.
template <class T> Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::int64_t> rows);
// Row i taken from `when_true` where mask[i] is set, else from `when_false`.
template <class T>
Tensor<T> select_rows(std::span<const std::uint8_t> mask, const Tensor<T>& when_true, const Tensor<T>& when_false);
// Tiles a [n,...] tensor `times` times along axis 0 -> [times*n,...].
template <class T> Tensor<T> repeat_rows(const Tensor<T>& a, std::int64_t times);
// [..., h, d] -> [..., h*times, d], each head repeated `times` consecutively.
template <class T> Tensor<T> repeat_heads(const Tensor<T>& a, std::int64_t times);

// Sets entries above the diagonal of the trailing [L,L] block to `value`.
template <class T> Tensor<T> causal_masked_fill(const Tensor<T>& scores, T value);
// Rotary position embedding on [B,L,H,D]; position of row l is l.
template <class T> Tensor<T> rope(const Tensor<T>& x, double theta);

// Mean negative log-likelihood of `targets` under softmax(logits), logits [n,V].
template <class T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets);

// Value copy excluded from gradient flow.
template <class T> Tensor<T> detach(const Tensor<T>& a);

}  // namespace mixgen
