#include "mixgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "mixgen/error.hpp"

namespace mixgen {

std::int64_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw Error(ErrorKind::ShapeMismatch, op + ": " + shape_str(a) + " vs " + shape_str(b));
}

int norm_axis(int axis, int rank, const char* op) {
    int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": axis " + std::to_string(axis) + " out of range");
    }
    return a;
}

// outer * len * inner decomposition around one axis.
struct AxisSplit {
    std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
    AxisSplit r;
    for (int i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) r.inner *= s[i];
    return r;
}

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<NodePtr<T>> parents,
                      std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            needs = needs || p->requires_grad;
        }
    }
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <class T>
bool wants(const Node<T>& self, std::size_t i) {
    return self.parents[i]->requires_grad;
}

// Right operand broadcast over the leading axes of the left one.
std::int64_t broadcast_inner(const Shape& a, const Shape& b, const char* op) {
    if (a == b) {
        return numel(a);
    }
    if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
        shape_error(op, a, b);
    }
    return numel(b);
}

// Elementwise op whose derivative is expressed through (x, y).
template <class T, class F, class D>
Tensor<T> pointwise(const Tensor<T>& a, F f, D dfdx) {
    auto in = a.data();
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(in[i]);
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [dfdx](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& gx = px.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += self.grad[i] * dfdx(px.data[i], self.data[i]);
        }
    });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ----------------------------------------------------------------------------
// Tensor

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto n = numel(shape);
    return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw Error(ErrorKind::ShapeMismatch,
                    "data of length " + std::to_string(data.size()) + " for shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <class T>
std::int64_t Tensor<T>::dim(int axis) const {
    return node_->shape[static_cast<std::size_t>(norm_axis(axis, rank(), "dim"))];
}

template <class T>
T Tensor<T>::item() const {
    if (node_->data.size() != 1) {
        throw Error(ErrorKind::NotScalar, "item() on tensor of shape " + shape_str(node_->shape));
    }
    return node_->data[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
    if (index.size() != node_->shape.size()) {
        throw Error(ErrorKind::ShapeMismatch, "index rank differs from tensor rank");
    }
    std::int64_t flat = 0;
    std::size_t k = 0;
    for (auto i : index) {
        flat = flat * node_->shape[k++] + i;
    }
    return node_->data[static_cast<std::size_t>(flat)];
}

template <class T>
void Tensor<T>::backward() const {
    if (node_->data.size() != 1) {
        throw Error(ErrorKind::NotScalar, "backward() needs a scalar, got " + shape_str(node_->shape));
    }
    if (!node_->requires_grad) {
        throw Error(ErrorKind::DetachedGraph, "loss does not depend on any parameter");
    }
    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<T>* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node<T>* n : order) {
        if (n->backward) {
            n->grad.assign(n->data.size(), T(0));
        }
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward) {
            n->backward(*n);
        }
    }
}

// ----------------------------------------------------------------------------
// GEMM

template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha, const T* a,
          std::int64_t lda, const T* b, std::int64_t ldb, T beta, T* c, std::int64_t ldc) {
    for (std::int64_t i = 0; i < m; ++i) {
        T* __restrict ci = c + i * ldc;
        if (beta == T(0)) {
            std::fill(ci, ci + n, T(0));
        } else if (beta != T(1)) {
            for (std::int64_t j = 0; j < n; ++j) ci[j] *= beta;
        }
    }
    std::vector<T> bt;
    if (trans_b) {
        bt.resize(static_cast<std::size_t>(k * n));
        for (std::int64_t j = 0; j < n; ++j) {
            for (std::int64_t p = 0; p < k; ++p) {
                bt[static_cast<std::size_t>(p * n + j)] = b[j * ldb + p];
            }
        }
        b = bt.data();
        ldb = n;
    }
    if (!trans_a) {
        for (std::int64_t i = 0; i < m; ++i) {
            T* __restrict ci = c + i * ldc;
            const T* ai = a + i * lda;
            for (std::int64_t p = 0; p < k; ++p) {
                const T av = alpha * ai[p];
                const T* __restrict bp = b + p * ldb;
                for (std::int64_t j = 0; j < n; ++j) {
                    ci[j] += av * bp[j];
                }
            }
        }
    } else {
        for (std::int64_t p = 0; p < k; ++p) {
            const T* ap = a + p * lda;
            const T* __restrict bp = b + p * ldb;
            for (std::int64_t i = 0; i < m; ++i) {
                const T av = alpha * ap[i];
                T* __restrict ci = c + i * ldc;
                for (std::int64_t j = 0; j < n; ++j) {
                    ci[j] += av * bp[j];
                }
            }
        }
    }
}

// ----------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t inner = broadcast_inner(a.shape(), b.shape(), "add");
    auto x = a.data();
    auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] + y[i % static_cast<std::size_t>(inner)];
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [inner](Node<T>& self) {
        if (wants(self, 0)) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] += self.grad[i];
        }
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t inner = broadcast_inner(a.shape(), b.shape(), "sub");
    auto x = a.data();
    auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] - y[i % static_cast<std::size_t>(inner)];
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [inner](Node<T>& self) {
        if (wants(self, 0)) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            auto& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] -= self.grad[i];
        }
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t inner = broadcast_inner(a.shape(), b.shape(), "mul");
    auto x = a.data();
    auto y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * y[i % static_cast<std::size_t>(inner)];
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [inner](Node<T>& self) {
        const auto& xa = self.parents[0]->data;
        const auto& xb = self.parents[1]->data;
        if (wants(self, 0)) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * xb[i % inner];
        }
        if (wants(self, 1)) {
            auto& g = self.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] += self.grad[i] * xa[i];
        }
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return pointwise(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    return pointwise(a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
    return pointwise(
        a, [](T x) { return x / (T(1) + std::exp(-x)); },
        [](T x, T) {
            T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return pointwise(
        a, [](T x) { return T(0.5 * x * (1.0 + std::erf(x * kInvSqrt2))); },
        [](T x, T) {
            double xd = x;
            return T(0.5 * (1.0 + std::erf(xd * kInvSqrt2)) + xd * kInvSqrt2Pi * std::exp(-0.5 * xd * xd));
        });
}

// ----------------------------------------------------------------------------
// Products

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
        shape_error("matmul", a.shape(), b.shape());
    }
    const std::int64_t k = b.dim(0);
    const std::int64_t n = b.dim(1);
    const std::int64_t m = a.size() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<T> out(static_cast<std::size_t>(m * n));
    gemm<T>(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.data(), n);
    return make_result<T>(std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
                          [m, n, k](Node<T>& self) {
                              const T* g = self.grad.data();
                              if (wants(self, 0)) {
                                  auto& ga = self.parents[0]->ensure_grad();
                                  gemm<T>(false, true, m, k, n, T(1), g, n, self.parents[1]->data.data(), n, T(1),
                                          ga.data(), k);
                              }
                              if (wants(self, 1)) {
                                  auto& gb = self.parents[1]->ensure_grad();
                                  gemm<T>(true, false, k, n, m, T(1), self.parents[0]->data.data(), k, g, n, T(1),
                                          gb.data(), n);
                              }
                          });
}

template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
        shape_error("bmm", a.shape(), b.shape());
    }
    const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::int64_t n = trans_b ? b.dim(1) : b.dim(2);
    if ((trans_b ? b.dim(2) : b.dim(1)) != k) {
        shape_error("bmm", a.shape(), b.shape());
    }
    std::vector<T> out(static_cast<std::size_t>(batch * m * n));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::int64_t i = 0; i < batch; ++i) {
        gemm<T>(false, trans_b, m, n, k, T(1), pa + i * m * k, k, pb + i * k * n, trans_b ? k : n, T(0),
                out.data() + i * m * n, n);
    }
    return make_result<T>(
        {batch, m, n}, std::move(out), {a.node_ptr(), b.node_ptr()}, [batch, m, n, k, trans_b](Node<T>& self) {
            const T* xa = self.parents[0]->data.data();
            const T* xb = self.parents[1]->data.data();
            const T* g = self.grad.data();
            if (wants(self, 0)) {
                T* ga = self.parents[0]->ensure_grad().data();
                for (std::int64_t i = 0; i < batch; ++i) {
                    // dA = G op(B)^T
                    gemm<T>(false, !trans_b, m, k, n, T(1), g + i * m * n, n, xb + i * k * n, trans_b ? k : n, T(1),
                            ga + i * m * k, k);
                }
            }
            if (wants(self, 1)) {
                T* gb = self.parents[1]->ensure_grad().data();
                for (std::int64_t i = 0; i < batch; ++i) {
                    if (trans_b) {
                        // B is [n,k]: dB = G^T A
                        gemm<T>(true, false, n, k, m, T(1), g + i * m * n, n, xa + i * m * k, k, T(1),
                                gb + i * k * n, k);
                    } else {
                        gemm<T>(true, false, k, n, m, T(1), xa + i * m * k, k, g + i * m * n, n, T(1),
                                gb + i * k * n, n);
                    }
                }
            }
        });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() < 1 || weight.rank() != 2 || x.shape().back() != weight.dim(0)) {
        shape_error("linear", x.shape(), weight.shape());
    }
    const std::int64_t k = weight.dim(0);
    const std::int64_t n = weight.dim(1);
    const std::int64_t m = x.size() / k;
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) {
        shape_error("linear bias", weight.shape(), bias.shape());
    }
    Shape out_shape = x.shape();
    out_shape.back() = n;
    std::vector<T> out(static_cast<std::size_t>(m * n));
    if (bias.defined()) {
        auto bv = bias.data();
        for (std::int64_t i = 0; i < m; ++i) {
            std::copy(bv.begin(), bv.end(), out.begin() + i * n);
        }
    }
    gemm<T>(false, false, m, n, k, T(1), x.data().data(), k, weight.data().data(), n, bias.defined() ? T(1) : T(0),
            out.data(), n);
    std::vector<NodePtr<T>> parents{x.node_ptr(), weight.node_ptr()};
    if (bias.defined()) {
        parents.push_back(bias.node_ptr());
    }
    return make_result<T>(std::move(out_shape), std::move(out), std::move(parents), [m, n, k](Node<T>& self) {
        const T* g = self.grad.data();
        if (wants(self, 0)) {
            auto& gx = self.parents[0]->ensure_grad();
            gemm<T>(false, true, m, k, n, T(1), g, n, self.parents[1]->data.data(), n, T(1), gx.data(), k);
        }
        if (wants(self, 1)) {
            auto& gw = self.parents[1]->ensure_grad();
            gemm<T>(true, false, k, n, m, T(1), self.parents[0]->data.data(), k, g, n, T(1), gw.data(), n);
        }
        if (self.parents.size() > 2 && wants(self, 2)) {
            auto& gb = self.parents[2]->ensure_grad();
            for (std::int64_t i = 0; i < m; ++i) {
                for (std::int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
            }
        }
    });
}

// ----------------------------------------------------------------------------
// Normalizations

template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    const int ax = norm_axis(axis, a.rank(), "softmax");
    const AxisSplit s = split_at(a.shape(), ax);
    auto x = a.data();
    std::vector<T> out(x.size());
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.len * s.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::int64_t l = 0; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
            double total = 0.0;
            for (std::int64_t l = 0; l < s.len; ++l) {
                T e = std::exp(x[base + l * s.inner] - mx);
                out[base + l * s.inner] = e;
                total += e;
            }
            for (std::int64_t l = 0; l < s.len; ++l) out[base + l * s.inner] = T(out[base + l * s.inner] / total);
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [s](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t in = 0; in < s.inner; ++in) {
                const std::int64_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (std::int64_t l = 0; l < s.len; ++l) dot += double(g[base + l * s.inner]) * y[base + l * s.inner];
                for (std::int64_t l = 0; l < s.len; ++l) {
                    const auto i = base + l * s.inner;
                    gx[i] += T(y[i] * (g[i] - dot));
                }
            }
        }
    });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& a, int axis, T eps) {
    const int ax = norm_axis(axis, a.rank(), "layer_norm");
    const AxisSplit s = split_at(a.shape(), ax);
    auto x = a.data();
    std::vector<T> out(x.size());
    std::vector<T> inv_std(static_cast<std::size_t>(s.outer * s.inner));
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            const std::int64_t base = o * s.len * s.inner + in;
            double mu = 0.0;
            for (std::int64_t l = 0; l < s.len; ++l) mu += x[base + l * s.inner];
            mu /= double(s.len);
            double var = 0.0;
            for (std::int64_t l = 0; l < s.len; ++l) {
                double d = x[base + l * s.inner] - mu;
                var += d * d;
            }
            var /= double(s.len);
            const double r = 1.0 / std::sqrt(var + double(eps));
            inv_std[o * s.inner + in] = T(r);
            for (std::int64_t l = 0; l < s.len; ++l) out[base + l * s.inner] = T((x[base + l * s.inner] - mu) * r);
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr()}, [s, inv_std](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t in = 0; in < s.inner; ++in) {
                const std::int64_t base = o * s.len * s.inner + in;
                double mg = 0.0, mgy = 0.0;
                for (std::int64_t l = 0; l < s.len; ++l) {
                    const auto i = base + l * s.inner;
                    mg += g[i];
                    mgy += double(g[i]) * y[i];
                }
                mg /= double(s.len);
                mgy /= double(s.len);
                const double r = inv_std[o * s.inner + in];
                for (std::int64_t l = 0; l < s.len; ++l) {
                    const auto i = base + l * s.inner;
                    gx[i] += T(r * (g[i] - mg - y[i] * mgy));
                }
            }
        }
    });
}

template <class T>
Tensor<T> rms_norm(const Tensor<T>& a, const Tensor<T>& weight, T eps) {
    const std::int64_t d = a.shape().back();
    if (weight.rank() != 1 || weight.dim(0) != d) {
        shape_error("rms_norm", a.shape(), weight.shape());
    }
    const std::int64_t rows = a.size() / d;
    auto x = a.data();
    auto w = weight.data();
    std::vector<T> out(x.size());
    std::vector<T> inv_rms(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ss += double(x[r * d + j]) * x[r * d + j];
        const double inv = 1.0 / std::sqrt(ss / double(d) + double(eps));
        inv_rms[r] = T(inv);
        for (std::int64_t j = 0; j < d; ++j) out[r * d + j] = T(x[r * d + j] * inv * w[j]);
    }
    return make_result<T>(a.shape(), std::move(out), {a.node_ptr(), weight.node_ptr()},
                          [rows, d, inv_rms](Node<T>& self) {
                              const auto& x = self.parents[0]->data;
                              const auto& w = self.parents[1]->data;
                              const auto& g = self.grad;
                              for (std::int64_t r = 0; r < rows; ++r) {
                                  const double inv = inv_rms[r];
                                  if (wants(self, 0)) {
                                      auto& gx = self.parents[0]->ensure_grad();
                                      double dot = 0.0;
                                      for (std::int64_t j = 0; j < d; ++j) {
                                          dot += double(g[r * d + j]) * w[j] * x[r * d + j] * inv;
                                      }
                                      dot /= double(d);
                                      for (std::int64_t j = 0; j < d; ++j) {
                                          const double xh = x[r * d + j] * inv;
                                          gx[r * d + j] += T(inv * (g[r * d + j] * w[j] - xh * dot));
                                      }
                                  }
                                  if (wants(self, 1)) {
                                      auto& gw = self.parents[1]->ensure_grad();
                                      for (std::int64_t j = 0; j < d; ++j) {
                                          gw[j] += T(g[r * d + j] * x[r * d + j] * inv);
                                      }
                                  }
                              }
                          });
}

// ----------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    double total = 0.0;
    for (T v : a.data()) total += v;
    return make_result<T>({}, {T(total)}, {a.node_ptr()}, [](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        const T g = self.grad[0];
        for (auto& v : gx) v += g;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    const auto n = a.size();
    if (n == 0) {
        throw Error(ErrorKind::ShapeMismatch, "mean of empty tensor");
    }
    double total = 0.0;
    for (T v : a.data()) total += v;
    return make_result<T>({}, {T(total / double(n))}, {a.node_ptr()}, [n](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        const T g = T(self.grad[0] / double(n));
        for (auto& v : gx) v += g;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
    const int ax = norm_axis(axis, a.rank(), "mean");
    const AxisSplit s = split_at(a.shape(), ax);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + ax);
    auto x = a.data();
    std::vector<T> out(static_cast<std::size_t>(s.outer * s.inner));
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t in = 0; in < s.inner; ++in) {
            double total = 0.0;
            for (std::int64_t l = 0; l < s.len; ++l) total += x[(o * s.len + l) * s.inner + in];
            out[o * s.inner + in] = T(total / double(s.len));
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), {a.node_ptr()}, [s](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        for (std::int64_t o = 0; o < s.outer; ++o) {
            for (std::int64_t in = 0; in < s.inner; ++in) {
                const T g = T(self.grad[o * s.inner + in] / double(s.len));
                for (std::int64_t l = 0; l < s.len; ++l) gx[(o * s.len + l) * s.inner + in] += g;
            }
        }
    });
}

// ----------------------------------------------------------------------------
// Layout

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.size()) {
        shape_error("reshape", a.shape(), shape);
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    return make_result<T>(std::move(shape), std::move(out), {a.node_ptr()}, [](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

namespace {

// For each output flat index, the input flat index under `order`.
std::vector<std::int64_t> permutation_map(const Shape& in_shape, const std::vector<int>& order) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<std::int64_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];
    const std::int64_t n = numel(in_shape);
    std::vector<std::int64_t> map(static_cast<std::size_t>(n));
    std::vector<std::int64_t> idx(r, 0);
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t src = 0;
        for (int i = 0; i < r; ++i) src += idx[i] * in_strides[order[i]];
        map[flat] = src;
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    return map;
}

}  // namespace

template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order) {
    const int r = a.rank();
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (static_cast<int>(order.size()) != r || sorted != [&] {
            std::vector<int> v(r);
            std::iota(v.begin(), v.end(), 0);
            return v;
        }()) {
        throw Error(ErrorKind::ShapeMismatch, "permute: order is not a permutation of " + shape_str(a.shape()));
    }
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = a.dim(order[i]);
    auto map = std::make_shared<std::vector<std::int64_t>>(permutation_map(a.shape(), order));
    auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[(*map)[i]];
    return make_result<T>(std::move(out_shape), std::move(out), {a.node_ptr()}, [map](Node<T>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*map)[i]] += self.grad[i];
    });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) {
        throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
    }
    const int ax = norm_axis(axis, parts[0].rank(), "concat");
    Shape out_shape = parts[0].shape();
    out_shape[ax] = 0;
    std::vector<std::int64_t> lens;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) shape_error("concat", parts[0].shape(), s);
        for (int i = 0; i < static_cast<int>(s.size()); ++i) {
            if (i != ax && s[i] != parts[0].shape()[i]) shape_error("concat", parts[0].shape(), s);
        }
        lens.push_back(s[ax]);
        out_shape[ax] += s[ax];
    }
    const AxisSplit s = split_at(out_shape, ax);
    std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
    std::vector<NodePtr<T>> parents;
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto x = parts[p].data();
        const std::int64_t chunk = lens[p] * s.inner;
        for (std::int64_t o = 0; o < s.outer; ++o) {
            std::copy(x.begin() + o * chunk, x.begin() + (o + 1) * chunk, out.begin() + o * s.len * s.inner + offset);
        }
        offset += chunk;
        parents.push_back(parts[p].node_ptr());
    }
    return make_result<T>(std::move(out_shape), std::move(out), std::move(parents), [s, lens](Node<T>& self) {
        std::int64_t offset = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
            const std::int64_t chunk = lens[p] * s.inner;
            if (wants(self, p)) {
                auto& g = self.parents[p]->ensure_grad();
                for (std::int64_t o = 0; o < s.outer; ++o) {
                    for (std::int64_t i = 0; i < chunk; ++i) {
                        g[o * chunk + i] += self.grad[o * s.len * s.inner + offset + i];
                    }
                }
            }
            offset += chunk;
        }
    });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& a, int axis, const std::vector<std::int64_t>& sizes) {
    const int ax = norm_axis(axis, a.rank(), "split");
    if (std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0}) != a.dim(ax)) {
        throw Error(ErrorKind::ShapeMismatch, "split sizes do not cover axis of " + shape_str(a.shape()));
    }
    const AxisSplit s = split_at(a.shape(), ax);
    auto x = a.data();
    std::vector<Tensor<T>> out;
    std::int64_t offset = 0;
    for (std::int64_t len : sizes) {
        Shape shape = a.shape();
        shape[ax] = len;
        const std::int64_t chunk = len * s.inner;
        std::vector<T> data(static_cast<std::size_t>(s.outer * chunk));
        for (std::int64_t o = 0; o < s.outer; ++o) {
            std::copy(x.begin() + o * s.len * s.inner + offset, x.begin() + o * s.len * s.inner + offset + chunk,
                      data.begin() + o * chunk);
        }
        out.push_back(make_result<T>(std::move(shape), std::move(data), {a.node_ptr()},
                                     [s, chunk, offset](Node<T>& self) {
                                         auto& g = self.parents[0]->ensure_grad();
                                         for (std::int64_t o = 0; o < s.outer; ++o) {
                                             for (std::int64_t i = 0; i < chunk; ++i) {
                                                 g[o * s.len * s.inner + offset + i] += self.grad[o * chunk + i];
                                             }
                                         }
                                     }));
        offset += chunk;
    }
    return out;
}

// ----------------------------------------------------------------------------
// Indexing

template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
    if (table.rank() != 2) {
        throw Error(ErrorKind::ShapeMismatch, "embedding table must be 2-D, got " + shape_str(table.shape()));
    }
    const std::int64_t vocab = table.dim(0);
    const std::int64_t d = table.dim(1);
    auto w = table.data();
    std::vector<std::int32_t> rows(ids.begin(), ids.end());
    std::vector<T> out(rows.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= vocab) {
            throw Error(ErrorKind::IdOutOfRange,
                        "id " + std::to_string(rows[i]) + " outside table of " + std::to_string(vocab) + " rows", i);
        }
        std::copy(w.begin() + rows[i] * d, w.begin() + (rows[i] + 1) * d, out.begin() + static_cast<std::int64_t>(i) * d);
    }
    return make_result<T>({static_cast<std::int64_t>(rows.size()), d}, std::move(out), {table.node_ptr()},
                          [rows, d](Node<T>& self) {
                              auto& g = self.parents[0]->ensure_grad();
                              for (std::size_t i = 0; i < rows.size(); ++i) {
                                  for (std::int64_t j = 0; j < d; ++j) {
                                      g[rows[i] * d + j] += self.grad[static_cast<std::int64_t>(i) * d + j];
                                  }
                              }
                          });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::int64_t> rows) {
    if (a.rank() < 1) {
        throw Error(ErrorKind::ShapeMismatch, "gather_rows on a scalar");
    }
    const std::int64_t n = a.dim(0);
    const std::int64_t width = n == 0 ? 0 : a.size() / n;
    std::vector<std::int64_t> idx(rows.begin(), rows.end());
    auto x = a.data();
    std::vector<T> out(idx.size() * static_cast<std::size_t>(width));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= n) {
            throw Error(ErrorKind::IdOutOfRange, "row " + std::to_string(idx[i]) + " of " + std::to_string(n), i);
        }
        std::copy(x.begin() + idx[i] * width, x.begin() + (idx[i] + 1) * width,
                  out.begin() + static_cast<std::int64_t>(i) * width);
    }
    Shape shape = a.shape();
    shape[0] = static_cast<std::int64_t>(idx.size());
    return make_result<T>(std::move(shape), std::move(out), {a.node_ptr()}, [idx, width](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::int64_t j = 0; j < width; ++j) {
                g[idx[i] * width + j] += self.grad[static_cast<std::int64_t>(i) * width + j];
            }
        }
    });
}

template <class T>
Tensor<T> select_rows(std::span<const std::uint8_t> mask, const Tensor<T>& when_true, const Tensor<T>& when_false) {
    if (when_true.shape() != when_false.shape() || when_true.rank() < 1 ||
        when_true.dim(0) != static_cast<std::int64_t>(mask.size())) {
        shape_error("select_rows", when_true.shape(), when_false.shape());
    }
    const std::int64_t width = mask.empty() ? 0 : when_true.size() / static_cast<std::int64_t>(mask.size());
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    auto a = when_true.data();
    auto b = when_false.data();
    std::vector<T> out(a.size());
    for (std::size_t r = 0; r < m.size(); ++r) {
        const auto& src = m[r] ? a : b;
        std::copy(src.begin() + static_cast<std::int64_t>(r) * width, src.begin() + static_cast<std::int64_t>(r + 1) * width,
                  out.begin() + static_cast<std::int64_t>(r) * width);
    }
    return make_result<T>(when_true.shape(), std::move(out), {when_true.node_ptr(), when_false.node_ptr()},
                          [m, width](Node<T>& self) {
                              for (std::size_t side = 0; side < 2; ++side) {
                                  if (!wants(self, side)) continue;
                                  auto& g = self.parents[side]->ensure_grad();
                                  for (std::size_t r = 0; r < m.size(); ++r) {
                                      if (bool(m[r]) != (side == 0)) continue;
                                      for (std::int64_t j = 0; j < width; ++j) {
                                          const auto i = static_cast<std::int64_t>(r) * width + j;
                                          g[i] += self.grad[i];
                                      }
                                  }
                              }
                          });
}

template <class T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::int64_t times) {
    if (times < 1 || a.rank() < 1) {
        throw Error(ErrorKind::ShapeMismatch, "repeat_rows: bad repeat count for " + shape_str(a.shape()));
    }
    const std::int64_t n = a.size();
    auto x = a.data();
    std::vector<T> out(static_cast<std::size_t>(n * times));
    for (std::int64_t t = 0; t < times; ++t) std::copy(x.begin(), x.end(), out.begin() + t * n);
    Shape shape = a.shape();
    shape[0] *= times;
    return make_result<T>(std::move(shape), std::move(out), {a.node_ptr()}, [n, times](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::int64_t t = 0; t < times; ++t) {
            for (std::int64_t i = 0; i < n; ++i) g[i] += self.grad[t * n + i];
        }
    });
}

template <class T>
Tensor<T> repeat_heads(const Tensor<T>& a, std::int64_t times) {
    if (times < 1 || a.rank() < 2) {
        throw Error(ErrorKind::ShapeMismatch, "repeat_heads on " + shape_str(a.shape()));
    }
    if (times == 1) {
        return a;
    }
    const std::int64_t d = a.dim(-1);
    const std::int64_t h = a.dim(-2);
    const std::int64_t outer = a.size() / (h * d);
    Shape shape = a.shape();
    shape[shape.size() - 2] = h * times;
    auto x = a.data();
    std::vector<T> out(static_cast<std::size_t>(outer * h * times * d));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < h * times; ++j) {
            const std::int64_t src = (o * h + j / times) * d;
            std::copy(x.begin() + src, x.begin() + src + d, out.begin() + (o * h * times + j) * d);
        }
    }
    return make_result<T>(std::move(shape), std::move(out), {a.node_ptr()}, [outer, h, d, times](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t j = 0; j < h * times; ++j) {
                const std::int64_t src = (o * h + j / times) * d;
                const std::int64_t dst = (o * h * times + j) * d;
                for (std::int64_t c = 0; c < d; ++c) g[src + c] += self.grad[dst + c];
            }
        }
    });
}

// ----------------------------------------------------------------------------
// Attention helpers

template <class T>
Tensor<T> causal_masked_fill(const Tensor<T>& scores, T value) {
    if (scores.rank() < 2 || scores.dim(-1) != scores.dim(-2)) {
        throw Error(ErrorKind::ShapeMismatch, "causal_masked_fill needs trailing [L,L], got " + shape_str(scores.shape()));
    }
    const std::int64_t len = scores.dim(-1);
    const std::int64_t blocks = scores.size() / (len * len);
    std::vector<T> out(scores.data().begin(), scores.data().end());
    for (std::int64_t b = 0; b < blocks; ++b) {
        for (std::int64_t i = 0; i < len; ++i) {
            for (std::int64_t j = i + 1; j < len; ++j) out[(b * len + i) * len + j] = value;
        }
    }
    return make_result<T>(scores.shape(), std::move(out), {scores.node_ptr()}, [blocks, len](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::int64_t b = 0; b < blocks; ++b) {
            for (std::int64_t i = 0; i < len; ++i) {
                for (std::int64_t j = 0; j <= i; ++j) {
                    const auto k = (b * len + i) * len + j;
                    g[k] += self.grad[k];
                }
            }
        }
    });
}

template <class T>
Tensor<T> rope(const Tensor<T>& x, double theta) {
    if (x.rank() != 4 || x.dim(3) % 2 != 0) {
        throw Error(ErrorKind::ShapeMismatch, "rope expects [B,L,H,D] with even D, got " + shape_str(x.shape()));
    }
    const std::int64_t batch = x.dim(0), len = x.dim(1), heads = x.dim(2), d = x.dim(3);
    const std::int64_t half = d / 2;
    auto table = std::make_shared<std::vector<T>>(static_cast<std::size_t>(len * half * 2));
    for (std::int64_t l = 0; l < len; ++l) {
        for (std::int64_t i = 0; i < half; ++i) {
            const double freq = std::pow(theta, -2.0 * double(i) / double(d));
            const double ang = double(l) * freq;
            (*table)[(l * half + i) * 2] = T(std::cos(ang));
            (*table)[(l * half + i) * 2 + 1] = T(std::sin(ang));
        }
    }
    auto in = x.data();
    std::vector<T> out(in.size());
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t l = 0; l < len; ++l) {
            for (std::int64_t h = 0; h < heads; ++h) {
                const std::int64_t base = ((b * len + l) * heads + h) * d;
                for (std::int64_t i = 0; i < half; ++i) {
                    const T c = (*table)[(l * half + i) * 2];
                    const T s = (*table)[(l * half + i) * 2 + 1];
                    const T x1 = in[base + i];
                    const T x2 = in[base + i + half];
                    out[base + i] = x1 * c - x2 * s;
                    out[base + i + half] = x1 * s + x2 * c;
                }
            }
        }
    }
    return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [=](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t l = 0; l < len; ++l) {
                for (std::int64_t h = 0; h < heads; ++h) {
                    const std::int64_t base = ((b * len + l) * heads + h) * d;
                    for (std::int64_t i = 0; i < half; ++i) {
                        const T c = (*table)[(l * half + i) * 2];
                        const T s = (*table)[(l * half + i) * 2 + 1];
                        const T g1 = self.grad[base + i];
                        const T g2 = self.grad[base + i + half];
                        g[base + i] += g1 * c + g2 * s;
                        g[base + i + half] += -g1 * s + g2 * c;
                    }
                }
            }
        }
    });
}

// ----------------------------------------------------------------------------
// Losses

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
    if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(targets.size()) || targets.empty()) {
        throw Error(ErrorKind::ShapeMismatch, "cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                                                  std::to_string(targets.size()) + " targets");
    }
    const std::int64_t n = logits.dim(0), v = logits.dim(1);
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    auto x = logits.data();
    auto probs = std::make_shared<std::vector<T>>(x.size());
    double total = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        if (tgt[r] < 0 || tgt[r] >= v) {
            throw Error(ErrorKind::IdOutOfRange, "target " + std::to_string(tgt[r]), static_cast<std::size_t>(r));
        }
        const T* row = x.data() + r * v;
        T mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::int64_t j = 0; j < v; ++j) z += std::exp(double(row[j] - mx));
        for (std::int64_t j = 0; j < v; ++j) (*probs)[r * v + j] = T(std::exp(double(row[j] - mx)) / z);
        total += std::log(z) + double(mx) - double(row[tgt[r]]);
    }
    return make_result<T>({}, {T(total / double(n))}, {logits.node_ptr()}, [n, v, tgt, probs](Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double scale = double(self.grad[0]) / double(n);
        for (std::int64_t r = 0; r < n; ++r) {
            for (std::int64_t j = 0; j < v; ++j) {
                g[r * v + j] += T(scale * ((*probs)[r * v + j] - (j == tgt[r] ? 1.0 : 0.0)));
            }
        }
    });
}

template <class T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>::from(a.shape(), std::vector<T>(a.data().begin(), a.data().end()), false);
}

// ----------------------------------------------------------------------------
// Instantiations

#define MIXGEN_INSTANTIATE(T)                                                                                        \
    template class Tensor<T>;                                                                                        \
    template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, T, const T*, std::int64_t, const T*, \
                          std::int64_t, T, T*, std::int64_t);                                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> scale(const Tensor<T>&, T);                                                                   \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                              \
    template Tensor<T> square(const Tensor<T>&);                                                                     \
    template Tensor<T> exp(const Tensor<T>&);                                                                        \
    template Tensor<T> log(const Tensor<T>&);                                                                        \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                                    \
    template Tensor<T> silu(const Tensor<T>&);                                                                       \
    template Tensor<T> gelu(const Tensor<T>&);                                                                       \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                   \
    template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                                                \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                               \
    template Tensor<T> layer_norm(const Tensor<T>&, int, T);                                                         \
    template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, T);                                              \
    template Tensor<T> sum(const Tensor<T>&);                                                                        \
    template Tensor<T> mean(const Tensor<T>&);                                                                       \
    template Tensor<T> mean(const Tensor<T>&, int);                                                                  \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                             \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                                           \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                                   \
    template std::vector<Tensor<T>> split(const Tensor<T>&, int, const std::vector<std::int64_t>&);                  \
    template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);                                   \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int64_t>);                                 \
    template Tensor<T> select_rows(std::span<const std::uint8_t>, const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> repeat_rows(const Tensor<T>&, std::int64_t);                                                  \
    template Tensor<T> repeat_heads(const Tensor<T>&, std::int64_t);                                                 \
    template Tensor<T> causal_masked_fill(const Tensor<T>&, T);                                                      \
    template Tensor<T> rope(const Tensor<T>&, double);                                                               \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);                               \
    template Tensor<T> detach(const Tensor<T>&);

MIXGEN_INSTANTIATE(float)
MIXGEN_INSTANTIATE(double)

#undef MIXGEN_INSTANTIATE

}  // namespace mixgen
