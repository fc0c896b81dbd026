#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "vgen/errors.hpp"
#include "vgen/rng.hpp"

// Dense N-d tensor with a single-use reverse-mode tape over a fixed primitive
// set: matmul, add, mul, scale, silu, gelu, softmax, rms_norm, reshape,
// permute, concat, split, sum, mean. Everything else is composed from these.
// Scalar type is a template parameter: float is the working precision,
// double is used for gradient checking.

namespace vgen {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline Shape row_major_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // sized lazily; same length as data when present

    // Tape edges. Cleared when backward() consumes the tape.
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    bool is_leaf() const { return requires_grad && parents.empty(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <class T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        if (requires_grad) n->ensure_grad();
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)), T(0));
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)), v);
        return from(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), T(1), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from(Shape{}, std::vector<T>{v}, requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)));
        for (auto& x : d) x = static_cast<T>(rng.normal()) * stddev;
        return from(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<T>& values() const { return node_->data; }
    const std::vector<T>& grad() const { return node_->grad; }

    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not a scalar, shape " + shape_str(shape()));
        return node_->data[0];
    }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->data.size(), T(0));
    }

    // Constant copy, detached from any tape.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->data = node_->data;
        return Tensor(std::move(n));
    }

    std::shared_ptr<Node> node() const { return node_; }

    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string(op) + ": non-finite value produced");
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<std::shared_ptr<TensorNode<T>>> parents,
                      std::function<void(TensorNode<T>&)> backprop) {
    check_finite(data, op);
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool any = false;
    for (auto& p : parents) any = any || p->requires_grad;
    if (any) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor<T>(std::move(n));
}

// Right-aligned numpy broadcasting of two shapes.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides into `src` treating it as broadcast to `out` (0 stride on broadcast dims).
inline Shape broadcast_strides(const Shape& src, const Shape& out) {
    Shape st = row_major_strides(src);
    Shape r(out.size(), 0);
    size_t off = out.size() - src.size();
    for (size_t i = 0; i < src.size(); ++i) r[off + i] = (src[i] == 1 && out[off + i] != 1) ? 0 : st[i];
    return r;
}

// Walks a row-major index space of `shape`, yielding offsets into two
// broadcast operands.
template <class F>
void for_each_broadcast(const Shape& shape, const Shape& sa, const Shape& sb, F&& f) {
    int64_t n = shape_numel(shape);
    size_t r = shape.size();
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t lin = 0; lin < n; ++lin) {
        f(lin, oa, ob);
        for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < shape[d]) break;
            oa -= sa[d] * shape[d];
            ob -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise add / mul (broadcasting), scale
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    using namespace detail;
    if (a.shape() == b.shape()) {
        const auto& av = a.values();
        const auto& bv = b.values();
        std::vector<T> out(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
        auto an = a.node(), bn = b.node();
        return make_result<T>(a.shape(), std::move(out), "add", {an, bn}, [an, bn](TensorNode<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            }
        });
    }
    Shape os = broadcast_shape(a.shape(), b.shape(), "add");
    Shape sa = broadcast_strides(a.shape(), os), sb = broadcast_strides(b.shape(), os);
    std::vector<T> out(static_cast<size_t>(shape_numel(os)));
    const auto& av = a.values();
    const auto& bv = b.values();
    for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) { out[lin] = av[oa] + bv[ob]; });
    auto an = a.node(), bn = b.node();
    return make_result<T>(os, std::move(out), "add", {an, bn}, [an, bn, os, sa, sb](TensorNode<T>& self) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        detail::for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
            if (an->requires_grad) an->grad[oa] += self.grad[lin];
            if (bn->requires_grad) bn->grad[ob] += self.grad[lin];
        });
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    using namespace detail;
    if (a.shape() == b.shape()) {
        const auto& av = a.values();
        const auto& bv = b.values();
        std::vector<T> out(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
        auto an = a.node(), bn = b.node();
        return make_result<T>(a.shape(), std::move(out), "mul", {an, bn}, [an, bn](TensorNode<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->data[i];
            }
        });
    }
    Shape os = broadcast_shape(a.shape(), b.shape(), "mul");
    Shape sa = broadcast_strides(a.shape(), os), sb = broadcast_strides(b.shape(), os);
    std::vector<T> out(static_cast<size_t>(shape_numel(os)));
    const auto& av = a.values();
    const auto& bv = b.values();
    for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) { out[lin] = av[oa] * bv[ob]; });
    auto an = a.node(), bn = b.node();
    return make_result<T>(os, std::move(out), "mul", {an, bn}, [an, bn, os, sa, sb](TensorNode<T>& self) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        detail::for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
            if (an->requires_grad) an->grad[oa] += self.grad[lin] * bn->data[ob];
            if (bn->requires_grad) bn->grad[ob] += self.grad[lin] * an->data[oa];
        });
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    auto an = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "scale", {an}, [an, c](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, scale(b, T(-1)));
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-av[i]));
        out[i] = av[i] * s;
    }
    auto an = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "silu", {an}, [an](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            T s = T(1) / (T(1) + std::exp(-x));
            an->grad[i] += self.grad[i] * (s * (T(1) + x * (T(1) - s)));
        }
    });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    static const T inv_sqrt2 = T(0.70710678118654752440);
    static const T inv_sqrt2pi = T(0.39894228040143267794);
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        T x = av[i];
        out[i] = x * T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
    }
    auto an = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "gelu", {an}, [an](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = an->data[i];
            T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            an->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// softmax / rms_norm over the last dimension
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.rank() == 0) throw ShapeError("softmax: rank-0 input");
    int64_t d = a.shape().back();
    int64_t rows = a.numel() / d;
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = av.data() + r * d;
        T* y = out.data() + r * d;
        T m = x[0];
        for (int64_t j = 1; j < d; ++j) m = std::max(m, x[j]);
        T sum = T(0);
        for (int64_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - m);
            sum += y[j];
        }
        for (int64_t j = 0; j < d; ++j) y[j] /= sum;
    }
    auto an = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "softmax", {an}, [an, d, rows](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * d;
            const T* gy = self.grad.data() + r * d;
            T dot = T(0);
            for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            T* gx = an->grad.data() + r * d;
            for (int64_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

// y = x / sqrt(mean(x^2) + eps), normalizing the last dimension. Learned
// gains, when wanted, are composed with mul.
template <class T>
Tensor<T> rms_norm(const Tensor<T>& a, T eps = T(1e-6)) {
    if (a.rank() == 0) throw ShapeError("rms_norm: rank-0 input");
    int64_t d = a.shape().back();
    int64_t rows = a.numel() / d;
    const auto& av = a.values();
    std::vector<T> out(av.size());
    std::vector<T> inv_r(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = av.data() + r * d;
        T ms = T(0);
        for (int64_t j = 0; j < d; ++j) ms += x[j] * x[j];
        ms = ms / static_cast<T>(d) + eps;
        T inv = T(1) / std::sqrt(ms);
        inv_r[r] = inv;
        T* y = out.data() + r * d;
        for (int64_t j = 0; j < d; ++j) y[j] = x[j] * inv;
    }
    auto an = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "rms_norm", {an},
                                  [an, d, rows, inv_r](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * d;
            const T* gy = self.grad.data() + r * d;
            T dot = T(0);
            for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            dot /= static_cast<T>(d);
            T* gx = an->grad.data() + r * d;
            for (int64_t j = 0; j < d; ++j) gx[j] += inv_r[r] * (gy[j] - y[j] * dot);
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops: reshape, permute, concat, split
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    auto an = a.node();
    std::vector<T> out = a.values();
    return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {an}, [an](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<size_t>& order) {
    size_t r = a.rank();
    if (order.size() != r) throw ShapeError("permute: order length mismatch");
    std::vector<bool> seen(r, false);
    for (size_t d : order) {
        if (d >= r || seen[d]) throw ShapeError("permute: invalid axis order");
        seen[d] = true;
    }
    Shape os(r);
    for (size_t i = 0; i < r; ++i) os[i] = a.shape()[order[i]];
    Shape in_st = row_major_strides(a.shape());
    // stride in the input for each output axis
    Shape st(r);
    for (size_t i = 0; i < r; ++i) st[i] = in_st[order[i]];
    int64_t n = a.numel();
    const auto& av = a.values();
    std::vector<T> out(static_cast<size_t>(n));
    std::vector<int64_t> src_of(static_cast<size_t>(n));
    std::vector<int64_t> idx(r, 0);
    int64_t off = 0;
    for (int64_t lin = 0; lin < n; ++lin) {
        out[lin] = av[off];
        src_of[lin] = off;
        for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
            ++idx[d];
            off += st[d];
            if (idx[d] < os[d]) break;
            off -= st[d] * os[d];
            idx[d] = 0;
        }
    }
    auto an = a.node();
    return detail::make_result<T>(os, std::move(out), "permute", {an},
                                  [an, src_of = std::move(src_of)](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[src_of[i]] += self.grad[i];
    });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis) {
    if (parts.empty()) throw ShapeError("concat: empty input list");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
    Shape os = s0;
    os[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d])
                throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
        os[axis] += s[axis];
    }
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= os[d];
    for (size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];
    std::vector<T> out(static_cast<size_t>(shape_numel(os)));
    int64_t row = os[axis] * inner;
    int64_t col_off = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        int64_t pa = p.shape()[axis];
        const auto& pv = p.values();
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(pv.data() + o * pa * inner, pa * inner, out.data() + o * row + col_off);
        offsets.push_back(col_off);
        col_off += pa * inner;
    }
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.shape()[axis] * inner);
    }
    return detail::make_result<T>(os, std::move(out), "concat", nodes,
                                  [nodes, offsets, widths, outer, row](TensorNode<T>& self) {
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (!nodes[k]->requires_grad) continue;
            nodes[k]->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                const T* g = self.grad.data() + o * row + offsets[k];
                T* dst = nodes[k]->grad.data() + o * widths[k];
                for (int64_t i = 0; i < widths[k]; ++i) dst[i] += g[i];
            }
        }
    });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& a, size_t axis, const std::vector<int64_t>& sizes) {
    if (axis >= a.rank()) throw ShapeError("split: axis out of range");
    int64_t total = 0;
    for (int64_t s : sizes) {
        if (s <= 0) throw ShapeError("split: non-positive part size");
        total += s;
    }
    if (total != a.shape()[axis]) throw ShapeError("split: sizes do not cover axis extent");
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
    for (size_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
    int64_t row = a.shape()[axis] * inner;
    auto an = a.node();
    const auto& av = a.values();
    std::vector<Tensor<T>> outs;
    int64_t col_off = 0;
    for (int64_t s : sizes) {
        Shape os = a.shape();
        os[axis] = s;
        std::vector<T> d(static_cast<size_t>(outer * s * inner));
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(av.data() + o * row + col_off, s * inner, d.data() + o * s * inner);
        int64_t off = col_off;
        int64_t width = s * inner;
        outs.push_back(detail::make_result<T>(os, std::move(d), "split", {an},
                                              [an, off, width, outer, row](TensorNode<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                const T* g = self.grad.data() + o * width;
                T* dst = an->grad.data() + o * row + off;
                for (int64_t i = 0; i < width; ++i) dst[i] += g[i];
            }
        }));
        col_off += width;
    }
    return outs;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    const auto& av = a.values();
    T s = T(0);
    for (const T& x : av) s += x;
    auto an = a.node();
    return detail::make_result<T>(Shape{}, std::vector<T>{s}, "sum", {an}, [an](TensorNode<T>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += self.grad[0];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    T inv = T(1) / static_cast<T>(a.numel());
    return scale(sum(a), inv);
}

// ---------------------------------------------------------------------------
// matmul with broadcastable batch dims: [..,m,k] x [..,k,n] -> [..,m,n]
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    using namespace detail;
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: inputs must have rank >= 2");
    int64_t m = a.shape()[a.rank() - 2], k = a.shape()[a.rank() - 1];
    int64_t k2 = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Shape ab(a.shape().begin(), a.shape().end() - 2);
    Shape bb(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shape(ab, bb, "matmul");
    int64_t nb = shape_numel(batch);
    // per-batch linear offsets for both operands under broadcasting
    Shape sa = broadcast_strides(ab, batch), sb = broadcast_strides(bb, batch);
    std::vector<int64_t> aoff(static_cast<size_t>(nb)), boff(static_cast<size_t>(nb));
    for_each_broadcast(batch, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
        aoff[lin] = oa * m * k;
        boff[lin] = ob * k * n;
    });
    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<T> out(static_cast<size_t>(nb * m * n), T(0));
    for (int64_t bi = 0; bi < nb; ++bi) {
        const T* A = av.data() + aoff[bi];
        const T* B = bv.data() + boff[bi];
        T* C = out.data() + bi * m * n;
        for (int64_t i = 0; i < m; ++i) {
            T* crow = C + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                T aval = A[i * k + kk];
                const T* brow = B + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
            }
        }
    }
    auto an = a.node(), bn = b.node();
    return make_result<T>(os, std::move(out), "matmul", {an, bn},
                          [an, bn, aoff = std::move(aoff), boff = std::move(boff), nb, m, k, n](TensorNode<T>& self) {
        for (int64_t bi = 0; bi < nb; ++bi) {
            const T* G = self.grad.data() + bi * m * n;
            if (an->requires_grad) {
                an->ensure_grad();
                const T* B = bn->data.data() + boff[bi];
                T* dA = an->grad.data() + aoff[bi];
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t kk = 0; kk < k; ++kk) {
                        T acc = T(0);
                        const T* grow = G + i * n;
                        const T* brow = B + kk * n;
                        for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        dA[i * k + kk] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const T* A = an->data.data() + aoff[bi];
                T* dB = bn->grad.data() + boff[bi];
                for (int64_t kk = 0; kk < k; ++kk) {
                    T* drow = dB + kk * n;
                    for (int64_t i = 0; i < m; ++i) {
                        T aval = A[i * k + kk];
                        const T* grow = G + i * n;
                        for (int64_t j = 0; j < n; ++j) drow[j] += aval * grow[j];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. The tape is single-use: edges are
// released as they are processed. Leaf tensors (requires_grad, no parents)
// keep their accumulated grads; intermediate grads are dropped.
template <class T>
void backward(const Tensor<T>& loss) {
    if (!loss.requires_grad())
        throw NumericError("backward: loss is detached from any differentiable input (or tape already consumed)");
    if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    auto root = loss.node();

    // topological order via iterative DFS
    std::vector<std::shared_ptr<TensorNode<T>>> topo;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::pair<std::shared_ptr<TensorNode<T>>, size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto p = node->parents[next++];
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        auto& node = *it;
        if (node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
        }
        // Consume the tape. Leaves keep their accumulated grads; intermediates
        // drop theirs and turn into constants.
        bool leaf = node->is_leaf();
        node->backprop = nullptr;
        node->parents.clear();
        if (!leaf) {
            node->grad.clear();
            node->grad.shrink_to_fit();
            node->requires_grad = false;
        }
    }
}

}  // namespace vgen
