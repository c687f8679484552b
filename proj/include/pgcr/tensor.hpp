#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"

namespace pgcr {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    if (s.empty()) os << "scalar";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

template <class S>
struct TensorImplT {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;        // allocated lazily, same length as data
    bool requires_grad = false;
    bool graph_output = false;  // true iff produced by a recorded op (non-leaf)
};

// Dense row-major tensor. Copies are shallow handles sharing the same storage;
// use clone()/detach() for an independent buffer.
template <class S>
class TensorT {
public:
    using Scalar = S;

    TensorT() : impl_(std::make_shared<TensorImplT<S>>()) {}

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static TensorT filled(Shape shape, S value, bool requires_grad = false) {
        TensorT t;
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(shape_numel(t.impl_->shape), value);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static TensorT from_data(Shape shape, std::vector<S> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
        TensorT t;
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(values);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(S value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

    std::vector<S>& data() { return impl_->data; }
    const std::vector<S>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    bool is_leaf() const { return !impl_->graph_output; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<S>& grad() {
        ensure_grad();
        return impl_->grad;
    }
    const std::vector<S>& grad() const {
        if (impl_->grad.empty())
            throw ShapeError("grad accessed before backward populated it");
        return impl_->grad;
    }
    void ensure_grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), S(0));
    }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), S(0));
    }

    S item() const {
        if (numel() != 1)
            throw ShapeError("item(): tensor " + shape_str(shape()) + " is not scalar");
        return impl_->data[0];
    }

    // Independent deep copy, keeps requires_grad, drops graph linkage.
    TensorT clone() const {
        TensorT t;
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

    // Copy that does not participate in differentiation.
    TensorT detach() const {
        TensorT t = clone();
        t.impl_->requires_grad = false;
        return t;
    }

    std::shared_ptr<TensorImplT<S>>& impl() { return impl_; }
    const std::shared_ptr<TensorImplT<S>>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImplT<S>> impl_;
};

using Tensor = TensorT<float>;

template <class S>
bool all_finite(const TensorT<S>& t) {
    for (S v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

template <class S>
void check_finite(const TensorT<S>& t, const std::string& name) {
    if (!all_finite(t)) throw NumericError("non-finite values in " + name);
}

// Define-by-run tape. Ops append themselves in execution order, which is a
// valid topological order by construction; backward() replays it in reverse,
// visiting every op exactly once. Leaf grads accumulate across backward calls;
// op-output grads are transient and reset at the start of each call.
template <class S>
class GraphT {
public:
    static GraphT& current() {
        static thread_local GraphT g;
        return g;
    }

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void record(std::shared_ptr<TensorImplT<S>> out, std::function<void()> backward) {
        entries_.push_back({std::move(out), std::move(backward)});
    }

    std::size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    void backward(const TensorT<S>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        for (auto& e : entries_) {
            if (e.out->grad.empty())
                e.out->grad.assign(e.out->data.size(), S(0));
            else
                std::fill(e.out->grad.begin(), e.out->grad.end(), S(0));
        }
        auto& li = *loss.impl();
        if (li.grad.empty()) li.grad.assign(1, S(0));
        li.grad[0] += S(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
    }

private:
    struct Entry {
        std::shared_ptr<TensorImplT<S>> out;
        std::function<void()> backward;
    };
    std::vector<Entry> entries_;
    bool recording_ = true;
};

using Graph = GraphT<float>;

template <class S>
class NoGradGuardT {
public:
    NoGradGuardT() : prev_(GraphT<S>::current().recording()) {
        GraphT<S>::current().set_recording(false);
    }
    ~NoGradGuardT() { GraphT<S>::current().set_recording(prev_); }
    NoGradGuardT(const NoGradGuardT&) = delete;
    NoGradGuardT& operator=(const NoGradGuardT&) = delete;

private:
    bool prev_;
};

using NoGradGuard = NoGradGuardT<float>;

namespace detail {

template <class S>
bool track(std::initializer_list<const TensorT<S>*> inputs) {
    if (!GraphT<S>::current().recording()) return false;
    for (const TensorT<S>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <class S, class F>
void record_if(bool tracked, TensorT<S>& out, F&& backward) {
    if (!tracked) return;
    out.set_requires_grad(true);
    out.impl()->graph_output = true;
    GraphT<S>::current().record(out.impl(), std::forward<F>(backward));
}

template <class S>
std::vector<S>* grad_dst(const TensorT<S>& t) {
    if (!t.requires_grad()) return nullptr;
    auto& impl = *t.impl();
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), S(0));
    return &impl.grad;
}

// C[m x n] += A[m x k] * B[k x n]
template <class S>
void mm_acc_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const S* ar = a + i * k;
        S* cr = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const S av = ar[p];
            const S* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T where B is [n x k]
template <class S>
void mm_acc_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const S* ar = a + i * k;
        S* cr = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const S* br = b + j * k;
            S acc = S(0);
            for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
            cr[j] += acc;
        }
    }
}

// C[k x n] += A^T * G where A is [m x k], G is [m x n]
template <class S>
void mm_acc_tn(const S* a, const S* g, S* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const S* ar = a + i * k;
        const S* gr = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const S av = ar[p];
            S* cr = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * gr[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

// a + b. Shapes must match, except b may be a rank-1 vector matching a's last
// dim (bias broadcast). No other broadcasting.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    const bool bias = (b.rank() == 1 && a.rank() >= 1 && b.shape()[0] == a.shape().back() &&
                       a.shape() != b.shape());
    if (!bias && a.shape() != b.shape())
        throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    const std::size_t n = a.numel();
    if (bias) {
        const std::size_t d = b.numel();
        for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i % d];
    } else {
        for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    }
    const bool tracked = detail::track<S>({&a, &b});
    detail::record_if(tracked, out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), bias]() {
        const std::size_t n = oi->data.size();
        if (ai->requires_grad) {
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
            for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
        }
        if (bi->requires_grad) {
            if (bi->grad.empty()) bi->grad.assign(bi->data.size(), S(0));
            if (bias) {
                const std::size_t d = bi->data.size();
                for (std::size_t i = 0; i < n; ++i) bi->grad[i % d] += oi->grad[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i];
            }
        }
    });
    return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    const bool tracked = detail::track<S>({&a, &b});
    detail::record_if(tracked, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
        const std::size_t n = oi->data.size();
        if (ai->requires_grad) {
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
            for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
        }
        if (bi->requires_grad) {
            if (bi->grad.empty()) bi->grad.assign(bi->data.size(), S(0));
            for (std::size_t i = 0; i < n; ++i) bi->grad[i] -= oi->grad[i];
        }
    });
    return out;
}

// Elementwise (Hadamard) product, identical shapes.
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    const bool tracked = detail::track<S>({&a, &b});
    detail::record_if(tracked, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
        const std::size_t n = oi->data.size();
        if (ai->requires_grad) {
            if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
            for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
            if (bi->grad.empty()) bi->grad.assign(bi->data.size(), S(0));
            for (std::size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
        }
    });
    return out;
}

template <class S>
TensorT<S> mul_scalar(const TensorT<S>& a, S c) {
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * c;
    const bool tracked = detail::track<S>({&a});
    detail::record_if(tracked, out, [ai = a.impl(), oi = out.impl(), c]() {
        if (!ai->requires_grad) return;
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) ai->grad[i] += oi->grad[i] * c;
    });
    return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
    TensorT<S> out = TensorT<S>::zeros(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + c;
    const bool tracked = detail::track<S>({&a});
    detail::record_if(tracked, out, [ai = a.impl(), oi = out.impl()]() {
        if (!ai->requires_grad) return;
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) ai->grad[i] += oi->grad[i];
    });
    return out;
}

template <class S>
TensorT<S> neg(const TensorT<S>& a) {
    return mul_scalar(a, S(-1));
}

// c - a, elementwise.
template <class S>
TensorT<S> rsub_scalar(S c, const TensorT<S>& a) {
    return add_scalar(neg(a), c);
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

// a [.. x m x k] times b [.. x k x n]. Leading batch dims, if any, must be
// identical on both sides.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
        throw ShapeError("matmul: incompatible ranks for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t r = a.rank();
    for (std::size_t i = 0; i + 2 < r; ++i)
        if (a.shape()[i] != b.shape()[i])
            throw ShapeError("matmul: batch dims differ between " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[r - 2], k = a.shape()[r - 1];
    const std::size_t k2 = b.shape()[r - 2], n = b.shape()[r - 1];
    if (k != k2)
        throw ShapeError("matmul: inner dims disagree between " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    std::size_t batch = shape_numel(out_shape);
    out_shape.push_back(m);
    out_shape.push_back(n);
    TensorT<S> out = TensorT<S>::zeros(out_shape);
    for (std::size_t bi = 0; bi < batch; ++bi)
        detail::mm_acc_nn(a.data().data() + bi * m * k, b.data().data() + bi * k * n,
                          out.data().data() + bi * m * n, m, k, n);
    const bool tracked = detail::track<S>({&a, &b});
    detail::record_if(tracked, out,
                      [ai = a.impl(), bi2 = b.impl(), oi = out.impl(), batch, m, k, n]() {
                          for (std::size_t bb = 0; bb < batch; ++bb) {
                              const S* ga = oi->grad.data() + bb * m * n;
                              if (ai->requires_grad) {
                                  if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
                                  detail::mm_acc_nt(ga, bi2->data.data() + bb * k * n,
                                                    ai->grad.data() + bb * m * k, m, n, k);
                              }
                              if (bi2->requires_grad) {
                                  if (bi2->grad.empty()) bi2->grad.assign(bi2->data.size(), S(0));
                                  detail::mm_acc_tn(ai->data.data() + bb * m * k, ga,
                                                    bi2->grad.data() + bb * k * n, m, k, n);
                              }
                          }
                      });
    return out;
}

// Swap the last two dims.
template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
    if (a.rank() < 2) throw ShapeError("transpose: rank >= 2 required, got " + shape_str(a.shape()));
    const std::size_t r = a.rank();
    const std::size_t m = a.shape()[r - 2], n = a.shape()[r - 1];
    Shape out_shape = a.shape();
    std::swap(out_shape[r - 2], out_shape[r - 1]);
    const std::size_t batch = a.numel() / (m * n);
    TensorT<S> out = TensorT<S>::zeros(out_shape);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const S* src = a.data().data() + bi * m * n;
        S* dst = out.data().data() + bi * m * n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
    const bool tracked = detail::track<S>({&a});
    detail::record_if(tracked, out, [ai = a.impl(), oi = out.impl(), batch, m, n]() {
        if (!ai->requires_grad) return;
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const S* g = oi->grad.data() + bi * m * n;
            S* dst = ai->grad.data() + bi * m * n;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
        }
    });
    return out;
}

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " cannot become " +
                         shape_str(new_shape));
    TensorT<S> out = TensorT<S>::from_data(std::move(new_shape), a.data());
    const bool tracked = detail::track<S>({&a});
    detail::record_if(tracked, out, [ai = a.impl(), oi = out.impl()]() {
        if (!ai->requires_grad) return;
        if (ai->grad.empty()) ai->grad.assign(ai->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) ai->grad[i] += oi->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

// Max-subtracted softmax along `axis` (negative counts from the end).
template <class S>
TensorT<S> softmax(const TensorT<S>& x, int axis = -1) {
    const int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const std::size_t len = x.shape()[axis];
    std::size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];
    for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    const S* xd = x.data().data();
    S* od = out.data().data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            S mx = xd[base];
            for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xd[base + i * inner]);
            S sum = S(0);
            for (std::size_t i = 0; i < len; ++i) {
                const S e = std::exp(xd[base + i * inner] - mx);
                od[base + i * inner] = e;
                sum += e;
            }
            const S inv = S(1) / sum;
            for (std::size_t i = 0; i < len; ++i) od[base + i * inner] *= inv;
        }
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), outer, inner, len]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        const S* y = oi->data.data();
        const S* gy = oi->grad.data();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                S dot = S(0);
                for (std::size_t i = 0; i < len; ++i)
                    dot += gy[base + i * inner] * y[base + i * inner];
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t at = base + i * inner;
                    xi->grad[at] += y[at] * (gy[at] - dot);
                }
            }
    });
    return out;
}

// Per-row normalization over the last dim, then affine by gamma/beta.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      S eps = S(1e-6)) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
    const std::size_t d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw ShapeError("layer_norm: gamma/beta must be length-" + std::to_string(d) +
                         " vectors, got " + shape_str(gamma.shape()) + " and " +
                         shape_str(beta.shape()));
    if (eps <= S(0)) throw ShapeError("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / d;
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    std::vector<S> xhat(x.numel());
    std::vector<S> inv_std(rows);
    const S* xd = x.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = xd + r * d;
        S mean = S(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= S(d);
        S var = S(0);
        for (std::size_t j = 0; j < d; ++j) {
            const S c = row[j] - mean;
            var += c * c;
        }
        var /= S(d);
        const S inv = S(1) / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const S h = (row[j] - mean) * inv;
            xhat[r * d + j] = h;
            out.data()[r * d + j] = h * gamma.data()[j] + beta.data()[j];
        }
    }
    const bool tracked = detail::track<S>({&x, &gamma, &beta});
    detail::record_if(tracked, out,
                      [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl(),
                       xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
                          const S* gy = oi->grad.data();
                          if (gi->requires_grad && gi->grad.empty())
                              gi->grad.assign(gi->data.size(), S(0));
                          if (bi->requires_grad && bi->grad.empty())
                              bi->grad.assign(bi->data.size(), S(0));
                          if (xi->requires_grad && xi->grad.empty())
                              xi->grad.assign(xi->data.size(), S(0));
                          for (std::size_t r = 0; r < rows; ++r) {
                              const S* g_row = gy + r * d;
                              const S* h_row = xhat.data() + r * d;
                              if (gi->requires_grad)
                                  for (std::size_t j = 0; j < d; ++j)
                                      gi->grad[j] += g_row[j] * h_row[j];
                              if (bi->requires_grad)
                                  for (std::size_t j = 0; j < d; ++j) bi->grad[j] += g_row[j];
                              if (xi->requires_grad) {
                                  S m1 = S(0), m2 = S(0);
                                  for (std::size_t j = 0; j < d; ++j) {
                                      const S t = g_row[j] * gi->data[j];
                                      m1 += t;
                                      m2 += t * h_row[j];
                                  }
                                  m1 /= S(d);
                                  m2 /= S(d);
                                  const S inv = inv_std[r];
                                  for (std::size_t j = 0; j < d; ++j)
                                      xi->grad[r * d + j] +=
                                          (g_row[j] * gi->data[j] - m1 - h_row[j] * m2) * inv;
                              }
                          }
                      });
    return out;
}

namespace detail {
inline constexpr double kGeluAlpha = 0.7978845608028653558798921198687;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;
}  // namespace detail

// Test hook: grad-check must notice when the backward of an op is wrong.
// Production value is exactly 1.
template <class S>
S& gelu_backward_scale() {
    static S scale = S(1);
    return scale;
}

// tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
template <class S>
TensorT<S> gelu(const TensorT<S>& x) {
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const S v = x.data()[i];
        const S t = std::tanh(S(detail::kGeluAlpha) * (v + S(detail::kGeluCubic) * v * v * v));
        out.data()[i] = S(0.5) * v * (S(1) + t);
    }
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl()]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) {
            const S v = xi->data[i];
            const S u = S(detail::kGeluAlpha) * (v + S(detail::kGeluCubic) * v * v * v);
            const S t = std::tanh(u);
            const S du = S(detail::kGeluAlpha) * (S(1) + S(3) * S(detail::kGeluCubic) * v * v);
            const S d = S(0.5) * (S(1) + t) + S(0.5) * v * (S(1) - t * t) * du;
            xi->grad[i] += oi->grad[i] * d * gelu_backward_scale<S>();
        }
    });
    return out;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const S v = x.data()[i];
        out.data()[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                                  : std::exp(v) / (S(1) + std::exp(v));
    }
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl()]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) {
            const S y = oi->data[i];
            xi->grad[i] += oi->grad[i] * y * (S(1) - y);
        }
    });
    return out;
}

template <class S>
TensorT<S> leaky_relu(const TensorT<S>& x, S slope) {
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const S v = x.data()[i];
        out.data()[i] = v > S(0) ? v : slope * v;
    }
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), slope]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i)
            xi->grad[i] += oi->grad[i] * (xi->data[i] > S(0) ? S(1) : slope);
    });
    return out;
}

// Natural log. Callers clamp first; log of a non-positive value is the
// caller's bug and will surface as NaN/-inf in the finite check.
template <class S>
TensorT<S> log_op(const TensorT<S>& x) {
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = std::log(x.data()[i]);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl()]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i)
            xi->grad[i] += oi->grad[i] / xi->data[i];
    });
    return out;
}

// Clamp with pass-through gradient inside [lo, hi], zero outside.
template <class S>
TensorT<S> clamp(const TensorT<S>& x, S lo, S hi) {
    if (lo > hi) throw ShapeError("clamp: lo > hi");
    TensorT<S> out = TensorT<S>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out.data()[i] = std::min(hi, std::max(lo, x.data()[i]));
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), lo, hi]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t i = 0; i < oi->data.size(); ++i) {
            const S v = xi->data[i];
            if (v >= lo && v <= hi) xi->grad[i] += oi->grad[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    S acc = S(0);
    for (S v : x.data()) acc += v;
    TensorT<S> out = TensorT<S>::scalar(acc);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl()]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        const S g = oi->grad[0];
        for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += g;
    });
    return out;
}

template <class S>
TensorT<S> mean(const TensorT<S>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    S acc = S(0);
    for (S v : x.data()) acc += v;
    const S inv = S(1) / S(x.numel());
    TensorT<S> out = TensorT<S>::scalar(acc * inv);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), inv]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        const S g = oi->grad[0] * inv;
        for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += g;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Row indexing / assembly (rank-2 tensors)
// ---------------------------------------------------------------------------

// Gather rows of a [R x C] matrix; duplicates allowed, backward scatter-adds.
template <class S>
TensorT<S> take_rows(const TensorT<S>& x, const std::vector<std::size_t>& indices) {
    if (x.rank() != 2) throw ShapeError("take_rows: rank-2 tensor required, got " +
                                        shape_str(x.shape()));
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    for (std::size_t idx : indices)
        if (idx >= rows)
            throw ShapeError("take_rows: index " + std::to_string(idx) + " out of range for " +
                             shape_str(x.shape()));
    TensorT<S> out = TensorT<S>::zeros({indices.size(), cols});
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::copy_n(x.data().data() + indices[r] * cols, cols, out.data().data() + r * cols);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), indices, cols]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const S* g = oi->grad.data() + r * cols;
            S* dst = xi->grad.data() + indices[r] * cols;
            for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j];
        }
    });
    return out;
}

template <class S>
TensorT<S> concat_rows(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1])
        throw ShapeError("concat_rows: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " are not stackable");
    const std::size_t cols = a.shape()[1];
    TensorT<S> out = TensorT<S>::zeros({a.shape()[0] + b.shape()[0], cols});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.numel());
    const bool tracked = detail::track<S>({&a, &b});
    detail::record_if(tracked, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
        const std::size_t na = ai->data.size();
        if (ai->requires_grad) {
            if (ai->grad.empty()) ai->grad.assign(na, S(0));
            for (std::size_t i = 0; i < na; ++i) ai->grad[i] += oi->grad[i];
        }
        if (bi->requires_grad) {
            if (bi->grad.empty()) bi->grad.assign(bi->data.size(), S(0));
            for (std::size_t i = 0; i < bi->data.size(); ++i) bi->grad[i] += oi->grad[na + i];
        }
    });
    return out;
}

// Repeat a rank-1 vector as n rows.
template <class S>
TensorT<S> tile_rows(const TensorT<S>& v, std::size_t n) {
    if (v.rank() != 1) throw ShapeError("tile_rows: rank-1 vector required, got " +
                                        shape_str(v.shape()));
    const std::size_t d = v.shape()[0];
    TensorT<S> out = TensorT<S>::zeros({n, d});
    for (std::size_t r = 0; r < n; ++r)
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + r * d);
    const bool tracked = detail::track<S>({&v});
    detail::record_if(tracked, out, [vi = v.impl(), oi = out.impl(), n, d]() {
        if (!vi->requires_grad) return;
        if (vi->grad.empty()) vi->grad.assign(d, S(0));
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) vi->grad[j] += oi->grad[r * d + j];
    });
    return out;
}

// [P x D] -> [heads x P x D/heads]
template <class S>
TensorT<S> split_heads(const TensorT<S>& x, std::size_t heads) {
    if (x.rank() != 2) throw ShapeError("split_heads: rank-2 tensor required");
    const std::size_t p = x.shape()[0], dmodel = x.shape()[1];
    if (heads == 0 || dmodel % heads != 0)
        throw ShapeError("split_heads: width " + std::to_string(dmodel) +
                         " not divisible by " + std::to_string(heads) + " heads");
    const std::size_t dh = dmodel / heads;
    TensorT<S> out = TensorT<S>::zeros({heads, p, dh});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < p; ++i)
            std::copy_n(x.data().data() + i * dmodel + h * dh, dh,
                        out.data().data() + (h * p + i) * dh);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), heads, p, dh, dmodel]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < p; ++i) {
                const S* g = oi->grad.data() + (h * p + i) * dh;
                S* dst = xi->grad.data() + i * dmodel + h * dh;
                for (std::size_t j = 0; j < dh; ++j) dst[j] += g[j];
            }
    });
    return out;
}

// [heads x P x dh] -> [P x heads*dh]
template <class S>
TensorT<S> merge_heads(const TensorT<S>& x) {
    if (x.rank() != 3) throw ShapeError("merge_heads: rank-3 tensor required");
    const std::size_t heads = x.shape()[0], p = x.shape()[1], dh = x.shape()[2];
    const std::size_t dmodel = heads * dh;
    TensorT<S> out = TensorT<S>::zeros({p, dmodel});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < p; ++i)
            std::copy_n(x.data().data() + (h * p + i) * dh, dh,
                        out.data().data() + i * dmodel + h * dh);
    const bool tracked = detail::track<S>({&x});
    detail::record_if(tracked, out, [xi = x.impl(), oi = out.impl(), heads, p, dh, dmodel]() {
        if (!xi->requires_grad) return;
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), S(0));
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < p; ++i) {
                const S* g = oi->grad.data() + i * dmodel + h * dh;
                S* dst = xi->grad.data() + (h * p + i) * dh;
                for (std::size_t j = 0; j < dh; ++j) dst[j] += g[j];
            }
    });
    return out;
}

// Convenience wrapper matching the way training code reads: run the current
// graph backward from `loss`.
template <class S>
void backward(const TensorT<S>& loss) {
    GraphT<S>::current().backward(loss);
}

// Value-converting copy between scalar types (float <-> double). The result is
// a leaf; generic code uses this to lift captured data into the working type.
template <class To, class From>
TensorT<To> cast_tensor(const TensorT<From>& t) {
    std::vector<To> values(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) values[i] = static_cast<To>(t.data()[i]);
    return TensorT<To>::from_data(t.shape(), std::move(values));
}

}  // namespace pgcr
