// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense n-dimensional tensors with tape-based reverse-mode autodiff.
//
// float is the training dtype; the same templates instantiate with double
// for the verification suites (gradient checks run in 64-bit only). All
// kernels are single-threaded with a fixed reduction order, so identical
// seeds and inputs reproduce bit-identical values and gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "colora/common.hpp"
#include "colora/rng.hpp"

namespace colora {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) {
        if (e <= 0) throw ShapeError("non-positive extent in " + shape_str(s));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a recording op touches this tensor
    bool requires_grad = false;
};

template <typename T>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(Shape shape) {
        TensorT t;
        std::size_t n = shape_numel(shape);
        t.s_ = std::make_shared<TensorStorage<T>>();
        t.s_->shape = std::move(shape);
        t.s_->data.assign(n, T(0));
        return t;
    }

    static TensorT full(Shape shape, T value) {
        TensorT t = zeros(std::move(shape));
        std::fill(t.s_->data.begin(), t.s_->data.end(), value);
        return t;
    }

    static TensorT from_data(Shape shape, std::vector<T> values) {
        std::size_t n = shape_numel(shape);
        if (values.size() != n)
            throw ShapeError("data length " + std::to_string(values.size()) + " does not match " +
                             shape_str(shape));
        TensorT t;
        t.s_ = std::make_shared<TensorStorage<T>>();
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(values);
        return t;
    }

    static TensorT randn(Shape shape, RandomSource& rng, double sigma = 1.0, double mean = 0.0) {
        TensorT t = zeros(std::move(shape));
        for (auto& v : t.s_->data) v = static_cast<T>(rng.normal(mean, sigma));
        return t;
    }

    bool valid() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    int ndim() const { return static_cast<int>(s_->shape.size()); }
    int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return s_->data.size(); }

    std::vector<T>& data() { return s_->data; }
    const std::vector<T>& data() const { return s_->data; }

    bool requires_grad() const { return s_ && s_->requires_grad; }
    TensorT& set_requires_grad(bool on = true) {
        s_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return s_ && !s_->grad.empty(); }
    void ensure_grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    }
    std::vector<T>& grad() {
        if (s_->grad.empty()) throw ValueError("grad not allocated");
        return s_->grad;
    }
    const std::vector<T>& grad() const {
        if (s_->grad.empty()) throw ValueError("grad not allocated");
        return s_->grad;
    }
    void zero_grad() {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }

    T scalar_value() const {
        if (numel() != 1) throw ShapeError("scalar_value on tensor " + shape_str(shape()));
        return s_->data[0];
    }

    // Deep copy; grad buffer is not copied.
    TensorT clone() const {
        TensorT t;
        t.s_ = std::make_shared<TensorStorage<T>>();
        t.s_->shape = s_->shape;
        t.s_->data = s_->data;
        t.s_->requires_grad = s_->requires_grad;
        return t;
    }

    std::shared_ptr<TensorStorage<T>> storage() const { return s_; }

private:
    std::shared_ptr<TensorStorage<T>> s_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Records primitive applications in topological order; backward() replays
// them in reverse, accumulating additively into .grad of every participant.
template <typename T>
class Tape {
public:
    void record(const char* op, const std::shared_ptr<TensorStorage<T>>& out,
                std::function<void()> back) {
        produced_.insert(out.get());
        touched_.push_back(out);
        nodes_.push_back(Node{op, std::move(back)});
    }

    void track(const std::shared_ptr<TensorStorage<T>>& s) { touched_.push_back(s); }

    bool contains(const TensorStorage<T>* s) const { return produced_.count(s) != 0; }
    std::size_t size() const { return nodes_.size(); }

    void run_backward(TensorT<T>& loss) {
        if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (!contains(loss.storage().get())) throw ValueError("backward: loss was not produced on this tape");
        loss.ensure_grad();
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
        for (const auto& s : touched_) {
            for (T g : s->grad) {
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericalError("non-finite gradient after backward");
            }
        }
    }

private:
    struct Node {
        const char* op;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
    std::unordered_set<const TensorStorage<T>*> produced_;
    std::vector<std::shared_ptr<TensorStorage<T>>> touched_;
};

template <typename T>
void backward(Tape<T>& tape, TensorT<T>& loss) {
    tape.run_backward(loss);
}

namespace detail {

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericalError(std::string(op) + " produced a non-finite value");
    }
}

template <typename T>
inline bool grad_wanted(Tape<T>* tape, std::initializer_list<const TensorT<T>*> ins) {
    if (!tape) return false;
    for (const TensorT<T>* t : ins)
        if (t->valid() && t->requires_grad()) return true;
    return false;
}

// Marks out as a differentiable interior node and pre-allocates the grad
// buffers the closure will accumulate into.
template <typename T>
inline void prepare_node(Tape<T>* tape, TensorT<T>& out, std::initializer_list<TensorT<T>*> ins) {
    out.set_requires_grad(true);
    out.ensure_grad();
    for (TensorT<T>* t : ins) {
        if (t->valid() && t->requires_grad()) {
            t->ensure_grad();
            tape->track(t->storage());
        }
    }
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int i = 0; i < m; ++i) {
        const T* a = A + static_cast<std::size_t>(i) * k;
        T* c = C + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = a[p];
            const T* b = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int i = 0; i < m; ++i) {
        const T* a = A + static_cast<std::size_t>(i) * k;
        T* c = C + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* b = B + static_cast<std::size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int p = 0; p < k; ++p) {
        const T* a = A + static_cast<std::size_t>(p) * m;
        const T* b = B + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            T av = a[i];
            T* c = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// Patch matrix for same-padded stride-1 correlation: P[(ci*k+u)*k+v, y*w+x].
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, T* P) {
    int pad = (k - 1) / 2;
    for (int ci = 0; ci < c; ++ci) {
        const T* xc = x + static_cast<std::size_t>(ci) * h * w;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                T* row = P + (static_cast<std::size_t>(ci) * k * k + u * k + v) *
                                 (static_cast<std::size_t>(h) * w);
                for (int y = 0; y < h; ++y) {
                    int sy = y + u - pad;
                    if (sy < 0 || sy >= h) {
                        for (int xx = 0; xx < w; ++xx) row[y * w + xx] = T(0);
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(sy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + v - pad;
                        row[y * w + xx] = (sx >= 0 && sx < w) ? src[sx] : T(0);
                    }
                }
            }
        }
    }
}

// Transpose of im2col: scatters patch-gradient rows back onto the image grid.
template <typename T>
void col2im_accum(const T* P, int c, int h, int w, int k, T* dx) {
    int pad = (k - 1) / 2;
    for (int ci = 0; ci < c; ++ci) {
        T* dxc = dx + static_cast<std::size_t>(ci) * h * w;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const T* row = P + (static_cast<std::size_t>(ci) * k * k + u * k + v) *
                                       (static_cast<std::size_t>(h) * w);
                for (int y = 0; y < h; ++y) {
                    int sy = y + u - pad;
                    if (sy < 0 || sy >= h) continue;
                    T* dst = dxc + static_cast<std::size_t>(sy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + v - pad;
                        if (sx >= 0 && sx < w) dst[sx] += row[y * w + xx];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Every op allocates a fresh output, validates shapes, rejects
// non-finite results, and (when a tape is supplied and an input requires
// gradients) records an additive backward closure.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape = nullptr) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    TensorT<T> out = TensorT<T>::zeros({m, n});
    detail::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
    detail::check_finite(out.data(), "matmul");
    if (detail::grad_wanted(tape, {&a, &b})) {
        TensorT<T> a2 = a, b2 = b;
        detail::prepare_node(tape, out, {&a2, &b2});
        tape->record("matmul", out.storage(), [a2, b2, out, m, k, n]() mutable {
            const std::vector<T>& d = out.grad();
            if (a2.requires_grad())
                detail::gemm_nt(m, n, k, d.data(), b2.data().data(), a2.grad().data());
            if (b2.requires_grad())
                detail::gemm_tn(k, m, n, a2.data().data(), d.data(), b2.grad().data());
        });
    }
    return out;
}

// y[n,o] = sum_i x[n,i] * W[o,i] (+ b[o]). W follows the [d_out x d_in]
// storage convention used by the network weights.
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  Tape<T>* tape = nullptr) {
    if (x.ndim() != 2 || w.ndim() != 2)
        throw ShapeError("linear expects 2-d input and weight");
    int n = x.dim(0), din = x.dim(1), dout = w.dim(0);
    if (w.dim(1) != din)
        throw ShapeError("linear: weight " + shape_str(w.shape()) + " does not accept input " +
                         shape_str(x.shape()));
    bool with_bias = b.valid();
    if (with_bias && (b.ndim() != 1 || b.dim(0) != dout))
        throw ShapeError("linear: bias shape " + shape_str(b.shape()));
    TensorT<T> out = TensorT<T>::zeros({n, dout});
    detail::gemm_nt(n, din, dout, x.data().data(), w.data().data(), out.data().data());
    if (with_bias) {
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < dout; ++o) out.data()[static_cast<std::size_t>(i) * dout + o] += b.data()[o];
    }
    detail::check_finite(out.data(), "linear");
    bool want = with_bias ? detail::grad_wanted(tape, {&x, &w, &b}) : detail::grad_wanted(tape, {&x, &w});
    if (want) {
        TensorT<T> x2 = x, w2 = w, b2 = b;
        if (with_bias)
            detail::prepare_node(tape, out, {&x2, &w2, &b2});
        else
            detail::prepare_node(tape, out, {&x2, &w2});
        tape->record("linear", out.storage(), [x2, w2, b2, out, n, din, dout, with_bias]() mutable {
            const std::vector<T>& d = out.grad();
            if (x2.requires_grad())
                detail::gemm_nn(n, dout, din, d.data(), w2.data().data(), x2.grad().data());
            if (w2.requires_grad())
                detail::gemm_tn(dout, n, din, d.data(), x2.data().data(), w2.grad().data());
            if (with_bias && b2.requires_grad()) {
                std::vector<T>& db = b2.grad();
                for (int i = 0; i < n; ++i)
                    for (int o = 0; o < dout; ++o) db[o] += d[static_cast<std::size_t>(i) * dout + o];
            }
        });
    }
    return out;
}

// Same-padded stride-1 cross-correlation (no kernel flip). x may be
// [c_in,h,w] or [batch,c_in,h,w]; w is [c_out,c_in,k,k] with odd k.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, Tape<T>* tape = nullptr) {
    if (w.ndim() != 4) throw ShapeError("conv2d: kernel must be 4-d, got " + shape_str(w.shape()));
    bool batched = x.ndim() == 4;
    if (!batched && x.ndim() != 3)
        throw ShapeError("conv2d: input must be 3-d or 4-d, got " + shape_str(x.shape()));
    int nb = batched ? x.dim(0) : 1;
    int cin = x.dim(batched ? 1 : 0), h = x.dim(batched ? 2 : 1), wd = x.dim(batched ? 3 : 2);
    int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin)
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not accept input " +
                         shape_str(x.shape()));
    if (w.dim(3) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size");

    Shape out_shape = batched ? Shape{nb, cout, h, wd} : Shape{cout, h, wd};
    TensorT<T> out = TensorT<T>::zeros(out_shape);
    std::size_t hw = static_cast<std::size_t>(h) * wd;
    std::size_t in_stride = static_cast<std::size_t>(cin) * hw;
    std::size_t out_stride = static_cast<std::size_t>(cout) * hw;
    int krows = cin * k * k;
    std::vector<T> patches(static_cast<std::size_t>(krows) * hw);
    for (int b = 0; b < nb; ++b) {
        detail::im2col(x.data().data() + b * in_stride, cin, h, wd, k, patches.data());
        detail::gemm_nn(cout, krows, static_cast<int>(hw), w.data().data(), patches.data(),
                        out.data().data() + b * out_stride);
    }
    detail::check_finite(out.data(), "conv2d");

    if (detail::grad_wanted(tape, {&x, &w})) {
        TensorT<T> x2 = x, w2 = w;
        detail::prepare_node(tape, out, {&x2, &w2});
        tape->record("conv2d", out.storage(),
                     [x2, w2, out, nb, cin, h, wd, cout, k, hw, in_stride, out_stride, krows]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T> patches(static_cast<std::size_t>(krows) * hw);
            for (int b = 0; b < nb; ++b) {
                const T* dout_b = d.data() + b * out_stride;
                if (w2.requires_grad()) {
                    detail::im2col(x2.data().data() + b * in_stride, cin, h, wd, k, patches.data());
                    detail::gemm_nt(cout, static_cast<int>(hw), krows, dout_b, patches.data(),
                                    w2.grad().data());
                }
                if (x2.requires_grad()) {
                    std::fill(patches.begin(), patches.end(), T(0));
                    detail::gemm_tn(krows, cout, static_cast<int>(hw), w2.data().data(), dout_b,
                                    patches.data());
                    detail::col2im_accum(patches.data(), cin, h, wd, k, x2.grad().data() + b * in_stride);
                }
            }
        });
    }
    return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
TensorT<T> binary_pointwise(const char* name, const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape,
                            Fwd fwd, Bwd bwd) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
    check_finite(out.data(), name);
    if (grad_wanted(tape, {&a, &b})) {
        TensorT<T> a2 = a, b2 = b;
        prepare_node(tape, out, {&a2, &b2});
        tape->record(name, out.storage(), [a2, b2, out, n, bwd]() mutable {
            const std::vector<T>& d = out.grad();
            for (std::size_t i = 0; i < n; ++i) bwd(d[i], a2, b2, i);
        });
    }
    return out;
}

}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape = nullptr) {
    return detail::binary_pointwise<T>(
        "add", a, b, tape, [](T x, T y) { return x + y; },
        [](T d, TensorT<T>& a2, TensorT<T>& b2, std::size_t i) {
            if (a2.requires_grad()) a2.grad()[i] += d;
            if (b2.requires_grad()) b2.grad()[i] += d;
        });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape = nullptr) {
    return detail::binary_pointwise<T>(
        "sub", a, b, tape, [](T x, T y) { return x - y; },
        [](T d, TensorT<T>& a2, TensorT<T>& b2, std::size_t i) {
            if (a2.requires_grad()) a2.grad()[i] += d;
            if (b2.requires_grad()) b2.grad()[i] -= d;
        });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape = nullptr) {
    return detail::binary_pointwise<T>(
        "mul", a, b, tape, [](T x, T y) { return x * y; },
        [](T d, TensorT<T>& a2, TensorT<T>& b2, std::size_t i) {
            if (a2.requires_grad()) a2.grad()[i] += d * b2.data()[i];
            if (b2.requires_grad()) b2.grad()[i] += d * a2.data()[i];
        });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, double s, Tape<T>* tape = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    T sv = static_cast<T>(s);
    std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * sv;
    detail::check_finite(out.data(), "scale");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("scale", out.storage(), [a2, out, n, sv]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += d[i] * sv;
        });
    }
    return out;
}

// relu'(0) := 1: adapters start at exactly zero pre-activation, and the
// conventional zero subgradient would freeze them there.
template <typename T>
TensorT<T> relu(const TensorT<T>& a, Tape<T>* tape = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    detail::check_finite(out.data(), "relu");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("relu", out.storage(), [a2, out, n]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += a2.data()[i] >= T(0) ? d[i] : T(0);
        });
    }
    return out;
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& a, double slope, Tape<T>* tape = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    T sl = static_cast<T>(slope);
    std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        T x = a.data()[i];
        out.data()[i] = x > T(0) ? x : x * sl;
    }
    detail::check_finite(out.data(), "leaky_relu");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("leaky_relu", out.storage(), [a2, out, n, sl]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            for (std::size_t i = 0; i < n; ++i) g[i] += a2.data()[i] >= T(0) ? d[i] : d[i] * sl;
        });
    }
    return out;
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& a, Tape<T>* tape = nullptr) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::tanh(a.data()[i]);
    detail::check_finite(out.data(), "tanh");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("tanh", out.storage(), [a2, out, n]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            for (std::size_t i = 0; i < n; ++i) {
                T y = out.data()[i];
                g[i] += d[i] * (T(1) - y * y);
            }
        });
    }
    return out;
}

namespace detail {

template <typename T>
void spatial_dims(const TensorT<T>& x, const char* op, int& nb, int& c, int& h, int& w, bool& batched) {
    batched = x.ndim() == 4;
    if (!batched && x.ndim() != 3) throw ShapeError(std::string(op) + ": input must be 3-d or 4-d");
    nb = batched ? x.dim(0) : 1;
    c = x.dim(batched ? 1 : 0);
    h = x.dim(batched ? 2 : 1);
    w = x.dim(batched ? 3 : 2);
}

}  // namespace detail

template <typename T>
TensorT<T> upsample2x_nearest(const TensorT<T>& x, Tape<T>* tape = nullptr) {
    int nb, c, h, w;
    bool batched;
    detail::spatial_dims(x, "upsample2x_nearest", nb, c, h, w, batched);
    Shape os = batched ? Shape{nb, c, 2 * h, 2 * w} : Shape{c, 2 * h, 2 * w};
    TensorT<T> out = TensorT<T>::zeros(os);
    std::size_t planes = static_cast<std::size_t>(nb) * c;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.data().data() + p * h * w;
        T* dst = out.data().data() + p * 4 * h * w;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                T v = src[y * w + xx];
                T* d0 = dst + (2 * y) * (2 * w) + 2 * xx;
                d0[0] = v;
                d0[1] = v;
                d0[2 * w] = v;
                d0[2 * w + 1] = v;
            }
    }
    detail::check_finite(out.data(), "upsample2x_nearest");
    if (detail::grad_wanted(tape, {&x})) {
        TensorT<T> x2 = x;
        detail::prepare_node(tape, out, {&x2});
        tape->record("upsample2x_nearest", out.storage(), [x2, out, planes, h, w]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = x2.grad();
            for (std::size_t p = 0; p < planes; ++p) {
                const T* dd = d.data() + p * 4 * h * w;
                T* gg = g.data() + p * h * w;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const T* d0 = dd + (2 * y) * (2 * w) + 2 * xx;
                        gg[y * w + xx] += d0[0] + d0[1] + d0[2 * w] + d0[2 * w + 1];
                    }
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> avgpool2x(const TensorT<T>& x, Tape<T>* tape = nullptr) {
    int nb, c, h, w;
    bool batched;
    detail::spatial_dims(x, "avgpool2x", nb, c, h, w, batched);
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avgpool2x: spatial extents must be even");
    int oh = h / 2, ow = w / 2;
    Shape os = batched ? Shape{nb, c, oh, ow} : Shape{c, oh, ow};
    TensorT<T> out = TensorT<T>::zeros(os);
    std::size_t planes = static_cast<std::size_t>(nb) * c;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.data().data() + p * h * w;
        T* dst = out.data().data() + p * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const T* s0 = src + (2 * y) * w + 2 * xx;
                dst[y * ow + xx] = (s0[0] + s0[1] + s0[w] + s0[w + 1]) * T(0.25);
            }
    }
    if (detail::grad_wanted(tape, {&x})) {
        TensorT<T> x2 = x;
        detail::prepare_node(tape, out, {&x2});
        tape->record("avgpool2x", out.storage(), [x2, out, planes, h, w, oh, ow]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = x2.grad();
            for (std::size_t p = 0; p < planes; ++p) {
                const T* dd = d.data() + p * oh * ow;
                T* gg = g.data() + p * h * w;
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        T q = dd[y * ow + xx] * T(0.25);
                        T* g0 = gg + (2 * y) * w + 2 * xx;
                        g0[0] += q;
                        g0[1] += q;
                        g0[w] += q;
                        g0[w + 1] += q;
                    }
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a, Tape<T>* tape = nullptr) {
    TensorT<T> out = TensorT<T>::zeros({1});
    T acc = T(0);
    for (T v : a.data()) acc += v;
    out.data()[0] = acc;
    detail::check_finite(out.data(), "sum");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("sum", out.storage(), [a2, out]() mutable {
            T d = out.grad()[0];
            for (T& g : a2.grad()) g += d;
        });
    }
    return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a, Tape<T>* tape = nullptr) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    TensorT<T> out = TensorT<T>::zeros({1});
    T acc = T(0);
    for (T v : a.data()) acc += v;
    T inv = T(1) / static_cast<T>(a.numel());
    out.data()[0] = acc * inv;
    detail::check_finite(out.data(), "mean");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("mean", out.storage(), [a2, out, inv]() mutable {
            T d = out.grad()[0] * inv;
            for (T& g : a2.grad()) g += d;
        });
    }
    return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape, Tape<T>* tape = nullptr) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    TensorT<T> out = TensorT<T>::from_data(std::move(shape), a.data());
    detail::check_finite(out.data(), "reshape");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        tape->record("reshape", out.storage(), [a2, out]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
        });
    }
    return out;
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    }
    return st;
}

}  // namespace detail

template <typename T>
TensorT<T> permute(const TensorT<T>& a, const std::vector<int>& perm, Tape<T>* tape = nullptr) {
    int nd = a.ndim();
    if (static_cast<int>(perm.size()) != nd) throw ShapeError("permute: axis list length mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    Shape os(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= nd || seen[static_cast<std::size_t>(p)]) throw ShapeError("permute: invalid axis list");
        seen[static_cast<std::size_t>(p)] = true;
        os[static_cast<std::size_t>(i)] = a.dim(p);
    }
    TensorT<T> out = TensorT<T>::zeros(os);
    auto in_strides = detail::row_major_strides(a.shape());
    auto out_strides = detail::row_major_strides(os);
    std::size_t n = a.numel();
    std::vector<int> idx(static_cast<std::size_t>(nd), 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t src = 0;
        for (int i = 0; i < nd; ++i)
            src += static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) *
                   in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        out.data()[flat] = a.data()[src];
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] < os[static_cast<std::size_t>(i)]) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
    detail::check_finite(out.data(), "permute");
    if (detail::grad_wanted(tape, {&a})) {
        TensorT<T> a2 = a;
        detail::prepare_node(tape, out, {&a2});
        std::vector<int> perm_copy = perm;
        tape->record("permute", out.storage(), [a2, out, perm_copy, os, in_strides, nd]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = a2.grad();
            std::vector<int> idx(static_cast<std::size_t>(nd), 0);
            for (std::size_t flat = 0; flat < d.size(); ++flat) {
                std::size_t src = 0;
                for (int i = 0; i < nd; ++i)
                    src += static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) *
                           in_strides[static_cast<std::size_t>(perm_copy[static_cast<std::size_t>(i)])];
                g[src] += d[flat];
                for (int i = nd - 1; i >= 0; --i) {
                    if (++idx[static_cast<std::size_t>(i)] < os[static_cast<std::size_t>(i)]) break;
                    idx[static_cast<std::size_t>(i)] = 0;
                }
            }
        });
    }
    return out;
}

// out[b,c,:,:] = x[b,c,:,:] * s[b,c] — per-sample channel modulation.
template <typename T>
TensorT<T> scale_channels(const TensorT<T>& x, const TensorT<T>& s, Tape<T>* tape = nullptr) {
    if (x.ndim() != 4 || s.ndim() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1))
        throw ShapeError("scale_channels: got " + shape_str(x.shape()) + " with scales " +
                         shape_str(s.shape()));
    int nb = x.dim(0), c = x.dim(1);
    std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    for (int b = 0; b < nb; ++b)
        for (int ci = 0; ci < c; ++ci) {
            T sv = s.data()[static_cast<std::size_t>(b) * c + ci];
            const T* src = x.data().data() + (static_cast<std::size_t>(b) * c + ci) * hw;
            T* dst = out.data().data() + (static_cast<std::size_t>(b) * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * sv;
        }
    detail::check_finite(out.data(), "scale_channels");
    if (detail::grad_wanted(tape, {&x, &s})) {
        TensorT<T> x2 = x, s2 = s;
        detail::prepare_node(tape, out, {&x2, &s2});
        tape->record("scale_channels", out.storage(), [x2, s2, out, nb, c, hw]() mutable {
            const std::vector<T>& d = out.grad();
            for (int b = 0; b < nb; ++b)
                for (int ci = 0; ci < c; ++ci) {
                    std::size_t base = (static_cast<std::size_t>(b) * c + ci) * hw;
                    T sv = s2.data()[static_cast<std::size_t>(b) * c + ci];
                    if (x2.requires_grad()) {
                        std::vector<T>& gx = x2.grad();
                        for (std::size_t i = 0; i < hw; ++i) gx[base + i] += d[base + i] * sv;
                    }
                    if (s2.requires_grad()) {
                        T acc = T(0);
                        for (std::size_t i = 0; i < hw; ++i) acc += d[base + i] * x2.data()[base + i];
                        s2.grad()[static_cast<std::size_t>(b) * c + ci] += acc;
                    }
                }
        });
    }
    return out;
}

template <typename T>
TensorT<T> add_channel_bias(const TensorT<T>& x, const TensorT<T>& b, Tape<T>* tape = nullptr) {
    if (x.ndim() != 4 || b.ndim() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("add_channel_bias: got " + shape_str(x.shape()) + " with bias " +
                         shape_str(b.shape()));
    int nb = x.dim(0), c = x.dim(1);
    std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    for (int bi = 0; bi < nb; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            T bv = b.data()[static_cast<std::size_t>(ci)];
            std::size_t base = (static_cast<std::size_t>(bi) * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) out.data()[base + i] = x.data()[base + i] + bv;
        }
    detail::check_finite(out.data(), "add_channel_bias");
    if (detail::grad_wanted(tape, {&x, &b})) {
        TensorT<T> x2 = x, b2 = b;
        detail::prepare_node(tape, out, {&x2, &b2});
        tape->record("add_channel_bias", out.storage(), [x2, b2, out, nb, c, hw]() mutable {
            const std::vector<T>& d = out.grad();
            for (int bi = 0; bi < nb; ++bi)
                for (int ci = 0; ci < c; ++ci) {
                    std::size_t base = (static_cast<std::size_t>(bi) * c + ci) * hw;
                    if (x2.requires_grad()) {
                        std::vector<T>& gx = x2.grad();
                        for (std::size_t i = 0; i < hw; ++i) gx[base + i] += d[base + i];
                    }
                    if (b2.requires_grad()) {
                        T acc = T(0);
                        for (std::size_t i = 0; i < hw; ++i) acc += d[base + i];
                        b2.grad()[static_cast<std::size_t>(ci)] += acc;
                    }
                }
        });
    }
    return out;
}

// out = x + scale * noise, the noise image broadcast across channels.
// noise is a constant: gradients flow to x and to the scalar scale only.
template <typename T>
TensorT<T> add_noise(const TensorT<T>& x, const TensorT<T>& noise_scale, const TensorT<T>& noise,
                     Tape<T>* tape = nullptr) {
    if (x.ndim() != 4 || noise_scale.numel() != 1)
        throw ShapeError("add_noise: expects 4-d input and scalar scale");
    if (noise.ndim() != 4 || noise.dim(0) != x.dim(0) || noise.dim(1) != 1 ||
        noise.dim(2) != x.dim(2) || noise.dim(3) != x.dim(3))
        throw ShapeError("add_noise: noise " + shape_str(noise.shape()) + " does not match input " +
                         shape_str(x.shape()));
    int nb = x.dim(0), c = x.dim(1);
    std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    TensorT<T> out = TensorT<T>::zeros(x.shape());
    T sv = noise_scale.data()[0];
    for (int bi = 0; bi < nb; ++bi) {
        const T* nz = noise.data().data() + static_cast<std::size_t>(bi) * hw;
        for (int ci = 0; ci < c; ++ci) {
            std::size_t base = (static_cast<std::size_t>(bi) * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) out.data()[base + i] = x.data()[base + i] + sv * nz[i];
        }
    }
    detail::check_finite(out.data(), "add_noise");
    if (detail::grad_wanted(tape, {&x, &noise_scale})) {
        TensorT<T> x2 = x, s2 = noise_scale, n2 = noise;
        detail::prepare_node(tape, out, {&x2, &s2});
        tape->record("add_noise", out.storage(), [x2, s2, n2, out, nb, c, hw]() mutable {
            const std::vector<T>& d = out.grad();
            for (int bi = 0; bi < nb; ++bi) {
                const T* nz = n2.data().data() + static_cast<std::size_t>(bi) * hw;
                for (int ci = 0; ci < c; ++ci) {
                    std::size_t base = (static_cast<std::size_t>(bi) * c + ci) * hw;
                    if (x2.requires_grad()) {
                        std::vector<T>& gx = x2.grad();
                        for (std::size_t i = 0; i < hw; ++i) gx[base + i] += d[base + i];
                    }
                    if (s2.requires_grad()) {
                        T acc = T(0);
                        for (std::size_t i = 0; i < hw; ++i) acc += d[base + i] * nz[i];
                        s2.grad()[0] += acc;
                    }
                }
            }
        });
    }
    return out;
}

// Replicates [c,h,w] across a batch axis; gradient sums back over the batch.
template <typename T>
TensorT<T> tile_batch(const TensorT<T>& x, int nb, Tape<T>* tape = nullptr) {
    if (x.ndim() != 3) throw ShapeError("tile_batch expects a 3-d tensor");
    if (nb <= 0) throw ValueError("tile_batch: batch must be positive");
    std::size_t n = x.numel();
    TensorT<T> out = TensorT<T>::zeros({nb, x.dim(0), x.dim(1), x.dim(2)});
    for (int b = 0; b < nb; ++b)
        std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<std::size_t>(b) * n);
    detail::check_finite(out.data(), "tile_batch");
    if (detail::grad_wanted(tape, {&x})) {
        TensorT<T> x2 = x;
        detail::prepare_node(tape, out, {&x2});
        tape->record("tile_batch", out.storage(), [x2, out, nb, n]() mutable {
            const std::vector<T>& d = out.grad();
            std::vector<T>& g = x2.grad();
            for (int b = 0; b < nb; ++b) {
                const T* db = d.data() + static_cast<std::size_t>(b) * n;
                for (std::size_t i = 0; i < n; ++i) g[i] += db[i];
            }
        });
    }
    return out;
}

// Per-sample demodulation coefficients d[b,o] = 1/sqrt(sum_{i,u,v}(w*s)^2+eps).
template <typename T>
TensorT<T> demod_scales(const TensorT<T>& w, const TensorT<T>& s, double eps = 1e-8,
                        Tape<T>* tape = nullptr) {
    if (w.ndim() != 4 || s.ndim() != 2 || s.dim(1) != w.dim(1))
        throw ShapeError("demod_scales: kernel " + shape_str(w.shape()) + " with styles " +
                         shape_str(s.shape()));
    int nb = s.dim(0), cout = w.dim(0), cin = w.dim(1);
    int kk = w.dim(2) * w.dim(3);
    // wsq[o,i] = sum_{u,v} w^2
    std::vector<T> wsq(static_cast<std::size_t>(cout) * cin, T(0));
    for (int o = 0; o < cout; ++o)
        for (int i = 0; i < cin; ++i) {
            const T* wp = w.data().data() + (static_cast<std::size_t>(o) * cin + i) * kk;
            T acc = T(0);
            for (int q = 0; q < kk; ++q) acc += wp[q] * wp[q];
            wsq[static_cast<std::size_t>(o) * cin + i] = acc;
        }
    TensorT<T> out = TensorT<T>::zeros({nb, cout});
    T ev = static_cast<T>(eps);
    for (int b = 0; b < nb; ++b)
        for (int o = 0; o < cout; ++o) {
            T acc = T(0);
            for (int i = 0; i < cin; ++i) {
                T sv = s.data()[static_cast<std::size_t>(b) * cin + i];
                acc += wsq[static_cast<std::size_t>(o) * cin + i] * sv * sv;
            }
            out.data()[static_cast<std::size_t>(b) * cout + o] = T(1) / std::sqrt(acc + ev);
        }
    detail::check_finite(out.data(), "demod_scales");
    if (detail::grad_wanted(tape, {&w, &s})) {
        TensorT<T> w2 = w, s2 = s;
        detail::prepare_node(tape, out, {&w2, &s2});
        tape->record("demod_scales", out.storage(), [w2, s2, out, wsq, nb, cout, cin, kk]() mutable {
            const std::vector<T>& d = out.grad();
            // d(out)/d(t) = -out^3/2 with t the sum of squares
            for (int b = 0; b < nb; ++b)
                for (int o = 0; o < cout; ++o) {
                    std::size_t bo = static_cast<std::size_t>(b) * cout + o;
                    T dv = d[bo];
                    if (dv == T(0)) continue;
                    T y = out.data()[bo];
                    T dt = -dv * y * y * y * T(0.5);
                    for (int i = 0; i < cin; ++i) {
                        T sv = s2.data()[static_cast<std::size_t>(b) * cin + i];
                        if (w2.requires_grad()) {
                            const T* wp = w2.data().data() + (static_cast<std::size_t>(o) * cin + i) * kk;
                            T* gw = w2.grad().data() + (static_cast<std::size_t>(o) * cin + i) * kk;
                            T f = dt * T(2) * sv * sv;
                            for (int q = 0; q < kk; ++q) gw[q] += f * wp[q];
                        }
                        if (s2.requires_grad()) {
                            s2.grad()[static_cast<std::size_t>(b) * cin + i] +=
                                dt * T(2) * sv * wsq[static_cast<std::size_t>(o) * cin + i];
                        }
                    }
                }
        });
    }
    return out;
}

template <typename T>
void zero_grads(std::vector<TensorT<T>>& params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace colora
