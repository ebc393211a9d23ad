#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "univip/common.hpp"

// Small dense tensor with reverse-mode autodiff. Templated on the scalar:
// float for training throughput, double for gradient checks and solver
// oracles. Graphs are built eagerly; each op records a closure that pushes
// its output gradient into the parents. Gradient accumulation is additive,
// so callers zero leaf grads between steps. Every op checks its output for
// NaN/Inf and throws NumericError instead of letting poison spread.

namespace univip {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

namespace detail {

template <typename T>
struct NodeT {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // sized lazily, only when a gradient first arrives
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<NodeT>> parents;
    // Takes the node itself so the closure can read self.grad. It captures
    // raw parent pointers; `parents` keeps them alive, and avoiding
    // shared_ptr captures avoids reference cycles.
    std::function<void(NodeT&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

} // namespace detail

template <typename T>
class TensorT {
public:
    using Node = detail::NodeT<T>;

    TensorT() : n_(std::make_shared<Node>()) {}

    static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
        }
        detail::check_finite(data, "from_data");
        TensorT t;
        t.n_->shape = std::move(shape);
        t.n_->data = std::move(data);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(shape_numel(shape), T(0));
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> d(shape_numel(shape), value);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT scalar(T value, bool requires_grad = false) {
        return from_data({}, {value}, requires_grad);
    }

    const Shape& shape() const { return n_->shape; }
    std::size_t size() const { return n_->data.size(); }
    std::size_t ndim() const { return n_->shape.size(); }

    std::vector<T>& data() { return n_->data; }
    const std::vector<T>& data() const { return n_->data; }

    // Gradient after backward(); zeros if nothing ever flowed here.
    std::vector<T> grad() const {
        if (n_->grad.size() == n_->data.size()) return n_->grad;
        return std::vector<T>(n_->data.size(), T(0));
    }

    bool requires_grad() const { return n_->requires_grad; }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " values");
        return n_->data[0];
    }

    void zero_grad() { n_->grad.assign(n_->data.size(), T(0)); }

    Node* node() const { return n_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return n_; }

private:
    std::shared_ptr<Node> n_;

    template <typename U>
    friend TensorT<U> make_op(Shape shape, std::vector<U> data, const char* op,
                              const std::vector<TensorT<U>>& parents,
                              std::function<void(detail::NodeT<U>&)> fn);
};

// Builds an op node. The backward closure is only retained when some parent
// actually needs gradients, so grad-free forwards (the target network, probe
// feature extraction) pay nothing for graph bookkeeping.
template <typename T>
TensorT<T> make_op(Shape shape, std::vector<T> data, const char* op,
                   const std::vector<TensorT<T>>& parents,
                   std::function<void(detail::NodeT<T>&)> fn) {
    detail::check_finite(data, op);
    TensorT<T> out;
    out.n_->shape = std::move(shape);
    out.n_->data = std::move(data);
    out.n_->op = op;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    out.n_->requires_grad = needs;
    if (needs) {
        out.n_->parents.reserve(parents.size());
        for (const auto& p : parents) out.n_->parents.push_back(p.node_ptr());
        out.n_->backward_fn = std::move(fn);
    }
    return out;
}

// --- broadcasting (trailing-dimension alignment) ----------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        std::size_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

// Offset map from output positions into a broadcast parent: stride 0 on
// broadcast axes, so the odometer walk below lands on the right element.
struct BcastMap {
    std::vector<std::size_t> strides;

    BcastMap() = default;
    BcastMap(const Shape& out, const Shape& in) {
        strides.assign(out.size(), 0);
        std::size_t s = 1;
        for (std::size_t k = 0; k < in.size(); ++k) {
            std::size_t i = in.size() - 1 - k;
            std::size_t o = out.size() - 1 - k;
            strides[o] = (in[i] == 1) ? 0 : s;
            s *= in[i];
        }
    }
};

template <typename F>
inline void for_each_bcast(const Shape& out, const BcastMap& ma, const BcastMap& mb, F&& fn) {
    std::size_t n = shape_numel(out);
    std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        fn(flat, ia, ib);
        for (std::size_t k = rank; k-- > 0;) {
            idx[k]++;
            ia += ma.strides[k];
            ib += mb.strides[k];
            if (idx[k] < out[k]) break;
            ia -= ma.strides[k] * out[k];
            ib -= mb.strides[k] * out[k];
            idx[k] = 0;
        }
    }
}

} // namespace detail

// --- elementwise arithmetic ---------------------------------------------------

namespace detail {

enum class EwKind { Add, Sub, Mul };

template <typename T>
TensorT<T> ewise(const TensorT<T>& a, const TensorT<T>& b, EwKind kind, const char* name) {
    Shape os = broadcast_shape(a.shape(), b.shape());
    BcastMap ma(os, a.shape()), mb(os, b.shape());
    std::vector<T> out(shape_numel(os));
    const T* av = a.data().data();
    const T* bv = b.data().data();
    switch (kind) {
        case EwKind::Add:
            for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] + bv[ib]; });
            break;
        case EwKind::Sub:
            for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] - bv[ib]; });
            break;
        case EwKind::Mul:
            for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = av[ia] * bv[ib]; });
            break;
    }
    NodeT<T>* pa = a.node();
    NodeT<T>* pb = b.node();
    return make_op<T>(os, std::move(out), name, {a, b},
                      [os, ma, mb, pa, pb, kind](NodeT<T>& self) {
        bool ga = pa->requires_grad;
        bool gb = pb->requires_grad;
        if (ga) pa->ensure_grad();
        if (gb) pb->ensure_grad();
        const T* g = self.grad.data();
        switch (kind) {
            case EwKind::Add:
                for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                    if (ga) pa->grad[ia] += g[o];
                    if (gb) pb->grad[ib] += g[o];
                });
                break;
            case EwKind::Sub:
                for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                    if (ga) pa->grad[ia] += g[o];
                    if (gb) pb->grad[ib] -= g[o];
                });
                break;
            case EwKind::Mul:
                for_each_bcast(os, ma, mb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                    if (ga) pa->grad[ia] += g[o] * pb->data[ib];
                    if (gb) pb->grad[ib] += g[o] * pa->data[ia];
                });
                break;
        }
    });
}

} // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::ewise(a, b, detail::EwKind::Add, "add");
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::ewise(a, b, detail::EwKind::Sub, "sub");
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::ewise(a, b, detail::EwKind::Mul, "mul");
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T k) {
    std::vector<T> out(a.data());
    for (T& v : out) v *= k;
    auto* pa = a.node();
    return make_op<T>(a.shape(), std::move(out), "scale", {a}, [pa, k](detail::NodeT<T>& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += k * self.grad[i];
    });
}

template <typename T>
TensorT<T> neg(const TensorT<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    std::vector<T> out(a.data());
    for (T& v : out) v = v > T(0) ? v : T(0);
    auto* pa = a.node();
    return make_op<T>(a.shape(), std::move(out), "relu", {a}, [pa](detail::NodeT<T>& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa->data[i] > T(0)) pa->grad[i] += self.grad[i];
        }
    });
}

// --- matmul -------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    std::vector<T> out(M * N, T(0));
    {
        const T* av = a.data().data();
        const T* bv = b.data().data();
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t k = 0; k < K; ++k) {
                T s = av[m * K + k];
                const T* brow = bv + k * N;
                T* orow = out.data() + m * N;
                for (std::size_t n = 0; n < N; ++n) orow[n] += s * brow[n];
            }
        }
    }
    auto* pa = a.node();
    auto* pb = b.node();
    return make_op<T>({M, N}, std::move(out), "matmul", {a, b},
                      [pa, pb, M, K, N](detail::NodeT<T>& self) {
        const T* g = self.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            const T* bv = pb->data.data();
            for (std::size_t m = 0; m < M; ++m) {
                for (std::size_t k = 0; k < K; ++k) {
                    T s = T(0);
                    const T* grow = g + m * N;
                    const T* brow = bv + k * N;
                    for (std::size_t n = 0; n < N; ++n) s += grow[n] * brow[n];
                    pa->grad[m * K + k] += s;
                }
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            const T* av = pa->data.data();
            for (std::size_t m = 0; m < M; ++m) {
                const T* grow = g + m * N;
                for (std::size_t k = 0; k < K; ++k) {
                    T s = av[m * K + k];
                    T* brow = pb->grad.data() + k * N;
                    for (std::size_t n = 0; n < N; ++n) brow[n] += s * grow[n];
                }
            }
        }
    });
}

// --- 2-D convolution -----------------------------------------------------------

namespace detail {

// Output index range [lo, hi) along one spatial axis for a fixed kernel tap,
// such that in = out*stride - pad + k stays inside [0, extent).
inline void conv_range(std::size_t out_extent, std::size_t in_extent, std::size_t stride,
                       std::size_t pad, std::size_t k, std::size_t& lo, std::size_t& hi) {
    std::ptrdiff_t off = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
    lo = off <= 0 ? 0
                  : static_cast<std::size_t>((off + static_cast<std::ptrdiff_t>(stride) - 1) /
                                             static_cast<std::ptrdiff_t>(stride));
    std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(in_extent) - 1 + off) /
                          static_cast<std::ptrdiff_t>(stride);
    hi = last < 0 ? 0 : std::min(out_extent, static_cast<std::size_t>(last + 1));
    if (lo > hi) lo = hi;
}

} // namespace detail

// input (B,C,H,W), weight (F,C,KH,KW). Zero padding on both sides.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, std::size_t stride,
                  std::size_t pad) {
    if (input.ndim() != 4 || weight.ndim() != 4 || input.shape()[1] != weight.shape()[1]) {
        throw ShapeError("conv2d: incompatible shapes " + shape_str(input.shape()) + " and " +
                         shape_str(weight.shape()));
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    std::size_t B = input.shape()[0], C = input.shape()[1], H = input.shape()[2], W = input.shape()[3];
    std::size_t F = weight.shape()[0], KH = weight.shape()[2], KW = weight.shape()[3];
    if (H + 2 * pad < KH || W + 2 * pad < KW) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    std::size_t OH = (H + 2 * pad - KH) / stride + 1;
    std::size_t OW = (W + 2 * pad - KW) / stride + 1;

    std::vector<T> out(B * F * OH * OW, T(0));
    {
        const T* xv = input.data().data();
        const T* wv = weight.data().data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t f = 0; f < F; ++f) {
                T* oplane = out.data() + (b * F + f) * OH * OW;
                for (std::size_t c = 0; c < C; ++c) {
                    const T* xplane = xv + (b * C + c) * H * W;
                    const T* wbase = wv + ((f * C + c) * KH) * KW;
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                        std::size_t oh_lo, oh_hi;
                        detail::conv_range(OH, H, stride, pad, kh, oh_lo, oh_hi);
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            T wval = wbase[kh * KW + kw];
                            std::size_t ow_lo, ow_hi;
                            detail::conv_range(OW, W, stride, pad, kw, ow_lo, ow_hi);
                            for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                std::size_t ih = oh * stride - pad + kh;
                                const T* xrow = xplane + ih * W + (ow_lo * stride - pad + kw);
                                T* orow = oplane + oh * OW;
                                for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                    orow[ow] += wval * xrow[(ow - ow_lo) * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    auto* px = input.node();
    auto* pw = weight.node();
    return make_op<T>({B, F, OH, OW}, std::move(out), "conv2d", {input, weight},
                      [px, pw, B, C, H, W, F, KH, KW, OH, OW, stride, pad](detail::NodeT<T>& self) {
        const T* g = self.grad.data();
        if (px->requires_grad) {
            px->ensure_grad();
            const T* wv = pw->data.data();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t f = 0; f < F; ++f) {
                    const T* gplane = g + (b * F + f) * OH * OW;
                    for (std::size_t c = 0; c < C; ++c) {
                        T* dxplane = px->grad.data() + (b * C + c) * H * W;
                        const T* wbase = wv + ((f * C + c) * KH) * KW;
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            std::size_t oh_lo, oh_hi;
                            detail::conv_range(OH, H, stride, pad, kh, oh_lo, oh_hi);
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                T wval = wbase[kh * KW + kw];
                                std::size_t ow_lo, ow_hi;
                                detail::conv_range(OW, W, stride, pad, kw, ow_lo, ow_hi);
                                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                    std::size_t ih = oh * stride - pad + kh;
                                    T* dxrow = dxplane + ih * W + (ow_lo * stride - pad + kw);
                                    const T* grow = gplane + oh * OW;
                                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                        dxrow[(ow - ow_lo) * stride] += wval * grow[ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            const T* xv = px->data.data();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t f = 0; f < F; ++f) {
                    const T* gplane = g + (b * F + f) * OH * OW;
                    for (std::size_t c = 0; c < C; ++c) {
                        const T* xplane = xv + (b * C + c) * H * W;
                        T* dwbase = pw->grad.data() + ((f * C + c) * KH) * KW;
                        for (std::size_t kh = 0; kh < KH; ++kh) {
                            std::size_t oh_lo, oh_hi;
                            detail::conv_range(OH, H, stride, pad, kh, oh_lo, oh_hi);
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                std::size_t ow_lo, ow_hi;
                                detail::conv_range(OW, W, stride, pad, kw, ow_lo, ow_hi);
                                T acc = T(0);
                                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                                    std::size_t ih = oh * stride - pad + kh;
                                    const T* xrow = xplane + ih * W + (ow_lo * stride - pad + kw);
                                    const T* grow = gplane + oh * OW;
                                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                                        acc += grow[ow] * xrow[(ow - ow_lo) * stride];
                                    }
                                }
                                dwbase[kh * KW + kw] += acc;
                            }
                        }
                    }
                }
            }
        }
    });
}

// --- normalization and similarity ----------------------------------------------

// L2-normalizes along the last axis. Rows whose norm falls below eps are
// divided by eps instead (treated as constant in the backward pass), so the
// op itself never faults on zero input.
template <typename T>
TensorT<T> l2_normalize(const TensorT<T>& a, T eps = T(1e-12)) {
    if (a.ndim() == 0) throw ShapeError("l2_normalize: needs at least one axis");
    std::size_t L = a.shape().back();
    std::size_t R = a.size() / L;
    std::vector<T> out(a.size());
    std::vector<T> norms(R);
    const T* av = a.data().data();
    for (std::size_t r = 0; r < R; ++r) {
        T s = T(0);
        for (std::size_t j = 0; j < L; ++j) s += av[r * L + j] * av[r * L + j];
        T n = std::sqrt(s);
        norms[r] = n;
        T d = n > eps ? n : eps;
        for (std::size_t j = 0; j < L; ++j) out[r * L + j] = av[r * L + j] / d;
    }
    auto* pa = a.node();
    return make_op<T>(a.shape(), std::move(out), "l2_normalize", {a},
                      [pa, L, R, eps, norms](detail::NodeT<T>& self) {
        pa->ensure_grad();
        const T* g = self.grad.data();
        const T* y = self.data.data();
        for (std::size_t r = 0; r < R; ++r) {
            if (norms[r] > eps) {
                T gy = T(0);
                for (std::size_t j = 0; j < L; ++j) gy += g[r * L + j] * y[r * L + j];
                for (std::size_t j = 0; j < L; ++j) {
                    pa->grad[r * L + j] += (g[r * L + j] - y[r * L + j] * gy) / norms[r];
                }
            } else {
                for (std::size_t j = 0; j < L; ++j) pa->grad[r * L + j] += g[r * L + j] / eps;
            }
        }
    });
}

// Scalar cosine similarity of two same-shape tensors (flattened). Unlike
// l2_normalize this refuses degenerate inputs: a near-zero feature here
// means representation collapse, which we want to fail loudly.
template <typename T>
TensorT<T> cosine_similarity(const TensorT<T>& a, const TensorT<T>& b, T eps = T(1e-12)) {
    if (a.shape() != b.shape()) {
        throw ShapeError("cosine_similarity: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::size_t n = a.size();
    const T* av = a.data().data();
    const T* bv = b.data().data();
    T dot = T(0), sa = T(0), sb = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        dot += av[i] * bv[i];
        sa += av[i] * av[i];
        sb += bv[i] * bv[i];
    }
    T na = std::sqrt(sa), nb = std::sqrt(sb);
    if (na < eps || nb < eps) {
        throw NumericError("cosine_similarity: input with near-zero norm");
    }
    T c = dot / (na * nb);
    auto* pa = a.node();
    auto* pb = b.node();
    return make_op<T>({}, {c}, "cosine", {a, b}, [pa, pb, n, na, nb, c](detail::NodeT<T>& self) {
        T g = self.grad[0];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                pa->grad[i] += g * (pb->data[i] / (na * nb) - c * pa->data[i] / (na * na));
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                pb->grad[i] += g * (pa->data[i] / (na * nb) - c * pb->data[i] / (nb * nb));
            }
        }
    });
}

// --- shape ops -----------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    }
    std::vector<T> out(a.data());
    auto* pa = a.node();
    return make_op<T>(std::move(new_shape), std::move(out), "reshape", {a},
                      [pa](detail::NodeT<T>& self) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, std::size_t axis = 0) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i) {
            if (i != axis && p.shape()[i] != s0[i]) {
                throw ShapeError("concat: shape mismatch at axis " + std::to_string(i));
            }
        }
        axis_total += p.shape()[axis];
    }
    Shape os = s0;
    os[axis] = axis_total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    std::vector<T> out(shape_numel(os));
    std::size_t offset = 0; // in units of axis slots
    std::vector<std::size_t> part_axis(parts.size());
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        std::size_t pa_axis = parts[pi].shape()[axis];
        part_axis[pi] = pa_axis;
        const T* src = parts[pi].data().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(src + o * pa_axis * inner, src + (o + 1) * pa_axis * inner,
                      out.data() + (o * axis_total + offset) * inner);
        }
        offset += pa_axis;
    }

    std::vector<detail::NodeT<T>*> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return make_op<T>(os, std::move(out), "concat", parts,
                      [pnodes, part_axis, outer, inner, axis_total](detail::NodeT<T>& self) {
        const T* g = self.grad.data();
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
            auto* p = pnodes[pi];
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* gsrc = g + (o * axis_total + offset) * inner;
                    T* dst = p->grad.data() + o * part_axis[pi] * inner;
                    for (std::size_t i = 0; i < part_axis[pi] * inner; ++i) dst[i] += gsrc[i];
                }
            }
            offset += part_axis[pi];
        }
    });
}

// --- reductions ------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
    T s = T(0);
    for (T v : a.data()) s += v;
    auto* pa = a.node();
    return make_op<T>({}, {s}, "sum", {a}, [pa](detail::NodeT<T>& self) {
        pa->ensure_grad();
        T g = self.grad[0];
        for (T& d : pa->grad) d += g;
    });
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
    if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
    T s = T(0);
    for (T v : a.data()) s += v;
    T n = static_cast<T>(a.size());
    auto* pa = a.node();
    return make_op<T>({}, {s / n}, "mean", {a}, [pa, n](detail::NodeT<T>& self) {
        pa->ensure_grad();
        T g = self.grad[0] / n;
        for (T& d : pa->grad) d += g;
    });
}

// (B,C,H,W) -> (B,C), mean over the spatial axes.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& a) {
    if (a.ndim() != 4) throw ShapeError("global_avg_pool: expected (B,C,H,W), got " + shape_str(a.shape()));
    std::size_t B = a.shape()[0], C = a.shape()[1], HW = a.shape()[2] * a.shape()[3];
    if (HW == 0) throw ShapeError("global_avg_pool: empty spatial extent");
    std::vector<T> out(B * C);
    const T* av = a.data().data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        T s = T(0);
        for (std::size_t i = 0; i < HW; ++i) s += av[bc * HW + i];
        out[bc] = s / static_cast<T>(HW);
    }
    auto* pa = a.node();
    return make_op<T>({B, C}, std::move(out), "gap", {a}, [pa, HW](detail::NodeT<T>& self) {
        pa->ensure_grad();
        for (std::size_t bc = 0; bc < self.grad.size(); ++bc) {
            T g = self.grad[bc] / static_cast<T>(HW);
            for (std::size_t i = 0; i < HW; ++i) pa->grad[bc * HW + i] += g;
        }
    });
}

// --- graph control -----------------------------------------------------------------

// Copies values out of the graph; gradients never flow through the result.
template <typename T>
TensorT<T> detach(const TensorT<T>& a) {
    return TensorT<T>::from_data(a.shape(), a.data(), false);
}

// Reverse pass from a scalar loss. Accumulates into leaf grads (additively,
// so repeated calls on the same graph double-count by design; callers zero
// grads between steps).
template <typename T>
void backward(const TensorT<T>& loss) {
    using Node = detail::NodeT<T>;
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw UsageError("backward: graph has no gradient-requiring leaves");
    }

    // Iterative post-order DFS; the reversed order processes every node
    // before the nodes it consumed, and its determinism fixes the float
    // accumulation order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node(), 0});
    visited.insert(loss.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    // Interior grads are scratch space for this pass; only leaves accumulate
    // across calls. A second backward on the same graph therefore adds one
    // more full gradient into the leaves.
    for (Node* n : order) {
        if (n->backward_fn) n->grad.assign(n->data.size(), T(0));
    }
    Node* root = loss.node();
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

} // namespace univip
