#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "harunet/kernels.hpp"

// Reverse-mode tape over Array4 values. Each op returns a fresh node holding
// its result plus a closure that routes the node's gradient to its parents.
// Nodes that do not require gradients drop their parent links immediately, so
// pure inference keeps only the live frontier of activations in memory.

namespace harunet {

template <typename T>
struct Node;

template <typename T>
using Tensor = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Array4<T> value;
    Array4<T> grad;  // empty until touched by backward
    bool requires_grad = false;
    std::string name;  // set for parameters only
    std::vector<Tensor<T>> parents;
    std::function<void(Node<T>&)> pull;

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Array4<T>(value.n, value.c, value.h, value.w);
    }
};

/// Multiply-accumulate tally for whatever forward ops run while a recorder is
/// installed; backward passes and raw kernels never record.
struct MacRecorder {
    uint64_t total = 0;
};

inline thread_local MacRecorder* active_mac_recorder = nullptr;

inline void record_macs(uint64_t n) {
    if (active_mac_recorder) active_mac_recorder->total += n;
}

struct MacScope {
    MacRecorder rec;
    MacRecorder* prev;
    MacScope() : prev(active_mac_recorder) { active_mac_recorder = &rec; }
    ~MacScope() { active_mac_recorder = prev; }
    MacScope(const MacScope&) = delete;
    MacScope& operator=(const MacScope&) = delete;
};

template <typename T>
Tensor<T> constant(Array4<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
}

template <typename T, typename F>
Tensor<T> make_node(Array4<T> value, std::vector<Tensor<T>> parents, F&& pull) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    for (const auto& p : parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->pull = std::forward<F>(pull);
    }
    return n;
}

template <typename T>
void accumulate(Node<T>& dst, const Array4<T>& g) {
    dst.ensure_grad();
    const int64_t cnt = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) dst.grad.v[i] += g.v[i];
}

/// Reverse sweep from a scalar loss; gradients accumulate into every
/// grad-requiring node reachable through the tape.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss->value.size() != 1)
        throw ValidationError("backward: loss must be a scalar");
    if (!loss->requires_grad)
        throw ValidationError("backward: loss has no recorded dependency on parameters");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad.v[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->pull) (*it)->pull(**it);
}

// ---- differentiable ops ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
    auto y = kern::conv_fwd(x->value, w->value, b ? &b->value : nullptr, stride, pad);
    record_macs(static_cast<uint64_t>(w->value.h) * w->value.w * w->value.c * w->value.n *
                y.h * y.w * y.n);
    const int hi = x->value.h, wi = x->value.w, kh = w->value.h, kw = w->value.w;
    std::vector<Tensor<T>> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(y), std::move(parents), [=](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        if (xn.requires_grad)
            accumulate(xn, kern::conv_gx(self.grad, wn.value, stride, pad, hi, wi));
        if (wn.requires_grad)
            accumulate(wn, kern::conv_gw(xn.value, self.grad, stride, pad, kh, kw));
        if (self.parents.size() > 2 && self.parents[2]->requires_grad)
            accumulate(*self.parents[2], kern::sum_nhw(self.grad));
    });
}

/// Weights are stored (C_in, C_out, kh, kw); the op is the exact adjoint of
/// conv2d with the matching geometry.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride, int pad) {
    if (w->value.n != x->value.c)
        throw ValidationError("conv_transpose2d: weight/input channel mismatch");
    const int ho = (x->value.h - 1) * stride - 2 * pad + w->value.h;
    const int wo = (x->value.w - 1) * stride - 2 * pad + w->value.w;
    if (ho < 1 || wo < 1) throw ValidationError("conv_transpose2d: empty output");
    auto y = kern::conv_gx(x->value, w->value, stride, pad, ho, wo);
    if (b) {
        const size_t plane = static_cast<size_t>(y.h) * y.w;
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < y.n; ++n)
            for (int c = 0; c < y.c; ++c) {
                T* base = y.data() + y.idx(n, c, 0, 0);
                const T bv = b->value.at(0, c, 0, 0);
                for (size_t i = 0; i < plane; ++i) base[i] += bv;
            }
    }
    record_macs(static_cast<uint64_t>(w->value.h) * w->value.w * w->value.n * w->value.c *
                x->value.h * x->value.w * x->value.n);
    const int kh = w->value.h, kw = w->value.w;
    std::vector<Tensor<T>> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(y), std::move(parents), [=](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        if (xn.requires_grad)
            accumulate(xn, kern::conv_fwd<T>(self.grad, wn.value, nullptr, stride, pad));
        if (wn.requires_grad)
            accumulate(wn, kern::conv_gw(self.grad, xn.value, stride, pad, kh, kw));
        if (self.parents.size() > 2 && self.parents[2]->requires_grad)
            accumulate(*self.parents[2], kern::sum_nhw(self.grad));
    });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Array4<T> y(x->value.n, x->value.c, x->value.h, x->value.w);
    const int64_t cnt = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) {
        const T v = x->value.v[i];
        y.v[i] = v >= 0 ? v : slope * v;
    }
    return make_node(std::move(y), std::vector<Tensor<T>>{x}, [slope](Node<T>& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        Array4<T> g(self.grad.n, self.grad.c, self.grad.h, self.grad.w);
        const int64_t m = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i)
            g.v[i] = self.grad.v[i] * (xn.value.v[i] >= 0 ? T(1) : slope);
        accumulate(xn, g);
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Array4<T> y(x->value.n, x->value.c, x->value.h, x->value.w);
    const int64_t cnt = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) y.v[i] = T(1) / (T(1) + std::exp(-x->value.v[i]));
    return make_node(std::move(y), std::vector<Tensor<T>>{x}, [](Node<T>& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        Array4<T> g(self.grad.n, self.grad.c, self.grad.h, self.grad.w);
        const int64_t m = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) {
            const T s = self.value.v[i];
            g.v[i] = self.grad.v[i] * s * (T(1) - s);
        }
        accumulate(xn, g);
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a->value.same_shape(b->value)) throw ValidationError("add: shape mismatch");
    Array4<T> y(a->value.n, a->value.c, a->value.h, a->value.w);
    const int64_t cnt = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) y.v[i] = a->value.v[i] + b->value.v[i];
    return make_node(std::move(y), std::vector<Tensor<T>>{a, b}, [](Node<T>& self) {
        for (int k = 0; k < 2; ++k)
            if (self.parents[k]->requires_grad) accumulate(*self.parents[k], self.grad);
    });
}

/// a + alpha * b with a compile-time-constant style scalar weight.
template <typename T>
Tensor<T> add_scaled(const Tensor<T>& a, const Tensor<T>& b, T alpha) {
    if (!a->value.same_shape(b->value)) throw ValidationError("add_scaled: shape mismatch");
    Array4<T> y(a->value.n, a->value.c, a->value.h, a->value.w);
    const int64_t cnt = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) y.v[i] = a->value.v[i] + alpha * b->value.v[i];
    return make_node(std::move(y), std::vector<Tensor<T>>{a, b}, [alpha](Node<T>& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Array4<T> g(self.grad.n, self.grad.c, self.grad.h, self.grad.w);
            const int64_t m = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) g.v[i] = alpha * self.grad.v[i];
            accumulate(*self.parents[1], g);
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    Array4<T> y(x->value.n, x->value.c, x->value.h, x->value.w);
    const int64_t cnt = static_cast<int64_t>(y.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < cnt; ++i) y.v[i] = s * x->value.v[i];
    return make_node(std::move(y), std::vector<Tensor<T>>{x}, [s](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Array4<T> g(self.grad.n, self.grad.c, self.grad.h, self.grad.w);
        const int64_t m = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) g.v[i] = s * self.grad.v[i];
        accumulate(*self.parents[0], g);
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    if (gain->value.c != x->value.c || bias->value.c != x->value.c)
        throw ValidationError("layer_norm: gain/bias channel mismatch");
    Array4<T> y, mu, rstd;
    kern::ln_fwd(x->value, gain->value, bias->value, eps, y, mu, rstd);
    return make_node(std::move(y), std::vector<Tensor<T>>{x, gain, bias},
                     [mu = std::move(mu), rstd = std::move(rstd)](Node<T>& self) {
                         Array4<T> gx, gg, gb;
                         kern::ln_bwd(self.parents[0]->value, self.parents[1]->value, mu, rstd,
                                      self.grad, gx, gg, gb);
                         if (self.parents[0]->requires_grad) accumulate(*self.parents[0], gx);
                         if (self.parents[1]->requires_grad) accumulate(*self.parents[1], gg);
                         if (self.parents[2]->requires_grad) accumulate(*self.parents[2], gb);
                     });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    return make_node(kern::softmax_last_fwd(x->value), std::vector<Tensor<T>>{x},
                     [](Node<T>& self) {
                         if (self.parents[0]->requires_grad)
                             accumulate(*self.parents[0],
                                        kern::softmax_last_bwd(self.value, self.grad));
                     });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const int h = x->value.h, w = x->value.w;
    return make_node(kern::gap_fwd(x->value), std::vector<Tensor<T>>{x}, [h, w](Node<T>& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        Array4<T> g(xn.value.n, xn.value.c, h, w);
        const T inv = T(1) / (static_cast<T>(h) * w);
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < g.n; ++n)
            for (int c = 0; c < g.c; ++c) {
                const T gv = self.grad.at(n, c, 0, 0) * inv;
                T* base = g.data() + g.idx(n, c, 0, 0);
                const size_t cnt = static_cast<size_t>(h) * w;
                for (size_t i = 0; i < cnt; ++i) base[i] = gv;
            }
        accumulate(xn, g);
    });
}

/// x scaled per channel by gates g of shape (N, C, 1, 1).
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& g) {
    if (g->value.n != x->value.n || g->value.c != x->value.c || g->value.h != 1 ||
        g->value.w != 1)
        throw ValidationError("channel_scale: gate shape mismatch");
    return make_node(kern::chanscale_fwd(x->value, g->value), std::vector<Tensor<T>>{x, g},
                     [](Node<T>& self) {
                         auto& xn = *self.parents[0];
                         auto& gn = *self.parents[1];
                         if (xn.requires_grad)
                             accumulate(xn, kern::chanscale_fwd(self.grad, gn.value));
                         if (gn.requires_grad)
                             accumulate(gn, kern::chanscale_gg(self.grad, xn.value));
                     });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
    auto y = kern::bmm(a->value, b->value, false, transpose_b);
    record_macs(static_cast<uint64_t>(y.n) * y.c * y.h * y.w *
                (transpose_b ? b->value.w : b->value.h));
    return make_node(std::move(y), std::vector<Tensor<T>>{a, b},
                     [transpose_b](Node<T>& self) {
                         auto& an = *self.parents[0];
                         auto& bn = *self.parents[1];
                         if (transpose_b) {
                             if (an.requires_grad)
                                 accumulate(an, kern::bmm(self.grad, bn.value, false, false));
                             if (bn.requires_grad)
                                 accumulate(bn, kern::bmm(self.grad, an.value, true, false));
                         } else {
                             if (an.requires_grad)
                                 accumulate(an, kern::bmm(self.grad, bn.value, false, true));
                             if (bn.requires_grad)
                                 accumulate(bn, kern::bmm(an.value, self.grad, true, false));
                         }
                     });
}

template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, int dy, int dx) {
    return make_node(kern::roll(x->value, dy, dx), std::vector<Tensor<T>>{x},
                     [dy, dx](Node<T>& self) {
                         if (self.parents[0]->requires_grad)
                             accumulate(*self.parents[0], kern::roll(self.grad, -dy, -dx));
                     });
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int win, int heads) {
    const int n = x->value.n, c = x->value.c, h = x->value.h, w = x->value.w;
    return make_node(kern::wpart(x->value, win, heads), std::vector<Tensor<T>>{x},
                     [n, c, h, w, win](Node<T>& self) {
                         if (self.parents[0]->requires_grad)
                             accumulate(*self.parents[0], kern::wmerge(self.grad, n, c, h, w, win));
                     });
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& x, int n, int c, int h, int w, int win) {
    const int heads = x->value.c;
    return make_node(kern::wmerge(x->value, n, c, h, w, win), std::vector<Tensor<T>>{x},
                     [win, heads](Node<T>& self) {
                         if (self.parents[0]->requires_grad)
                             accumulate(*self.parents[0], kern::wpart(self.grad, win, heads));
                     });
}

/// Adds the learned per-head relative-position bias to window attention
/// scores of shape (batch*windows, heads, win*win, win*win). The table holds
/// (2*win-1)^2 offsets per head as a (1, heads, 2w-1, 2w-1) parameter.
template <typename T>
Tensor<T> add_rel_pos_bias(const Tensor<T>& s, const Tensor<T>& table, int win) {
    const int t = win * win, span = 2 * win - 1;
    if (s->value.h != t || s->value.w != t)
        throw ValidationError("rel_pos_bias: score shape does not match window");
    if (table->value.c != s->value.c || table->value.h != span || table->value.w != span)
        throw ValidationError("rel_pos_bias: table shape mismatch");
    // Token pair -> table offset, shared by forward and backward.
    auto map = std::make_shared<std::vector<int>>(static_cast<size_t>(t) * t);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) {
            const int dy = i / win - j / win + win - 1;
            const int dx = i % win - j % win + win - 1;
            (*map)[static_cast<size_t>(i) * t + j] = dy * span + dx;
        }
    Array4<T> y(s->value.n, s->value.c, t, t);
    const size_t tt = static_cast<size_t>(t) * t;
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < y.n; ++n)
        for (int hd = 0; hd < y.c; ++hd) {
            const T* tab = table->value.data() + table->value.idx(0, hd, 0, 0);
            const T* src = s->value.data() + s->value.idx(n, hd, 0, 0);
            T* dst = y.data() + y.idx(n, hd, 0, 0);
            for (size_t i = 0; i < tt; ++i) dst[i] = src[i] + tab[(*map)[i]];
        }
    return make_node(std::move(y), std::vector<Tensor<T>>{s, table}, [map](Node<T>& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
        auto& tn = *self.parents[1];
        if (!tn.requires_grad) return;
        Array4<T> gt(1, tn.value.c, tn.value.h, tn.value.w);
        const size_t tt = map->size();
#pragma omp parallel for schedule(static)
        for (int hd = 0; hd < gt.c; ++hd) {
            T* out = gt.data() + gt.idx(0, hd, 0, 0);
            for (int n = 0; n < self.grad.n; ++n) {
                const T* src = self.grad.data() + self.grad.idx(n, hd, 0, 0);
                for (size_t i = 0; i < tt; ++i) out[(*map)[i]] += src[i];
            }
        }
        accumulate(tn, gt);
    });
}

/// Adds a constant additive mask (0 or a large negative number) per window
/// position; window w of each image reads mask plane (w mod nW).
template <typename T>
Tensor<T> add_window_mask(const Tensor<T>& s, std::shared_ptr<const Array4<T>> mask) {
    const int nw = mask->n;
    if (s->value.n % nw || mask->h != s->value.h || mask->w != s->value.w || mask->c != 1)
        throw ValidationError("window_mask: shape mismatch");
    Array4<T> y(s->value.n, s->value.c, s->value.h, s->value.w);
    const size_t tt = static_cast<size_t>(s->value.h) * s->value.w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < y.n; ++n)
        for (int hd = 0; hd < y.c; ++hd) {
            const T* m = mask->data() + mask->idx(n % nw, 0, 0, 0);
            const T* src = s->value.data() + s->value.idx(n, hd, 0, 0);
            T* dst = y.data() + y.idx(n, hd, 0, 0);
            for (size_t i = 0; i < tt; ++i) dst[i] = src[i] + m[i];
        }
    return make_node(std::move(y), std::vector<Tensor<T>>{s}, [](Node<T>& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
    });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const int ca = a->value.c, cb = b->value.c;
    return make_node(kern::concat_c(a->value, b->value), std::vector<Tensor<T>>{a, b},
                     [ca, cb](Node<T>& self) {
                         if (self.parents[0]->requires_grad)
                             accumulate(*self.parents[0], kern::slice_c(self.grad, 0, ca));
                         if (self.parents[1]->requires_grad)
                             accumulate(*self.parents[1], kern::slice_c(self.grad, ca, cb));
                     });
}

/// Mean of squared differences; the workhorse training loss.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred->value.same_shape(target->value)) throw ValidationError("mse: shape mismatch");
    const int64_t cnt = static_cast<int64_t>(pred->value.size());
    double acc = 0;
    for (int64_t i = 0; i < cnt; ++i) {
        const double d = static_cast<double>(pred->value.v[i]) - target->value.v[i];
        acc += d * d;
    }
    Array4<T> y(1, 1, 1, 1);
    y.v[0] = static_cast<T>(acc / cnt);
    return make_node(std::move(y), std::vector<Tensor<T>>{pred, target}, [cnt](Node<T>& self) {
        const T g0 = self.grad.v[0] * T(2) / static_cast<T>(cnt);
        const auto& pv = self.parents[0]->value;
        const auto& tv = self.parents[1]->value;
        for (int k = 0; k < 2; ++k) {
            auto& p = *self.parents[k];
            if (!p.requires_grad) continue;
            Array4<T> g(p.value.n, p.value.c, p.value.h, p.value.w);
            const T sgn = k == 0 ? T(1) : T(-1);
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < cnt; ++i) g.v[i] = sgn * g0 * (pv.v[i] - tv.v[i]);
            accumulate(p, g);
        }
    });
}

/// sum(x * weights) with fixed weights; a convenient scalar head for
/// gradient checks.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, Array4<T> weights) {
    if (!x->value.same_shape(weights)) throw ValidationError("weighted_sum: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < weights.size(); ++i)
        acc += static_cast<double>(x->value.v[i]) * weights.v[i];
    Array4<T> y(1, 1, 1, 1);
    y.v[0] = static_cast<T>(acc);
    return make_node(std::move(y), std::vector<Tensor<T>>{x},
                     [w = std::move(weights)](Node<T>& self) {
                         auto& xn = *self.parents[0];
                         if (!xn.requires_grad) return;
                         Array4<T> g(w.n, w.c, w.h, w.w);
                         const T g0 = self.grad.v[0];
                         for (size_t i = 0; i < w.size(); ++i) g.v[i] = g0 * w.v[i];
                         accumulate(xn, g);
                     });
}

}  // namespace harunet
