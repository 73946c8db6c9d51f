#pragma once

#include <cmath>
#include <cstdint>

#include "harunet/array4.hpp"

// Raw numeric loops behind the differentiable ops. Every kernel writes each
// output element from exactly one thread with a fixed inner summation order,
// so results do not depend on the OpenMP thread count.

namespace harunet::kern {

/// y[n][co] = bias[co] + sum_{ci,i,j} x[n][ci][ho*s-p+i][wo*s-p+j] * w[co][ci][i][j]
template <typename T>
Array4<T> conv_fwd(const Array4<T>& x, const Array4<T>& w, const Array4<T>* bias, int stride,
                   int pad) {
    if (w.c != x.c) throw ValidationError("conv: weight/input channel mismatch");
    const int ho = (x.h + 2 * pad - w.h) / stride + 1;
    const int wo = (x.w + 2 * pad - w.w) / stride + 1;
    if (x.h + 2 * pad < w.h || x.w + 2 * pad < w.w)
        throw ValidationError("conv: kernel larger than padded input");
    Array4<T> y(x.n, w.n, ho, wo);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n) {
        for (int co = 0; co < w.n; ++co) {
            const T b = bias ? bias->at(0, co, 0, 0) : T(0);
            for (int oy = 0; oy < ho; ++oy) {
                T* yrow = y.data() + y.idx(n, co, oy, 0);
                for (int ox = 0; ox < wo; ++ox) yrow[ox] = b;
                for (int ci = 0; ci < x.c; ++ci) {
                    for (int i = 0; i < w.h; ++i) {
                        const int iy = oy * stride - pad + i;
                        if (iy < 0 || iy >= x.h) continue;
                        const T* xrow = x.data() + x.idx(n, ci, iy, 0);
                        const T* wrow = w.data() + w.idx(co, ci, i, 0);
                        for (int j = 0; j < w.w; ++j) {
                            const T wv = wrow[j];
                            const int x0 = j - pad;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride + x0;
                                if (ix < 0 || ix >= x.w) continue;
                                yrow[ox] += wv * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

/// Gradient wrt the conv input; also the forward map of a transposed conv
/// whose weights are stored (C_in_of_transpose, C_out, kh, kw).
template <typename T>
Array4<T> conv_gx(const Array4<T>& gy, const Array4<T>& w, int stride, int pad, int hi,
                  int wi) {
    if (w.n != gy.c) throw ValidationError("conv_gx: weight/grad channel mismatch");
    Array4<T> gx(gy.n, w.c, hi, wi);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < gy.n; ++n) {
        for (int ci = 0; ci < w.c; ++ci) {
            for (int iy = 0; iy < hi; ++iy) {
                T* grow = gx.data() + gx.idx(n, ci, iy, 0);
                for (int co = 0; co < gy.c; ++co) {
                    for (int i = 0; i < w.h; ++i) {
                        const int num = iy + pad - i;
                        if (num < 0 || num % stride) continue;
                        const int oy = num / stride;
                        if (oy >= gy.h) continue;
                        const T* gyrow = gy.data() + gy.idx(n, co, oy, 0);
                        const T* wrow = w.data() + w.idx(co, ci, i, 0);
                        for (int j = 0; j < w.w; ++j) {
                            const T wv = wrow[j];
                            for (int ix = 0; ix < wi; ++ix) {
                                const int nx = ix + pad - j;
                                if (nx < 0 || nx % stride) continue;
                                const int ox = nx / stride;
                                if (ox >= gy.w) continue;
                                grow[ix] += wv * gyrow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

/// gw[co][ci][i][j] = sum_{n,oy,ox} gy[n][co][oy][ox] * x[n][ci][oy*s-p+i][ox*s-p+j]
template <typename T>
Array4<T> conv_gw(const Array4<T>& x, const Array4<T>& gy, int stride, int pad, int kh,
                  int kw) {
    Array4<T> gw(gy.c, x.c, kh, kw);
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < gy.c; ++co) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                    T acc = 0;
                    for (int n = 0; n < x.n; ++n) {
                        for (int oy = 0; oy < gy.h; ++oy) {
                            const int iy = oy * stride - pad + i;
                            if (iy < 0 || iy >= x.h) continue;
                            const T* gyrow = gy.data() + gy.idx(n, co, oy, 0);
                            const T* xrow = x.data() + x.idx(n, ci, iy, 0);
                            for (int ox = 0; ox < gy.w; ++ox) {
                                const int ix = ox * stride - pad + j;
                                if (ix < 0 || ix >= x.w) continue;
                                acc += gyrow[ox] * xrow[ix];
                            }
                        }
                    }
                    gw.at(co, ci, i, j) = acc;
                }
            }
        }
    }
    return gw;
}

/// Per-channel reduction over batch and space; bias gradients.
template <typename T>
Array4<T> sum_nhw(const Array4<T>& g) {
    Array4<T> out(1, g.c, 1, 1);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.c; ++c) {
        T acc = 0;
        for (int n = 0; n < g.n; ++n) {
            const T* base = g.data() + g.idx(n, c, 0, 0);
            const size_t cnt = static_cast<size_t>(g.h) * g.w;
            for (size_t i = 0; i < cnt; ++i) acc += base[i];
        }
        out.at(0, c, 0, 0) = acc;
    }
    return out;
}

/// Batched matrix product over the (n, c) axes; optional transposes read the
/// operands as their matrix transpose without materializing it.
template <typename T>
Array4<T> bmm(const Array4<T>& a, const Array4<T>& b, bool ta, bool tb) {
    if (a.n != b.n || a.c != b.c) throw ValidationError("bmm: batch shape mismatch");
    const int m = ta ? a.w : a.h, ka = ta ? a.h : a.w;
    const int kb = tb ? b.w : b.h, p = tb ? b.h : b.w;
    if (ka != kb) throw ValidationError("bmm: inner dimension mismatch");
    Array4<T> y(a.n, a.c, m, p);
    const int64_t batches = static_cast<int64_t>(a.n) * a.c;
#pragma omp parallel for schedule(static)
    for (int64_t bi = 0; bi < batches; ++bi) {
        const T* pa = a.data() + bi * a.h * a.w;
        const T* pb = b.data() + bi * b.h * b.w;
        T* py = y.data() + bi * static_cast<int64_t>(m) * p;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < p; ++j) {
                T acc = 0;
                for (int k = 0; k < ka; ++k) {
                    const T av = ta ? pa[k * a.w + i] : pa[i * a.w + k];
                    const T bv = tb ? pb[j * b.w + k] : pb[k * b.w + j];
                    acc += av * bv;
                }
                py[i * p + j] = acc;
            }
        }
    }
    return y;
}

/// Normalization over the channel axis of each (n, y, x) position; saves the
/// per-position mean and reciprocal stddev for the backward pass.
template <typename T>
void ln_fwd(const Array4<T>& x, const Array4<T>& gain, const Array4<T>& bias, T eps,
            Array4<T>& y, Array4<T>& mu, Array4<T>& rstd) {
    y = Array4<T>(x.n, x.c, x.h, x.w);
    mu = Array4<T>(x.n, 1, x.h, x.w);
    rstd = Array4<T>(x.n, 1, x.h, x.w);
    const int64_t tokens = static_cast<int64_t>(x.n) * x.h * x.w;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < tokens; ++t) {
        const int n = static_cast<int>(t / plane);
        const size_t rem = t % plane;
        const size_t base = static_cast<size_t>(n) * x.c * plane + rem;
        T m = 0;
        for (int c = 0; c < x.c; ++c) m += x.v[base + c * plane];
        m /= x.c;
        T var = 0;
        for (int c = 0; c < x.c; ++c) {
            const T d = x.v[base + c * plane] - m;
            var += d * d;
        }
        var /= x.c;
        const T rs = T(1) / std::sqrt(var + eps);
        mu.v[t] = m;
        rstd.v[t] = rs;
        for (int c = 0; c < x.c; ++c)
            y.v[base + c * plane] =
                gain.at(0, c, 0, 0) * ((x.v[base + c * plane] - m) * rs) + bias.at(0, c, 0, 0);
    }
}

template <typename T>
void ln_bwd(const Array4<T>& x, const Array4<T>& gain, const Array4<T>& mu,
            const Array4<T>& rstd, const Array4<T>& gy, Array4<T>& gx, Array4<T>& ggain,
            Array4<T>& gbias) {
    gx = Array4<T>(x.n, x.c, x.h, x.w);
    ggain = Array4<T>(1, x.c, 1, 1);
    gbias = Array4<T>(1, x.c, 1, 1);
    const int64_t tokens = static_cast<int64_t>(x.n) * x.h * x.w;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < tokens; ++t) {
        const int n = static_cast<int>(t / plane);
        const size_t rem = t % plane;
        const size_t base = static_cast<size_t>(n) * x.c * plane + rem;
        const T m = mu.v[t], rs = rstd.v[t];
        T s1 = 0, s2 = 0;
        for (int c = 0; c < x.c; ++c) {
            const T xhat = (x.v[base + c * plane] - m) * rs;
            const T gh = gy.v[base + c * plane] * gain.at(0, c, 0, 0);
            s1 += gh;
            s2 += gh * xhat;
        }
        s1 /= x.c;
        s2 /= x.c;
        for (int c = 0; c < x.c; ++c) {
            const T xhat = (x.v[base + c * plane] - m) * rs;
            const T gh = gy.v[base + c * plane] * gain.at(0, c, 0, 0);
            gx.v[base + c * plane] = (gh - s1 - xhat * s2) * rs;
        }
    }
    // Parameter reductions stay serial over tokens per channel.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < x.c; ++c) {
        T gg = 0, gb = 0;
        for (int64_t t = 0; t < tokens; ++t) {
            const int n = static_cast<int>(t / plane);
            const size_t rem = t % plane;
            const size_t i = static_cast<size_t>(n) * x.c * plane + c * plane + rem;
            gg += gy.v[i] * (x.v[i] - mu.v[t]) * rstd.v[t];
            gb += gy.v[i];
        }
        ggain.at(0, c, 0, 0) = gg;
        gbias.at(0, c, 0, 0) = gb;
    }
}

template <typename T>
Array4<T> softmax_last_fwd(const Array4<T>& x) {
    Array4<T> y(x.n, x.c, x.h, x.w);
    const int64_t rows = static_cast<int64_t>(x.n) * x.c * x.h;
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * x.w;
        T* yr = y.data() + r * x.w;
        T mx = xr[0];
        for (int i = 1; i < x.w; ++i) mx = std::max(mx, xr[i]);
        T sum = 0;
        for (int i = 0; i < x.w; ++i) sum += (yr[i] = std::exp(xr[i] - mx));
        const T inv = T(1) / sum;
        for (int i = 0; i < x.w; ++i) yr[i] *= inv;
    }
    return y;
}

template <typename T>
Array4<T> softmax_last_bwd(const Array4<T>& y, const Array4<T>& gy) {
    Array4<T> gx(y.n, y.c, y.h, y.w);
    const int64_t rows = static_cast<int64_t>(y.n) * y.c * y.h;
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * y.w;
        const T* gr = gy.data() + r * y.w;
        T* out = gx.data() + r * y.w;
        T dot = 0;
        for (int i = 0; i < y.w; ++i) dot += yr[i] * gr[i];
        for (int i = 0; i < y.w; ++i) out[i] = yr[i] * (gr[i] - dot);
    }
    return gx;
}

template <typename T>
Array4<T> gap_fwd(const Array4<T>& x) {
    Array4<T> y(x.n, x.c, 1, 1);
    const T inv = T(1) / (static_cast<T>(x.h) * x.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n) {
        for (int c = 0; c < x.c; ++c) {
            const T* base = x.data() + x.idx(n, c, 0, 0);
            T acc = 0;
            const size_t cnt = static_cast<size_t>(x.h) * x.w;
            for (size_t i = 0; i < cnt; ++i) acc += base[i];
            y.at(n, c, 0, 0) = acc * inv;
        }
    }
    return y;
}

/// y = x * g with g broadcast from (N, C, 1, 1) over space.
template <typename T>
Array4<T> chanscale_fwd(const Array4<T>& x, const Array4<T>& g) {
    Array4<T> y(x.n, x.c, x.h, x.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n) {
        for (int c = 0; c < x.c; ++c) {
            const T gv = g.at(n, c, 0, 0);
            const T* xb = x.data() + x.idx(n, c, 0, 0);
            T* yb = y.data() + y.idx(n, c, 0, 0);
            const size_t cnt = static_cast<size_t>(x.h) * x.w;
            for (size_t i = 0; i < cnt; ++i) yb[i] = xb[i] * gv;
        }
    }
    return y;
}

template <typename T>
Array4<T> chanscale_gg(const Array4<T>& gy, const Array4<T>& x) {
    Array4<T> gg(x.n, x.c, 1, 1);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n) {
        for (int c = 0; c < x.c; ++c) {
            const T* a = gy.data() + gy.idx(n, c, 0, 0);
            const T* b = x.data() + x.idx(n, c, 0, 0);
            T acc = 0;
            const size_t cnt = static_cast<size_t>(x.h) * x.w;
            for (size_t i = 0; i < cnt; ++i) acc += a[i] * b[i];
            gg.at(n, c, 0, 0) = acc;
        }
    }
    return gg;
}

/// Cyclic shift of the spatial axes: out(y, x) = in((y + dy) mod H, (x + dx) mod W).
template <typename T>
Array4<T> roll(const Array4<T>& x, int dy, int dx) {
    Array4<T> y(x.n, x.c, x.h, x.w);
    const int my = ((dy % x.h) + x.h) % x.h;
    const int mx = ((dx % x.w) + x.w) % x.w;
    const int64_t planes = static_cast<int64_t>(x.n) * x.c;
#pragma omp parallel for schedule(static)
    for (int64_t pI = 0; pI < planes; ++pI) {
        const T* src = x.data() + pI * x.h * x.w;
        T* dst = y.data() + pI * x.h * x.w;
        for (int i = 0; i < x.h; ++i) {
            const int si = (i + my) % x.h;
            for (int j = 0; j < x.w; ++j) dst[i * x.w + j] = src[si * x.w + (j + mx) % x.w];
        }
    }
    return y;
}

/// (N, C, H, W) -> (N*nW, heads, win*win, C/heads) with windows row-major and
/// tokens row-major inside a window.
template <typename T>
Array4<T> wpart(const Array4<T>& x, int win, int heads) {
    if (x.h % win || x.w % win) throw ValidationError("window partition: size must divide H and W");
    if (x.c % heads) throw ValidationError("window partition: heads must divide channels");
    const int nwy = x.h / win, nwx = x.w / win, nw = nwy * nwx;
    const int t = win * win, d = x.c / heads;
    Array4<T> y(x.n * nw, heads, t, d);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n) {
        for (int wI = 0; wI < nw; ++wI) {
            const int wy = wI / nwx, wx = wI % nwx;
            for (int hd = 0; hd < heads; ++hd)
                for (int tok = 0; tok < t; ++tok) {
                    const int iy = wy * win + tok / win, ix = wx * win + tok % win;
                    for (int dd = 0; dd < d; ++dd)
                        y.at(n * nw + wI, hd, tok, dd) = x.at(n, hd * d + dd, iy, ix);
                }
        }
    }
    return y;
}

template <typename T>
Array4<T> wmerge(const Array4<T>& y, int n, int c, int h, int w, int win) {
    const int nwy = h / win, nwx = w / win, nw = nwy * nwx;
    const int d = c / y.c;
    Array4<T> x(n, c, h, w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int wI = 0; wI < nw; ++wI) {
            const int wy = wI / nwx, wx = wI % nwx;
            for (int hd = 0; hd < y.c; ++hd)
                for (int tok = 0; tok < y.h; ++tok) {
                    const int iy = wy * win + tok / win, ix = wx * win + tok % win;
                    for (int dd = 0; dd < d; ++dd)
                        x.at(ni, hd * d + dd, iy, ix) = y.at(ni * nw + wI, hd, tok, dd);
                }
        }
    }
    return x;
}

template <typename T>
Array4<T> concat_c(const Array4<T>& a, const Array4<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ValidationError("concat: spatial/batch mismatch");
    Array4<T> y(a.n, a.c + b.c, a.h, a.w);
    const size_t plane = static_cast<size_t>(a.h) * a.w;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < a.n; ++n) {
        std::copy(a.data() + a.idx(n, 0, 0, 0), a.data() + a.idx(n, 0, 0, 0) + a.c * plane,
                  y.data() + y.idx(n, 0, 0, 0));
        std::copy(b.data() + b.idx(n, 0, 0, 0), b.data() + b.idx(n, 0, 0, 0) + b.c * plane,
                  y.data() + y.idx(n, a.c, 0, 0));
    }
    return y;
}

template <typename T>
Array4<T> slice_c(const Array4<T>& y, int c0, int len) {
    Array4<T> out(y.n, len, y.h, y.w);
    const size_t plane = static_cast<size_t>(y.h) * y.w;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < y.n; ++n)
        std::copy(y.data() + y.idx(n, c0, 0, 0), y.data() + y.idx(n, c0, 0, 0) + len * plane,
                  out.data() + out.idx(n, 0, 0, 0));
    return out;
}

}  // namespace harunet::kern
