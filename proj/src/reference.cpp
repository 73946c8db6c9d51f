#include "harunet/reference.hpp"

#include <algorithm>
#include <cmath>

#include "harunet/errors.hpp"

namespace harunet::ref {

template <typename T>
Array4<T> conv_fwd(const Array4<T>& x, const Array4<T>& w, const Array4<T>* bias, int stride,
                   int pad) {
    const int ho = (x.h + 2 * pad - w.h) / stride + 1;
    const int wo = (x.w + 2 * pad - w.w) / stride + 1;
    Array4<T> y(x.n, w.n, ho, wo);
    for (int n = 0; n < x.n; ++n)
        for (int co = 0; co < w.n; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias ? static_cast<double>(bias->v[co]) : 0.0;
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int i = 0; i < w.h; ++i)
                            for (int j = 0; j < w.w; ++j) {
                                const int iy = oy * stride - pad + i;
                                const int ix = ox * stride - pad + j;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                                acc += static_cast<double>(x.at(n, ci, iy, ix)) *
                                       static_cast<double>(w.at(co, ci, i, j));
                            }
                    y.at(n, co, oy, ox) = static_cast<T>(acc);
                }
    return y;
}

template <typename T>
Array4<T> conv_gx(const Array4<T>& gy, const Array4<T>& w, int stride, int pad, int hi,
                  int wi) {
    Array4<T> gx(gy.n, w.c, hi, wi);
    for (int n = 0; n < gy.n; ++n)
        for (int co = 0; co < w.n; ++co)
            for (int oy = 0; oy < gy.h; ++oy)
                for (int ox = 0; ox < gy.w; ++ox) {
                    const double g = gy.at(n, co, oy, ox);
                    for (int ci = 0; ci < w.c; ++ci)
                        for (int i = 0; i < w.h; ++i)
                            for (int j = 0; j < w.w; ++j) {
                                const int iy = oy * stride - pad + i;
                                const int ix = ox * stride - pad + j;
                                if (iy < 0 || iy >= hi || ix < 0 || ix >= wi) continue;
                                gx.at(n, ci, iy, ix) += static_cast<T>(
                                    g * static_cast<double>(w.at(co, ci, i, j)));
                            }
                }
    return gx;
}

template <typename T>
Array4<T> conv_gw(const Array4<T>& x, const Array4<T>& gy, int stride, int pad, int kh,
                  int kw) {
    Array4<T> gw(gy.c, x.c, kh, kw);
    for (int co = 0; co < gy.c; ++co)
        for (int ci = 0; ci < x.c; ++ci)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                    double acc = 0;
                    for (int n = 0; n < x.n; ++n)
                        for (int oy = 0; oy < gy.h; ++oy)
                            for (int ox = 0; ox < gy.w; ++ox) {
                                const int iy = oy * stride - pad + i;
                                const int ix = ox * stride - pad + j;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                                acc += static_cast<double>(x.at(n, ci, iy, ix)) *
                                       static_cast<double>(gy.at(n, co, oy, ox));
                            }
                    gw.at(co, ci, i, j) = static_cast<T>(acc);
                }
    return gw;
}

template <typename T>
Array4<T> ln_fwd(const Array4<T>& x, const Array4<T>& gain, const Array4<T>& bias, double eps) {
    Array4<T> y(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) {
                double mu = 0;
                for (int c = 0; c < x.c; ++c) mu += x.at(n, c, i, j);
                mu /= x.c;
                double var = 0;
                for (int c = 0; c < x.c; ++c) {
                    const double d = x.at(n, c, i, j) - mu;
                    var += d * d;
                }
                var /= x.c;
                const double rstd = 1.0 / std::sqrt(var + eps);
                for (int c = 0; c < x.c; ++c)
                    y.at(n, c, i, j) = static_cast<T>((x.at(n, c, i, j) - mu) * rstd *
                                                          static_cast<double>(gain.v[c]) +
                                                      static_cast<double>(bias.v[c]));
            }
    return y;
}

template <typename T>
Array4<T> softmax_last(const Array4<T>& x) {
    Array4<T> y(x.n, x.c, x.h, x.w);
    const size_t rows = x.size() / x.w;
    for (size_t r = 0; r < rows; ++r) {
        const T* in = x.data() + r * x.w;
        T* out = y.data() + r * x.w;
        double mx = in[0];
        for (int i = 1; i < x.w; ++i) mx = std::max(mx, static_cast<double>(in[i]));
        double sum = 0;
        for (int i = 0; i < x.w; ++i) {
            const double e = std::exp(static_cast<double>(in[i]) - mx);
            out[i] = static_cast<T>(e);
            sum += e;
        }
        for (int i = 0; i < x.w; ++i) out[i] = static_cast<T>(out[i] / sum);
    }
    return y;
}

template Array4<float> conv_fwd<float>(const Array4<float>&, const Array4<float>&,
                                       const Array4<float>*, int, int);
template Array4<double> conv_fwd<double>(const Array4<double>&, const Array4<double>&,
                                         const Array4<double>*, int, int);
template Array4<float> conv_gx<float>(const Array4<float>&, const Array4<float>&, int, int, int,
                                      int);
template Array4<double> conv_gx<double>(const Array4<double>&, const Array4<double>&, int, int,
                                        int, int);
template Array4<float> conv_gw<float>(const Array4<float>&, const Array4<float>&, int, int, int,
                                      int);
template Array4<double> conv_gw<double>(const Array4<double>&, const Array4<double>&, int, int,
                                        int, int);
template Array4<float> ln_fwd<float>(const Array4<float>&, const Array4<float>&,
                                     const Array4<float>&, double);
template Array4<double> ln_fwd<double>(const Array4<double>&, const Array4<double>&,
                                       const Array4<double>&, double);
template Array4<float> softmax_last<float>(const Array4<float>&);
template Array4<double> softmax_last<double>(const Array4<double>&);

std::vector<uint8_t> dilate(const std::vector<uint8_t>& in, int h, int w, int k) {
    const int lo = -(k - 1) / 2, hi = k / 2;
    std::vector<uint8_t> out(in.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int by = lo; by <= hi && !v; ++by)
                for (int bx = lo; bx <= hi && !v; ++bx) {
                    const int sy = y - by, sx = x - bx;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                    v = in[static_cast<size_t>(sy) * w + sx];
                }
            out[static_cast<size_t>(y) * w + x] = v;
        }
    return out;
}

std::vector<uint8_t> erode(const std::vector<uint8_t>& in, int h, int w, int k) {
    const int lo = -(k - 1) / 2, hi = k / 2;
    std::vector<uint8_t> out(in.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = 1;
            for (int by = lo; by <= hi && v; ++by)
                for (int bx = lo; bx <= hi && v; ++bx) {
                    const int sy = y + by, sx = x + bx;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                    v = in[static_cast<size_t>(sy) * w + sx];
                }
            out[static_cast<size_t>(y) * w + x] = v;
        }
    return out;
}

}  // namespace harunet::ref
