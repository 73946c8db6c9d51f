#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "harunet/errors.hpp"

namespace harunet {

/// Dense NCHW array. The single container behind activations, weights and
/// gradients; lower-rank data (biases, tables) uses size-1 trailing axes.
template <typename T>
struct Array4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Array4() = default;
    Array4(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
            throw ValidationError("Array4: all dims must be >= 1");
    }

    size_t size() const { return v.size(); }

    T& at(int i, int j, int k, int l) { return v[idx(i, j, k, l)]; }
    T at(int i, int j, int k, int l) const { return v[idx(i, j, k, l)]; }

    size_t idx(int i, int j, int k, int l) const {
        return ((static_cast<size_t>(i) * c + j) * h + k) * w + l;
    }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool same_shape(const Array4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    template <typename U>
    Array4<U> cast() const {
        Array4<U> out(n, c, h, w);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

}  // namespace harunet
