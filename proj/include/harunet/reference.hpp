#pragma once

#include <cstdint>
#include <vector>

#include "harunet/array4.hpp"

namespace harunet::ref {

// Serial twins of the parallel kernels: the same contracts written as plain
// loops with no scheduling concerns, kept as the audit baseline for the unit
// tests and the kernel benchmark.

template <typename T>
Array4<T> conv_fwd(const Array4<T>& x, const Array4<T>& w, const Array4<T>* bias, int stride,
                   int pad);

template <typename T>
Array4<T> conv_gx(const Array4<T>& gy, const Array4<T>& w, int stride, int pad, int hi, int wi);

template <typename T>
Array4<T> conv_gw(const Array4<T>& x, const Array4<T>& gy, int stride, int pad, int kh, int kw);

template <typename T>
Array4<T> ln_fwd(const Array4<T>& x, const Array4<T>& gain, const Array4<T>& bias, double eps);

template <typename T>
Array4<T> softmax_last(const Array4<T>& x);

extern template Array4<float> conv_fwd<float>(const Array4<float>&, const Array4<float>&,
                                              const Array4<float>*, int, int);
extern template Array4<double> conv_fwd<double>(const Array4<double>&, const Array4<double>&,
                                                const Array4<double>*, int, int);
extern template Array4<float> conv_gx<float>(const Array4<float>&, const Array4<float>&, int,
                                             int, int, int);
extern template Array4<double> conv_gx<double>(const Array4<double>&, const Array4<double>&,
                                               int, int, int, int);
extern template Array4<float> conv_gw<float>(const Array4<float>&, const Array4<float>&, int,
                                             int, int, int);
extern template Array4<double> conv_gw<double>(const Array4<double>&, const Array4<double>&,
                                               int, int, int, int);
extern template Array4<float> ln_fwd<float>(const Array4<float>&, const Array4<float>&,
                                            const Array4<float>&, double);
extern template Array4<double> ln_fwd<double>(const Array4<double>&, const Array4<double>&,
                                              const Array4<double>&, double);
extern template Array4<float> softmax_last<float>(const Array4<float>&);
extern template Array4<double> softmax_last<double>(const Array4<double>&);

/// Set-union / set-intersection morphology over every in-bounds offset of a
/// centered k by k square.
std::vector<uint8_t> dilate(const std::vector<uint8_t>& in, int h, int w, int k);
std::vector<uint8_t> erode(const std::vector<uint8_t>& in, int h, int w, int k);

}  // namespace harunet::ref
