#include "harunet/noise.hpp"

#include <algorithm>

#include "harunet/rng.hpp"

namespace harunet {

Slice add_noise(const Slice& clean, const NoiseParams& p, uint64_t stream) {
    Slice out = clean;
    const size_t count = clean.pixels.size();
    float* px = out.pixels.data();
    const float* in = clean.pixels.data();

    const double sq = p.sigma_q, se = p.sigma_e;
    const bool clip = p.clip;
    const uint64_t seed = p.seed;

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        double zq, ze;
        normal_pair(seed, stream, static_cast<uint64_t>(i), zq, ze);
        double v = static_cast<double>(in[i]) + sq * zq + se * ze;
        if (clip) v = std::min(1.0, std::max(0.0, v));
        px[i] = static_cast<float>(v);
    }
    return out;
}

std::pair<double, double> measure_residual_stats(const Slice& noisy, const Slice& clean) {
    if (noisy.height != clean.height || noisy.width != clean.width)
        throw ValidationError("measure_residual_stats: dimension mismatch");

    const size_t n = noisy.pixels.size();
    double mean = 0;
    for (size_t i = 0; i < n; ++i)
        mean += static_cast<double>(noisy.pixels[i]) - static_cast<double>(clean.pixels[i]);
    mean /= static_cast<double>(n);

    double ss = 0;
    for (size_t i = 0; i < n; ++i) {
        const double d =
            static_cast<double>(noisy.pixels[i]) - static_cast<double>(clean.pixels[i]) - mean;
        ss += d * d;
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, var};
}

}  // namespace harunet
