#pragma once

#include <cstdint>
#include <utility>

#include "harunet/errors.hpp"
#include "harunet/volume.hpp"

namespace harunet {

/// Image-domain corruption parameters: an additive dose-dependent Gaussian
/// term (sigma_q) plus an additive electronic Gaussian term (sigma_e), both
/// in normalized intensity units.
struct NoiseParams {
    double sigma_q = 0.04;
    double sigma_e = 0.02;
    uint64_t seed = 0;
    bool clip = true;

    NoiseParams() = default;
    NoiseParams(double q, double e, uint64_t s, bool c) : sigma_q(q), sigma_e(e), seed(s), clip(c) {
        if (q < 0 || e < 0) throw ValidationError("NoiseParams: sigma must be >= 0");
    }

    bool operator==(const NoiseParams&) const = default;
};

/// Adds both noise terms pixelwise. Pure function of (clean, p, stream):
/// pixel i of stream s draws from the counter block (p.seed, s, i), so slices
/// can be corrupted in parallel and in any order with identical results.
Slice add_noise(const Slice& clean, const NoiseParams& p, uint64_t stream = 0);

/// Sample mean and unbiased sample variance of (noisy - clean).
std::pair<double, double> measure_residual_stats(const Slice& noisy, const Slice& clean);

}  // namespace harunet
