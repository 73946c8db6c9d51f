#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harunet/network.hpp"
#include "harunet/volume.hpp"

namespace harunet {

struct PsnrValue {
    double db = 0;
    bool infinite = false;  // zero mean squared error
};

/// 10 log10(peak^2 / MSE) with 64-bit accumulation.
PsnrValue psnr(const Slice& ref, const Slice& test, double peak);

// The original publications' conventions; the values here are not fixed by
// any external table and are exposed for callers that need other settings.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01, k2 = 0.03;
};

struct GmsdParams {
    double c = 0.0026;  // similarity stabilizer, unit-peak scale
};

/// Mean local structural similarity with Gaussian-weighted statistics over
/// the valid (fully covered) region.
double ssim(const Slice& ref, const Slice& test, double peak, const SsimParams& p = {});

/// Standard deviation of the gradient-magnitude similarity map: 2x2 mean
/// downsampling, 3x3 Prewitt gradients with zero-padded borders, then the
/// population deviation of the per-pixel similarity.
double gmsd(const Slice& ref, const Slice& test, const GmsdParams& p = {});

struct ImageMetrics {
    std::string id;
    PsnrValue psnr;
    double ssim = 0, gmsd = 0;
};

struct MetricsReport {
    std::string model = "model";
    std::vector<ImageMetrics> per_image;
    PsnrValue mean_psnr;
    double mean_ssim = 0, mean_gmsd = 0;
    double gmacs = -1;             // negative = not reported
    double minutes_per_scan = -1;  // negative = not reported

    /// Fills the aggregate fields from per_image; any infinite member makes
    /// the aggregate infinite.
    void finalize();
};

struct MacBreakdown {
    std::vector<LayerCost> layers;
    uint64_t total = 0;
    double total_gmacs() const { return static_cast<double>(total) / 1e9; }
};

/// Analytic multiply-accumulate audit for an n x 1 x h x w input.
MacBreakdown count_macs(const NetworkConfig& cfg, int n, int h, int w);

/// Fixed-format comparison table, rows sorted by PSNR descending. Columns:
/// Model | PSNR | SSIM | GMSD | GMACs/patch | time/scan.
std::string render_report(const std::vector<MetricsReport>& reports);

}  // namespace harunet
