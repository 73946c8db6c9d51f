#pragma once

#include <cstdint>
#include <vector>

#include "harunet/volume.hpp"

namespace harunet {

enum class MaskStage { M0, M1, Mf };

/// Per-slice foreground map. Stage advances M0 (clustered) -> M1 (dilated)
/// -> Mf (holes filled); each op checks the stage of its input.
struct BinaryMask {
    int height = 0, width = 0;
    MaskStage stage = MaskStage::M0;
    std::vector<uint8_t> bits;

    uint8_t at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return bits[static_cast<size_t>(y) * width + x]; }
    size_t count_set() const;
};

struct KMeansConfig {
    int k = 2;
    int max_iters = 100;
    double epsilon = 0.2;  // center-shift threshold on the 0-255 scale

    KMeansConfig() = default;
    KMeansConfig(int k_, int iters, double eps) : k(k_), max_iters(iters), epsilon(eps) {
        if (k_ != 2) throw ValidationError("KMeansConfig: k must be 2");
        if (iters < 1 || eps <= 0) throw ValidationError("KMeansConfig: bad iteration bounds");
    }
};

struct SegmentationConfig {
    KMeansConfig kmeans;
    int dilate_kernel = 5;
    int fill_kernel_start = 15;
    int fill_kernel_step = 5;
    int max_fill_iters = 5;
};

/// Two-cluster split of the non-zero intensities (rescaled to 0-255); the
/// higher-center cluster is foreground. Zero pixels are always background.
/// Degenerate inputs (all non-zero pixels equal, or an emptied cluster) mark
/// the whole non-zero support as foreground.
BinaryMask kmeans_foreground(const Slice& s, const KMeansConfig& cfg = {});

/// Binary dilation with a centered square structuring element; outside the
/// image counts as background.
BinaryMask dilate_mask(const BinaryMask& m0, int kernel = 5);

/// Fills interior holes (background regions with no 4-connected path to the
/// border) and smooths with morphological closings of growing kernel size.
BinaryMask fill_holes(const BinaryMask& m1, int kernel_start = 15, int kernel_step = 5,
                      int max_iters = 5);

BinaryMask segment_slice(const Slice& s, const SegmentationConfig& cfg = {});

// Shared with the patching stage and tests.
std::vector<uint8_t> interior_holes(const BinaryMask& m);  // 1 where hole
BinaryMask close_mask(const BinaryMask& m, int kernel);

}  // namespace harunet
