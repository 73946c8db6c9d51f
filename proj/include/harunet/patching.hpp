#pragma once

#include <string>
#include <vector>

#include "harunet/manifest.hpp"
#include "harunet/segmentation.hpp"
#include "harunet/volume.hpp"

namespace harunet {

struct BoundingBox {
    int x = 0, y = 0, w = 0, h = 0;

    bool operator==(const BoundingBox&) const = default;
    /// Inclusive containment: equal boxes contain each other.
    bool contains(const BoundingBox& o) const {
        return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
    }
};

struct PatchRecord {
    int x = 0, y = 0;
    int size = 0;
    bool overlap = false;  // residual patch anchored flush to the box edge
    std::string slice_id;

    bool operator==(const PatchRecord&) const = default;
};

/// Tight box per 8-connected foreground component.
std::vector<BoundingBox> extract_bounding_boxes(const BinaryMask& mf);

/// Drops every box contained (inclusively) in another retained box. Partial
/// overlap keeps both; among identical boxes the later-indexed one goes.
std::vector<BoundingBox> remove_nested_boxes(std::vector<BoundingBox> boxes);

/// Covers the box with size x size patches: a non-overlapping grid anchored
/// at the box's top-left, plus flush-to-edge residual patches (flagged) for
/// any uncovered strip. Boxes smaller than the patch in a dimension are
/// extended symmetrically, shifting inward at slice borders.
std::vector<PatchRecord> tile_patches(const BoundingBox& box, int patch, int slice_w,
                                      int slice_h);

struct PatchDatasetConfig {
    NoiseParams noise;
    uint64_t split_seed = 0;
    int patch = 256;
    double frac_train = 0.70, frac_val = 0.15, frac_test = 0.15;
    std::vector<Plane> planes = {Plane::axial};
    SegmentationConfig segmentation;
    double sigma_jitter = 0.0;  // optional per-slice relative jitter of both sigmas
    std::string out_dir;        // patches land here; manifest paths are relative to it
};

struct PatchDatasetResult {
    DatasetManifest manifest;
    int slices_without_foreground = 0;
};

/// Full corpus construction: volume-level split, then per slice per plane
/// segment -> boxes -> dedupe -> tile, writing a clean and a noised 16-bit
/// PNG per patch. Deterministic given (volumes, seeds).
PatchDatasetResult build_patch_dataset(const std::vector<Volume>& volumes,
                                       const PatchDatasetConfig& cfg);

}  // namespace harunet
