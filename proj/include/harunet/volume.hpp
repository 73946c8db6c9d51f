#pragma once

#include <optional>
#include <string>
#include <vector>

#include "harunet/errors.hpp"

namespace harunet {

enum class Plane { axial, frontal, sagittal };

const char* plane_name(Plane p);
Plane parse_plane(const std::string& s);

/// Reconstruction grid with intensities normalized to [0,1]. Immutable once
/// loaded; safe to share across threads.
struct Volume {
    int depth = 0, height = 0, width = 0;
    double voxel_size_mm = 1.0;  // metadata only
    std::string id;
    std::vector<float> voxels;  // depth-major: (z, y, x)

    float at(int z, int y, int x) const {
        return voxels[(static_cast<size_t>(z) * height + y) * width + x];
    }
    float& at(int z, int y, int x) {
        return voxels[(static_cast<size_t>(z) * height + y) * width + x];
    }
    size_t size() const { return voxels.size(); }
};

struct Slice {
    int height = 0, width = 0;
    Plane plane = Plane::axial;
    int index = 0;
    std::string source_id;
    std::vector<float> pixels;

    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct CropRect {
    int x = 0, y = 0, w = 0, h = 0;
};

enum class VoxelType { u8, u16, f32 };

// Container: ASCII line "HVOL v1 <depth> <height> <width> <dtype> <vmin> <vmax>\n"
// followed by raw little-endian voxels in depth-major order. Integer containers
// are min-max normalized over the declared [vmin, vmax] range on load; the f32
// container stores normalized values directly and round-trips bitwise.
Volume load_volume(const std::string& path);
void store_volume(const Volume& v, const std::string& path, VoxelType dtype = VoxelType::f32);

/// One slice per index along the plane's normal axis; the optional crop is
/// applied uniformly to every slice.
std::vector<Slice> slice_volume(const Volume& v, Plane plane,
                                std::optional<CropRect> crop = std::nullopt);

}  // namespace harunet
