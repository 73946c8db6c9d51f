#include "harunet/volume.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace harunet {

const char* plane_name(Plane p) {
    switch (p) {
        case Plane::axial: return "axial";
        case Plane::frontal: return "frontal";
        case Plane::sagittal: return "sagittal";
    }
    return "axial";
}

Plane parse_plane(const std::string& s) {
    if (s == "axial") return Plane::axial;
    if (s == "frontal") return Plane::frontal;
    if (s == "sagittal") return Plane::sagittal;
    throw ValidationError("unknown plane: " + s);
}

namespace {

const char* dtype_name(VoxelType t) {
    switch (t) {
        case VoxelType::u8: return "u8";
        case VoxelType::u16: return "u16";
        case VoxelType::f32: return "f32";
    }
    return "f32";
}

VoxelType parse_dtype(const std::string& s) {
    if (s == "u8") return VoxelType::u8;
    if (s == "u16") return VoxelType::u16;
    if (s == "f32") return VoxelType::f32;
    throw IoError("HVOL: unknown dtype '" + s + "'");
}

size_t dtype_size(VoxelType t) {
    switch (t) {
        case VoxelType::u8: return 1;
        case VoxelType::u16: return 2;
        case VoxelType::f32: return 4;
    }
    return 4;
}

std::string volume_id_from_path(const std::string& path) {
    size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

Volume load_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open volume: " + path);

    std::string header;
    if (!std::getline(f, header)) throw IoError("HVOL: missing header in " + path);

    std::istringstream hs(header);
    std::string magic, version, dtype_str;
    long depth = 0, height = 0, width = 0;
    double vmin = 0, vmax = 0;
    hs >> magic >> version >> depth >> height >> width >> dtype_str >> vmin >> vmax;
    if (!hs || magic != "HVOL" || version != "v1")
        throw IoError("HVOL: malformed header in " + path);
    if (depth < 1 || height < 1 || width < 1)
        throw IoError("HVOL: dims must be >= 1 in " + path);

    const VoxelType dtype = parse_dtype(dtype_str);
    if (dtype != VoxelType::f32 && !(vmax > vmin))
        throw IoError("HVOL: declared range must satisfy vmax > vmin in " + path);

    const size_t count = static_cast<size_t>(depth) * height * width;
    std::vector<char> raw(count * dtype_size(dtype));
    f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(f.gcount()) != raw.size())
        throw IoError("HVOL: file shorter than declared dims in " + path);
    char extra;
    if (f.read(&extra, 1))
        throw IoError("HVOL: file longer than declared dims in " + path);

    Volume v;
    v.depth = static_cast<int>(depth);
    v.height = static_cast<int>(height);
    v.width = static_cast<int>(width);
    v.id = volume_id_from_path(path);
    v.voxels.resize(count);

    // Normalization is over the declared container range, not the data,
    // so noise statistics stay comparable across slices.
    switch (dtype) {
        case VoxelType::u8: {
            const auto* p = reinterpret_cast<const uint8_t*>(raw.data());
            const float scale = static_cast<float>(1.0 / (vmax - vmin));
            for (size_t i = 0; i < count; ++i)
                v.voxels[i] = (static_cast<float>(p[i]) - static_cast<float>(vmin)) * scale;
            break;
        }
        case VoxelType::u16: {
            std::vector<uint16_t> tmp(count);
            std::memcpy(tmp.data(), raw.data(), raw.size());
            const float scale = static_cast<float>(1.0 / (vmax - vmin));
            for (size_t i = 0; i < count; ++i)
                v.voxels[i] = (static_cast<float>(tmp[i]) - static_cast<float>(vmin)) * scale;
            break;
        }
        case VoxelType::f32: {
            std::memcpy(v.voxels.data(), raw.data(), raw.size());
            for (size_t i = 0; i < count; ++i)
                if (!std::isfinite(v.voxels[i]))
                    throw IoError("HVOL: non-finite voxel value in " + path);
            break;
        }
    }
    return v;
}

void store_volume(const Volume& v, const std::string& path, VoxelType dtype) {
    if (v.depth < 1 || v.height < 1 || v.width < 1)
        throw ValidationError("store_volume: empty volume");
    if (v.voxels.size() != static_cast<size_t>(v.depth) * v.height * v.width)
        throw ValidationError("store_volume: voxel count does not match dims");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write volume: " + path);

    double vmin = 0, vmax = 1;
    if (dtype == VoxelType::u8) vmax = 255;
    if (dtype == VoxelType::u16) vmax = 65535;

    f << "HVOL v1 " << v.depth << ' ' << v.height << ' ' << v.width << ' '
      << dtype_name(dtype) << ' ' << vmin << ' ' << vmax << '\n';

    const size_t count = v.voxels.size();
    switch (dtype) {
        case VoxelType::u8: {
            std::vector<uint8_t> buf(count);
            for (size_t i = 0; i < count; ++i) {
                float x = std::min(1.0f, std::max(0.0f, v.voxels[i]));
                buf[i] = static_cast<uint8_t>(std::lround(x * 255.0f));
            }
            f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(count));
            break;
        }
        case VoxelType::u16: {
            std::vector<uint16_t> buf(count);
            for (size_t i = 0; i < count; ++i) {
                float x = std::min(1.0f, std::max(0.0f, v.voxels[i]));
                buf[i] = static_cast<uint16_t>(std::lround(x * 65535.0f));
            }
            f.write(reinterpret_cast<const char*>(buf.data()),
                    static_cast<std::streamsize>(count * 2));
            break;
        }
        case VoxelType::f32: {
            f.write(reinterpret_cast<const char*>(v.voxels.data()),
                    static_cast<std::streamsize>(count * 4));
            break;
        }
    }
    if (!f) throw IoError("short write: " + path);
}

std::vector<Slice> slice_volume(const Volume& v, Plane plane, std::optional<CropRect> crop) {
    int count = 0, sh = 0, sw = 0;
    switch (plane) {
        case Plane::axial: count = v.depth; sh = v.height; sw = v.width; break;
        case Plane::frontal: count = v.height; sh = v.depth; sw = v.width; break;
        case Plane::sagittal: count = v.width; sh = v.depth; sw = v.height; break;
    }

    int cx = 0, cy = 0, cw = sw, ch = sh;
    if (crop) {
        cx = crop->x; cy = crop->y; cw = crop->w; ch = crop->h;
        if (cw < 1 || ch < 1 || cx < 0 || cy < 0 || cx + cw > sw || cy + ch > sh)
            throw ValidationError("slice_volume: crop outside plane extent");
    }

    std::vector<Slice> out(count);
    for (int k = 0; k < count; ++k) {
        Slice& s = out[k];
        s.height = ch;
        s.width = cw;
        s.plane = plane;
        s.index = k;
        s.source_id = v.id;
        s.pixels.resize(static_cast<size_t>(cw) * ch);
        for (int i = 0; i < ch; ++i) {
            for (int j = 0; j < cw; ++j) {
                float val = 0;
                const int y = cy + i, x = cx + j;
                switch (plane) {
                    case Plane::axial: val = v.at(k, y, x); break;
                    case Plane::frontal: val = v.at(y, k, x); break;
                    case Plane::sagittal: val = v.at(y, x, k); break;
                }
                s.at(i, j) = val;
            }
        }
    }
    return out;
}

}  // namespace harunet
