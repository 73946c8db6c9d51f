#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "harunet/errors.hpp"
#include "harunet/training.hpp"

namespace harunet {

namespace {

struct Blob {
    double cz, cy, cx;  // center, fraction of each extent
    double az, ay, ax;  // semi-axes, fraction of each extent
    double level;       // tissue intensity, or cavity attenuation factor
};

struct Wave {
    double fz, fy, fx, phase;  // cycles per extent
};

double smooth01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

/// 1 deep inside the blob, smooth falloff to exactly 0 at the surface. The
/// transition band is kept narrow so tissue boundaries stay sharp enough
/// that naive smoothing filters lose real signal.
double membership(const Blob& b, double uz, double uy, double ux) {
    const double dz = (uz - b.cz) / b.az;
    const double dy = (uy - b.cy) / b.ay;
    const double dx = (ux - b.cx) / b.ax;
    const double rho = std::sqrt(dz * dz + dy * dy + dx * dx);
    return smooth01((1.0 - rho) / 0.02);
}

}  // namespace

Volume generate_phantom_volume(uint64_t seed, int depth, int height, int width,
                               double voxel_mm) {
    if (depth < 1 || height < 16 || width < 16)
        throw ValidationError("phantom: need depth >= 1 and in-plane extents >= 16");

    Prng rng(seed, 0);
    std::vector<Blob> tissue, cavities;
    const int n_ell = 3 + static_cast<int>(rng.below(6));
    // One tissue intensity per volume with small per-structure jitter; widely
    // different levels inside one scan would not survive intensity clustering.
    const double tissue_level = rng.uniform(0.60, 0.82);
    for (int e = 0; e < n_ell; ++e) {
        Blob b;
        b.cz = rng.uniform(0.34, 0.66);
        b.cy = rng.uniform(0.34, 0.66);
        b.cx = rng.uniform(0.34, 0.66);
        b.az = rng.uniform(0.20, 0.32);
        b.ay = rng.uniform(0.20, 0.32);
        b.ax = rng.uniform(0.20, 0.32);
        b.level = tissue_level + rng.uniform(-0.04, 0.04);
        tissue.push_back(b);
        const int n_cav = 1 + static_cast<int>(rng.below(3));
        for (int c = 0; c < n_cav; ++c) {
            Blob cav;
            cav.cz = b.cz + rng.uniform(-0.45, 0.45) * b.az;
            cav.cy = b.cy + rng.uniform(-0.45, 0.45) * b.ay;
            cav.cx = b.cx + rng.uniform(-0.45, 0.45) * b.ax;
            cav.az = rng.uniform(0.10, 0.22) * b.az;
            cav.ay = rng.uniform(0.10, 0.22) * b.ay;
            cav.ax = rng.uniform(0.10, 0.22) * b.ax;
            cav.level = rng.uniform(0.02, 0.10);
            cavities.push_back(cav);
        }
    }
    Wave waves[3];
    for (auto& wv : waves) {
        wv.fz = rng.uniform(2.0, 6.0);
        wv.fy = rng.uniform(8.0, 24.0);
        wv.fx = rng.uniform(8.0, 24.0);
        wv.phase = rng.uniform(0.0, 2.0 * M_PI);
    }

    Volume v;
    v.depth = depth;
    v.height = height;
    v.width = width;
    v.voxel_size_mm = voxel_mm;
    v.id = "phantom-" + std::to_string(seed);
    v.voxels.assign(static_cast<size_t>(depth) * height * width, 0.0f);

#pragma omp parallel for schedule(static)
    for (int z = 0; z < depth; ++z) {
        const double uz = (z + 0.5) / depth;
        for (int y = 0; y < height; ++y) {
            const double uy = (y + 0.5) / height;
            for (int x = 0; x < width; ++x) {
                const double ux = (x + 0.5) / width;
                double tex = 0;
                for (const auto& wv : waves)
                    tex += std::sin(2.0 * M_PI * (wv.fz * uz + wv.fy * uy + wv.fx * ux) +
                                    wv.phase);
                tex /= 3.0;
                double val = 0;
                for (const auto& b : tissue)
                    val = std::max(val, membership(b, uz, uy, ux) * (b.level + 0.05 * tex));
                if (val > 0)
                    for (const auto& cav : cavities) {
                        const double w = membership(cav, uz, uy, ux);
                        if (w > 0) val *= 1.0 - w * (1.0 - cav.level);
                    }
                v.at(z, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
        }
    }
    return v;
}

namespace {

/// Fold an out-of-range coordinate back into [0, n) by mirror reflection.
int reflect(int i, int n) {
    const int period = 2 * n;
    int j = i % period;
    if (j < 0) j += period;
    return j < n ? j : period - 1 - j;
}

std::vector<int> tile_starts(int extent, int tile, int stride) {
    std::vector<int> xs;
    for (int x = 0; x + tile <= extent; x += stride) xs.push_back(x);
    if (xs.back() + tile < extent) xs.push_back(extent - tile);
    return xs;
}

}  // namespace

DenoiseResult denoise_volume(const HaruNet<float>& net, const Volume& v, int tile,
                             int overlap) {
    if (v.depth < 1 || v.height < 1 || v.width < 1)
        throw ValidationError("denoise: empty volume");
    if (tile < 1 || overlap < 0 || overlap >= tile)
        throw ValidationError("denoise: need 0 <= overlap < tile");
    const int side = net.config().min_input_side();
    if (tile % side != 0)
        throw ValidationError("denoise: tile must be a multiple of " + std::to_string(side));

    const auto t0 = std::chrono::steady_clock::now();
    const int stride = tile - overlap;
    const int hp = std::max(v.height, tile);
    const int wp = std::max(v.width, tile);
    const auto ys = tile_starts(hp, tile, stride);
    const auto xs = tile_starts(wp, tile, stride);

    // Per-axis blend profile: cosine ramp over the overlap band at both ends.
    std::vector<double> profile(tile, 1.0);
    if (overlap > 0)
        for (int t = 0; t < tile; ++t) {
            auto ramp = [&](int d) {
                return d >= overlap ? 1.0 : 0.5 - 0.5 * std::cos(M_PI * (d + 0.5) / overlap);
            };
            profile[t] = ramp(t) * ramp(tile - 1 - t);
        }

    DenoiseResult res;
    res.volume.depth = v.depth;
    res.volume.height = v.height;
    res.volume.width = v.width;
    res.volume.voxel_size_mm = v.voxel_size_mm;
    res.volume.id = v.id;
    res.volume.voxels.assign(v.voxels.size(), 0.0f);

    std::vector<double> acc(static_cast<size_t>(hp) * wp), wsum(acc.size());
    for (int z = 0; z < v.depth; ++z) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::fill(wsum.begin(), wsum.end(), 0.0);
        for (int ty : ys)
            for (int tx : xs) {
                Array4<float> in(1, 1, tile, tile);
                for (int u = 0; u < tile; ++u) {
                    const int sy = reflect(ty + u, v.height);
                    for (int t = 0; t < tile; ++t)
                        in.at(0, 0, u, t) = v.at(z, sy, reflect(tx + t, v.width));
                }
                const auto pred = net.infer(in);
                for (int u = 0; u < tile; ++u)
                    for (int t = 0; t < tile; ++t) {
                        const double wgt = profile[u] * profile[t];
                        const size_t idx = static_cast<size_t>(ty + u) * wp + tx + t;
                        acc[idx] += wgt * pred.at(0, 0, u, t);
                        wsum[idx] += wgt;
                    }
            }
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
                const size_t idx = static_cast<size_t>(y) * wp + x;
                res.volume.at(z, y, x) =
                    static_cast<float>(std::clamp(acc[idx] / wsum[idx], 0.0, 1.0));
            }
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace harunet
