#include "harunet/patching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "harunet/noise.hpp"
#include "harunet/png_io.hpp"
#include "harunet/rng.hpp"

namespace harunet {

std::vector<BoundingBox> extract_bounding_boxes(const BinaryMask& mf) {
    if (mf.stage != MaskStage::Mf)
        throw ValidationError("extract_bounding_boxes: expects a hole-filled mask");
    const int h = mf.height, w = mf.width;
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<BoundingBox> boxes;
    std::vector<int> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mf.at(y, x) || label[static_cast<size_t>(y) * w + x] >= 0) continue;
            const int id = static_cast<int>(boxes.size());
            BoundingBox b{x, y, 1, 1};
            int x0 = x, y0 = y, x1 = x, y1 = y;
            label[static_cast<size_t>(y) * w + x] = id;
            stack.push_back(y * w + x);
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int py = p / w, px = p % w;
                x0 = std::min(x0, px);
                x1 = std::max(x1, px);
                y0 = std::min(y0, py);
                y1 = std::max(y1, py);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = py + dy, nx = px + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        const size_t q = static_cast<size_t>(ny) * w + nx;
                        if (!mf.bits[q] || label[q] >= 0) continue;
                        label[q] = id;
                        stack.push_back(ny * w + nx);
                    }
                }
            }
            b = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
            boxes.push_back(b);
        }
    }
    return boxes;
}

std::vector<BoundingBox> remove_nested_boxes(std::vector<BoundingBox> boxes) {
    const size_t n = boxes.size();
    std::vector<bool> drop(n, false);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (i == j || !boxes[j].contains(boxes[i])) continue;
            // Mutual containment means identical boxes; keep the earlier one.
            if (boxes[i].contains(boxes[j]) && i < j) continue;
            drop[i] = true;
            break;
        }
    }
    std::vector<BoundingBox> kept;
    for (size_t i = 0; i < n; ++i)
        if (!drop[i]) kept.push_back(boxes[i]);
    return kept;
}

namespace {

// Grid offsets along one axis: non-overlapping from the box start, plus one
// flush-to-end offset (marked) when a strip would stay uncovered.
void axis_offsets(int start, int extent, int patch, std::vector<std::pair<int, bool>>& out) {
    out.clear();
    int pos = start;
    for (; pos + patch <= start + extent; pos += patch) out.emplace_back(pos, false);
    if (pos < start + extent) out.emplace_back(start + extent - patch, true);
}

}  // namespace

std::vector<PatchRecord> tile_patches(const BoundingBox& box, int patch, int slice_w,
                                      int slice_h) {
    if (patch < 1) throw ValidationError("tile_patches: patch size must be positive");
    if (patch > slice_w || patch > slice_h)
        throw ValidationError("tile_patches: patch exceeds slice extent");
    if (box.w < 1 || box.h < 1 || box.x < 0 || box.y < 0 || box.x + box.w > slice_w ||
        box.y + box.h > slice_h)
        throw ValidationError("tile_patches: box outside slice");

    BoundingBox b = box;
    if (b.w < patch) {
        b.x -= (patch - b.w) / 2;
        b.w = patch;
        b.x = std::clamp(b.x, 0, slice_w - patch);
    }
    if (b.h < patch) {
        b.y -= (patch - b.h) / 2;
        b.h = patch;
        b.y = std::clamp(b.y, 0, slice_h - patch);
    }

    std::vector<std::pair<int, bool>> xs, ys;
    axis_offsets(b.x, b.w, patch, xs);
    axis_offsets(b.y, b.h, patch, ys);
    std::vector<PatchRecord> out;
    out.reserve(xs.size() * ys.size());
    for (const auto& [y, ry] : ys)
        for (const auto& [x, rx] : xs) out.push_back({x, y, patch, rx || ry, ""});
    return out;
}

namespace {

Slice crop_slice(const Slice& s, int x, int y, int size) {
    Slice out;
    out.height = out.width = size;
    out.plane = s.plane;
    out.index = s.index;
    out.source_id = s.source_id;
    out.pixels.resize(static_cast<size_t>(size) * size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) out.at(i, j) = s.at(y + i, x + j);
    return out;
}

// Largest-remainder split of n volumes into train/val/test counts, then
// fix-ups so val (n >= 2) and test (n >= 3) are never empty.
std::array<int, 3> split_counts(int n, double ft, double fv, double fe) {
    const double ideal[3] = {ft * n, fv * n, fe * n};
    std::array<int, 3> c{};
    double frac[3];
    int used = 0;
    for (int i = 0; i < 3; ++i) {
        c[i] = static_cast<int>(ideal[i]);
        frac[i] = ideal[i] - c[i];
        used += c[i];
    }
    for (int left = n - used; left > 0; --left) {
        const int pick = static_cast<int>(std::max_element(frac, frac + 3) - frac);
        ++c[pick];
        frac[pick] = -1;
    }
    if (n >= 2 && c[1] == 0) {
        --c[c[0] > c[2] ? 0 : 2];
        ++c[1];
    }
    if (n >= 3 && c[2] == 0) {
        --c[c[0] > 1 ? 0 : 1];
        ++c[2];
    }
    return c;
}

}  // namespace

PatchDatasetResult build_patch_dataset(const std::vector<Volume>& volumes,
                                       const PatchDatasetConfig& cfg) {
    namespace fs = std::filesystem;
    if (volumes.empty()) throw ValidationError("build_patch_dataset: no volumes");
    if (cfg.out_dir.empty()) throw ValidationError("build_patch_dataset: no output directory");
    const double fsum = cfg.frac_train + cfg.frac_val + cfg.frac_test;
    if (cfg.frac_train <= 0 || cfg.frac_val < 0 || cfg.frac_test < 0 ||
        std::abs(fsum - 1.0) > 1e-9)
        throw ValidationError("build_patch_dataset: split fractions must sum to 1");
    if (cfg.sigma_jitter < 0 || cfg.sigma_jitter >= 1)
        throw ValidationError("build_patch_dataset: sigma_jitter must be in [0, 1)");

    const int n = static_cast<int>(volumes.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Prng rng(cfg.split_seed, /*stream=*/0);
    rng.shuffle(order.begin(), order.end());
    const auto counts = split_counts(n, cfg.frac_train, cfg.frac_val, cfg.frac_test);
    std::vector<Split> split_of(n);
    for (int i = 0; i < n; ++i) {
        const Split s = i < counts[0]                ? Split::train
                        : i < counts[0] + counts[1] ? Split::val
                                                    : Split::test;
        split_of[order[i]] = s;
    }

    PatchDatasetResult res;
    res.manifest.noise = cfg.noise;
    res.manifest.rng_name = kRngName;
    res.manifest.seed = cfg.split_seed;

    for (const char* sub : {"train", "val", "test"})
        fs::create_directories(fs::path(cfg.out_dir) / sub);

    uint64_t slice_ordinal = 0;
    uint64_t pair_counter = 0;
    for (Plane plane : cfg.planes) {
        for (int vi = 0; vi < n; ++vi) {
            const Volume& vol = volumes[vi];
            const Split split = split_of[vi];
            const auto slices = slice_volume(vol, plane);
            for (const Slice& clean : slices) {
                const uint64_t stream = slice_ordinal++;
                const BinaryMask mf = segment_slice(clean, cfg.segmentation);
                if (mf.count_set() == 0) {
                    ++res.slices_without_foreground;
                    continue;
                }
                auto boxes = remove_nested_boxes(extract_bounding_boxes(mf));
                std::vector<PatchRecord> recs;
                for (const auto& b : boxes)
                    for (auto& r : tile_patches(b, cfg.patch, clean.width, clean.height))
                        recs.push_back(r);
                if (recs.empty()) continue;

                NoiseParams np = cfg.noise;
                if (cfg.sigma_jitter > 0) {
                    Prng jr(cfg.noise.seed, stream | (1ull << 62));
                    np.sigma_q *= 1.0 + cfg.sigma_jitter * jr.uniform(-1.0, 1.0);
                    np.sigma_e *= 1.0 + cfg.sigma_jitter * jr.uniform(-1.0, 1.0);
                }
                const Slice noisy = add_noise(clean, np, stream);

                for (const auto& r : recs) {
                    char pair[32];
                    std::snprintf(pair, sizeof pair, "p%06llu",
                                  static_cast<unsigned long long>(pair_counter++));
                    char base[256];
                    std::snprintf(base, sizeof base, "%s/%s_%s_s%04d_x%04d_y%04d", split_name(split),
                                  vol.id.c_str(), plane_name(plane), clean.index, r.x, r.y);
                    for (PatchRole role : {PatchRole::noisy, PatchRole::clean}) {
                        const Slice& src = role == PatchRole::noisy ? noisy : clean;
                        const Slice patch = crop_slice(src, r.x, r.y, r.size);
                        const std::string rel = std::string(base) + '_' +
                                                (role == PatchRole::noisy ? "noisy" : "clean") +
                                                ".png";
                        write_png16((fs::path(cfg.out_dir) / rel).string(), patch.pixels.data(),
                                    patch.height, patch.width);
                        ManifestEntry e;
                        e.path = rel;
                        e.role = role;
                        e.pair_id = pair;
                        e.split = split;
                        e.volume_id = vol.id;
                        e.plane = plane;
                        e.slice_index = clean.index;
                        e.x = r.x;
                        e.y = r.y;
                        e.size = r.size;
                        e.overlap = r.overlap;
                        res.manifest.entries.push_back(std::move(e));
                    }
                }
            }
        }
    }
    validate_manifest(res.manifest);
    write_manifest(res.manifest, (fs::path(cfg.out_dir) / "manifest.tsv").string());
    return res;
}

}  // namespace harunet
