#include "harunet/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harunet {

size_t BinaryMask::count_set() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b != 0;
    return n;
}

namespace {

BinaryMask like(const BinaryMask& m, MaskStage stage) {
    BinaryMask out;
    out.height = m.height;
    out.width = m.width;
    out.stage = stage;
    out.bits.assign(m.bits.size(), 0);
    return out;
}

// Square structuring element of side k as an offset range. Even sides get the
// extra tap on the positive side; dilation and erosion use the same offsets
// so that closing never removes original foreground.
struct KernelRange {
    int lo, hi;
    explicit KernelRange(int k) : lo(-(k - 1) / 2), hi(k / 2) {}
};

// Separable dilation: out(q) = OR over b in [lo,hi]^2 of in(q - b).
std::vector<uint8_t> dilate_bits(const std::vector<uint8_t>& in, int h, int w, int k) {
    const KernelRange r(k);
    std::vector<uint8_t> tmp(in.size(), 0), out(in.size(), 0);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = &in[static_cast<size_t>(y) * w];
        uint8_t* trow = &tmp[static_cast<size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            const int xlo = std::max(0, x - r.hi), xhi = std::min(w - 1, x - r.lo);
            for (int xx = xlo; xx <= xhi && !v; ++xx) v = row[xx];
            trow[x] = v;
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        uint8_t* orow = &out[static_cast<size_t>(y) * w];
        const int ylo = std::max(0, y - r.hi), yhi = std::min(h - 1, y - r.lo);
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int yy = ylo; yy <= yhi && !v; ++yy) v = tmp[static_cast<size_t>(yy) * w + x];
            orow[x] = v;
        }
    }
    return out;
}

// Separable erosion: out(p) = AND over b in [lo,hi]^2 of in(p + b), with the
// outside treated as foreground.
std::vector<uint8_t> erode_bits(const std::vector<uint8_t>& in, int h, int w, int k) {
    const KernelRange r(k);
    std::vector<uint8_t> tmp(in.size(), 0), out(in.size(), 0);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = &in[static_cast<size_t>(y) * w];
        uint8_t* trow = &tmp[static_cast<size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            uint8_t v = 1;
            const int xlo = std::max(0, x + r.lo), xhi = std::min(w - 1, x + r.hi);
            for (int xx = xlo; xx <= xhi && v; ++xx) v = row[xx];
            trow[x] = v;
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        uint8_t* orow = &out[static_cast<size_t>(y) * w];
        const int ylo = std::max(0, y + r.lo), yhi = std::min(h - 1, y + r.hi);
        for (int x = 0; x < w; ++x) {
            uint8_t v = 1;
            for (int yy = ylo; yy <= yhi && v; ++yy) v = tmp[static_cast<size_t>(yy) * w + x];
            orow[x] = v;
        }
    }
    return out;
}

}  // namespace

BinaryMask kmeans_foreground(const Slice& s, const KMeansConfig& cfg) {
    BinaryMask m;
    m.height = s.height;
    m.width = s.width;
    m.stage = MaskStage::M0;
    m.bits.assign(s.pixels.size(), 0);

    std::vector<float> nz;
    nz.reserve(s.pixels.size());
    for (float p : s.pixels)
        if (p > 0.0f) nz.push_back(p * 255.0f);
    if (nz.empty()) return m;

    const auto all_nonzero_foreground = [&] {
        for (size_t i = 0; i < s.pixels.size(); ++i) m.bits[i] = s.pixels[i] > 0.0f;
    };

    // Centers start at the 25th / 75th percentiles of the non-zero values.
    std::vector<float> sorted = nz;
    std::sort(sorted.begin(), sorted.end());
    double c_lo = sorted[sorted.size() / 4];
    double c_hi = sorted[(sorted.size() * 3) / 4];
    if (c_lo == c_hi) {
        all_nonzero_foreground();
        return m;
    }

    for (int it = 0; it < cfg.max_iters; ++it) {
        double sum_lo = 0, sum_hi = 0;
        size_t n_lo = 0, n_hi = 0;
        const double mid = 0.5 * (c_lo + c_hi);
        for (float v : nz) {
            if (v <= mid) { sum_lo += v; ++n_lo; }
            else { sum_hi += v; ++n_hi; }
        }
        if (n_lo == 0 || n_hi == 0) {
            all_nonzero_foreground();
            return m;
        }
        const double new_lo = sum_lo / static_cast<double>(n_lo);
        const double new_hi = sum_hi / static_cast<double>(n_hi);
        const double shift = std::max(std::abs(new_lo - c_lo), std::abs(new_hi - c_hi));
        c_lo = new_lo;
        c_hi = new_hi;
        if (shift < cfg.epsilon) break;
    }

    const double mid = 0.5 * (c_lo + c_hi);
    for (size_t i = 0; i < s.pixels.size(); ++i) {
        const float v = s.pixels[i] * 255.0f;
        m.bits[i] = s.pixels[i] > 0.0f && v > mid;
    }
    return m;
}

BinaryMask dilate_mask(const BinaryMask& m0, int kernel) {
    if (m0.stage != MaskStage::M0)
        throw ValidationError("dilate_mask: expected an M0 mask");
    BinaryMask out = like(m0, MaskStage::M1);
    out.bits = dilate_bits(m0.bits, m0.height, m0.width, kernel);
    return out;
}

std::vector<uint8_t> interior_holes(const BinaryMask& m) {
    const int h = m.height, w = m.width;
    // Background connectivity is 4-connected; anything reachable from the
    // border is outside, the rest of the background is a hole.
    std::vector<uint8_t> outside(m.bits.size(), 0);
    std::vector<int> stack;
    auto push = [&](int y, int x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        if (!m.bits[i] && !outside[i]) {
            outside[i] = 1;
            stack.push_back(y * w + x);
        }
    };
    for (int x = 0; x < w; ++x) { push(0, x); push(h - 1, x); }
    for (int y = 0; y < h; ++y) { push(y, 0); push(y, w - 1); }
    while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int y = p / w, x = p % w;
        if (y > 0) push(y - 1, x);
        if (y + 1 < h) push(y + 1, x);
        if (x > 0) push(y, x - 1);
        if (x + 1 < w) push(y, x + 1);
    }

    std::vector<uint8_t> holes(m.bits.size(), 0);
    for (size_t i = 0; i < m.bits.size(); ++i) holes[i] = !m.bits[i] && !outside[i];
    return holes;
}

BinaryMask close_mask(const BinaryMask& m, int kernel) {
    BinaryMask out = m;
    out.bits = erode_bits(dilate_bits(m.bits, m.height, m.width, kernel), m.height, m.width, kernel);
    return out;
}

BinaryMask fill_holes(const BinaryMask& m1, int kernel_start, int kernel_step, int max_iters) {
    if (m1.stage != MaskStage::M1)
        throw ValidationError("fill_holes: expected an M1 mask");

    BinaryMask cur = m1;
    cur.stage = MaskStage::Mf;
    int kernel = kernel_start;
    for (int it = 0; it < max_iters; ++it) {
        const auto holes = interior_holes(cur);
        bool any = false;
        for (size_t i = 0; i < holes.size(); ++i) {
            if (holes[i]) { cur.bits[i] = 1; any = true; }
        }
        if (!any && it > 0) break;
        cur = close_mask(cur, kernel);
        kernel += kernel_step;
    }
    // Closing can seal a near-closed boundary and create a fresh interior
    // region; the result must be hole-free, so fill once more without closing.
    const auto holes = interior_holes(cur);
    for (size_t i = 0; i < holes.size(); ++i)
        if (holes[i]) cur.bits[i] = 1;
    return cur;
}

BinaryMask segment_slice(const Slice& s, const SegmentationConfig& cfg) {
    const BinaryMask m0 = kmeans_foreground(s, cfg.kmeans);
    const BinaryMask m1 = dilate_mask(m0, cfg.dilate_kernel);
    return fill_holes(m1, cfg.fill_kernel_start, cfg.fill_kernel_step, cfg.max_fill_iters);
}

}  // namespace harunet
