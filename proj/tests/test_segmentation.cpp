#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "harunet/noise.hpp"
#include "harunet/reference.hpp"
#include "harunet/rng.hpp"
#include "harunet/segmentation.hpp"
#include "harunet/training.hpp"
#include "harunet/volume.hpp"

using namespace harunet;

namespace {

Slice make_slice(int h, int w, float fill = 0.0f) {
    Slice s;
    s.height = h;
    s.width = w;
    s.pixels.assign(static_cast<size_t>(h) * w, fill);
    return s;
}

BinaryMask make_mask(int h, int w, MaskStage stage) {
    BinaryMask m;
    m.height = h;
    m.width = w;
    m.stage = stage;
    m.bits.assign(static_cast<size_t>(h) * w, 0);
    return m;
}

BinaryMask random_mask(Prng& rng, int h, int w, double density) {
    BinaryMask m = make_mask(h, w, MaskStage::M0);
    for (auto& b : m.bits) b = rng.uniform() < density;
    return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (size_t i = 0; i < a.bits.size(); ++i)
        if (a.bits[i] && !b.bits[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("clustering degenerate inputs") {
    SUBCASE("all-zero slice gives an empty mask") {
        const BinaryMask m = kmeans_foreground(make_slice(12, 12));
        CHECK(m.count_set() == 0);
        CHECK(m.stage == MaskStage::M0);
    }
    SUBCASE("uniform non-zero intensity marks the whole support") {
        Slice s = make_slice(12, 12);
        for (int y = 3; y < 9; ++y)
            for (int x = 2; x < 7; ++x) s.at(y, x) = 0.42f;
        const BinaryMask m = kmeans_foreground(s);
        CHECK(m.count_set() == 30);
        for (int y = 3; y < 9; ++y)
            for (int x = 2; x < 7; ++x) CHECK(m.at(y, x) == 1);
    }
}

TEST_CASE("clustering separates two intensity populations exactly") {
    Slice s = make_slice(20, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 8; ++x) s.at(y, x) = 0.2f;
    for (int y = 0; y < 20; ++y)
        for (int x = 12; x < 20; ++x) s.at(y, x) = 0.8f;
    const BinaryMask m = kmeans_foreground(s);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) CHECK(m.at(y, x) == (x >= 12 ? 1 : 0));
}

TEST_CASE("zero pixels stay background whatever the cluster split") {
    Slice s = make_slice(10, 10);
    s.at(1, 1) = 0.05f;
    s.at(2, 2) = 0.06f;
    s.at(3, 3) = 0.9f;
    const BinaryMask m = kmeans_foreground(s);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(3, 3) == 1);
    CHECK(m.count_set() < 3);
}

TEST_CASE("stage checks reject out-of-order morphology") {
    BinaryMask m0 = make_mask(8, 8, MaskStage::M0);
    BinaryMask m1 = make_mask(8, 8, MaskStage::M1);
    CHECK_THROWS_AS(dilate_mask(m1), ValidationError);
    CHECK_THROWS_AS(fill_holes(m0), ValidationError);
    CHECK(dilate_mask(m0).stage == MaskStage::M1);
    CHECK(fill_holes(dilate_mask(m0)).stage == MaskStage::Mf);
}

TEST_CASE("separable dilation matches the direct-loop reference") {
    Prng rng(17, 0);
    for (int k : {2, 3, 5, 7}) {
        for (int trial = 0; trial < 5; ++trial) {
            const int h = 9 + static_cast<int>(rng.below(24));
            const int w = 9 + static_cast<int>(rng.below(24));
            BinaryMask m = random_mask(rng, h, w, 0.25);
            const BinaryMask d = dilate_mask(m, k);
            CHECK(d.bits == ref::dilate(m.bits, h, w, k));
            const BinaryMask c = close_mask(m, k);
            CHECK(c.bits == ref::erode(ref::dilate(m.bits, h, w, k), h, w, k));
        }
    }
}

TEST_CASE("even kernels take the extra tap on the positive side") {
    BinaryMask m = make_mask(5, 5, MaskStage::M0);
    m.at(2, 2) = 1;
    const BinaryMask d = dilate_mask(m, 2);
    CHECK(d.count_set() == 4);
    CHECK(d.at(2, 2) == 1);
    CHECK(d.at(2, 3) == 1);
    CHECK(d.at(3, 2) == 1);
    CHECK(d.at(3, 3) == 1);
}

TEST_CASE("closing never removes original foreground") {
    Prng rng(23, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(6));
        BinaryMask m = random_mask(rng, 16, 16, 0.2);
        CHECK(subset(m, close_mask(m, k)));
    }
}

TEST_CASE("interior holes exclude border-connected background") {
    BinaryMask m = make_mask(10, 10, MaskStage::M1);
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x) m.at(y, x) = 1;
    m.at(4, 4) = 0;  // fully enclosed
    m.at(2, 4) = 0;  // notch on the box edge, 4-connected to the outside
    const auto holes = interior_holes(m);
    CHECK(holes[4 * 10 + 4] == 1);
    CHECK(holes[2 * 10 + 4] == 0);
    CHECK(holes[0] == 0);
}

TEST_CASE("an annulus comes out hole-free") {
    Slice s = make_slice(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double r = std::hypot(y - 32.0, x - 32.0);
            if (r >= 10 && r <= 22) s.at(y, x) = 0.7f;
        }
    const BinaryMask mf = segment_slice(s);
    const auto holes = interior_holes(mf);
    CHECK(std::count(holes.begin(), holes.end(), uint8_t(1)) == 0);
    CHECK(mf.at(32, 32) == 1);
    CHECK(mf.at(1, 1) == 0);
}

TEST_CASE("mask stages only ever grow on phantom slices") {
    for (uint64_t seed : {2ull, 9ull, 31ull}) {
        const Volume v = generate_phantom_volume(seed, 4, 96, 96);
        const auto slices = slice_volume(v, Plane::axial);
        for (size_t i = 0; i < slices.size(); ++i) {
            Slice noisy = add_noise(slices[i], NoiseParams(0.04, 0.02, seed, true), i);
            for (const Slice* s : {&slices[i], static_cast<const Slice*>(&noisy)}) {
                const BinaryMask m0 = kmeans_foreground(*s);
                const BinaryMask m1 = dilate_mask(m0);
                const BinaryMask mf = fill_holes(m1);
                CHECK(subset(m0, m1));
                CHECK(subset(m1, mf));
            }
        }
    }
}
