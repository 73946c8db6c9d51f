#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "harunet/patching.hpp"
#include "harunet/rng.hpp"
#include "harunet/training.hpp"

using namespace harunet;
namespace fs = std::filesystem;

namespace {

BinaryMask mask_from(const char* const* rows, int h, int w) {
    BinaryMask m;
    m.height = h;
    m.width = w;
    m.stage = MaskStage::Mf;
    m.bits.assign(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = rows[y][x] == '#';
    return m;
}

std::set<std::pair<int, int>> positions(const std::vector<PatchRecord>& recs) {
    std::set<std::pair<int, int>> s;
    for (const auto& r : recs) s.insert({r.x, r.y});
    return s;
}

}  // namespace

TEST_CASE("bounding boxes are tight and 8-connected") {
    const char* rows[] = {
        "........",
        ".##.....",
        ".##..#..",
        "....#...",
        "........",
    };
    const BinaryMask m = mask_from(rows, 5, 8);
    auto boxes = extract_bounding_boxes(m);
    REQUIRE(boxes.size() == 2);
    std::sort(boxes.begin(), boxes.end(),
              [](const BoundingBox& a, const BoundingBox& b) { return a.x < b.x; });
    CHECK(boxes[0] == BoundingBox{1, 1, 2, 2});
    CHECK(boxes[1] == BoundingBox{4, 2, 2, 2});  // diagonal touch joins one component
}

TEST_CASE("bounding boxes require the hole-filled stage") {
    BinaryMask m;
    m.height = m.width = 4;
    m.stage = MaskStage::M1;
    m.bits.assign(16, 1);
    CHECK_THROWS_AS(extract_bounding_boxes(m), ValidationError);
}

TEST_CASE("nested-box removal against the exhaustive containment oracle") {
    Prng rng(41, 0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BoundingBox> boxes;
        const int n = 1 + static_cast<int>(rng.below(12));
        for (int i = 0; i < n; ++i) {
            BoundingBox b;
            b.x = static_cast<int>(rng.below(20));
            b.y = static_cast<int>(rng.below(20));
            b.w = 1 + static_cast<int>(rng.below(16));
            b.h = 1 + static_cast<int>(rng.below(16));
            boxes.push_back(b);
            if (rng.below(3) == 0) boxes.push_back(b);  // force duplicates
        }

        std::vector<BoundingBox> expect;
        for (size_t i = 0; i < boxes.size(); ++i) {
            bool dropped = false;
            for (size_t j = 0; j < boxes.size() && !dropped; ++j) {
                if (i == j || !boxes[j].contains(boxes[i])) continue;
                dropped = !(boxes[i] == boxes[j]) || j < i;
            }
            if (!dropped) expect.push_back(boxes[i]);
        }
        CHECK(remove_nested_boxes(boxes) == expect);
    }
}

TEST_CASE("partial overlap keeps both boxes") {
    const std::vector<BoundingBox> boxes = {{0, 0, 10, 10}, {5, 5, 10, 10}};
    CHECK(remove_nested_boxes(boxes) == boxes);
}

TEST_CASE("tiling covers a 300x300 box with one grid patch and three residuals") {
    const auto recs = tile_patches(BoundingBox{0, 0, 300, 300}, 256, 512, 512);
    REQUIRE(recs.size() == 4);
    CHECK(positions(recs) ==
          std::set<std::pair<int, int>>{{0, 0}, {44, 0}, {0, 44}, {44, 44}});
    int flagged = 0;
    for (const auto& r : recs) {
        CHECK(r.size == 256);
        flagged += r.overlap;
        if (r.x == 0 && r.y == 0) CHECK(!r.overlap);
    }
    CHECK(flagged == 3);
}

TEST_CASE("small boxes are extended symmetrically") {
    const auto recs = tile_patches(BoundingBox{200, 200, 100, 100}, 256, 512, 512);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].x == 122);
    CHECK(recs[0].y == 122);
    CHECK(!recs[0].overlap);
}

TEST_CASE("extension shifts inward at slice borders") {
    const auto near_origin = tile_patches(BoundingBox{2, 3, 10, 10}, 64, 256, 256);
    REQUIRE(near_origin.size() == 1);
    CHECK(near_origin[0].x == 0);
    CHECK(near_origin[0].y == 0);

    const auto near_far = tile_patches(BoundingBox{500, 498, 12, 14}, 64, 512, 512);
    REQUIRE(near_far.size() == 1);
    CHECK(near_far[0].x == 448);
    CHECK(near_far[0].y == 448);
}

TEST_CASE("tiling rejects impossible geometry") {
    CHECK_THROWS_AS(tile_patches(BoundingBox{0, 0, 10, 10}, 0, 64, 64), ValidationError);
    CHECK_THROWS_AS(tile_patches(BoundingBox{0, 0, 10, 10}, 128, 64, 64), ValidationError);
    CHECK_THROWS_AS(tile_patches(BoundingBox{60, 0, 10, 10}, 16, 64, 64), ValidationError);
}

TEST_CASE("every foreground pixel lands inside a retained patch") {
    Prng rng(97, 0);
    for (int trial = 0; trial < 30; ++trial) {
        BinaryMask m;
        m.height = m.width = 48;
        m.stage = MaskStage::Mf;
        m.bits.assign(48 * 48, 0);
        const int nblobs = 1 + static_cast<int>(rng.below(4));
        for (int b = 0; b < nblobs; ++b) {
            const int cx = 8 + static_cast<int>(rng.below(32));
            const int cy = 8 + static_cast<int>(rng.below(32));
            const int r = 2 + static_cast<int>(rng.below(7));
            for (int y = std::max(0, cy - r); y < std::min(48, cy + r); ++y)
                for (int x = std::max(0, cx - r); x < std::min(48, cx + r); ++x) m.at(y, x) = 1;
        }

        const auto boxes = remove_nested_boxes(extract_bounding_boxes(m));
        std::vector<PatchRecord> all;
        for (const auto& b : boxes) {
            const auto recs = tile_patches(b, 16, 48, 48);
            // Unflagged patches of one box form a disjoint grid.
            for (size_t i = 0; i < recs.size(); ++i)
                for (size_t j = i + 1; j < recs.size(); ++j) {
                    if (recs[i].overlap || recs[j].overlap) continue;
                    const bool apart = recs[i].x + 16 <= recs[j].x || recs[j].x + 16 <= recs[i].x ||
                                       recs[i].y + 16 <= recs[j].y || recs[j].y + 16 <= recs[i].y;
                    CHECK(apart);
                }
            all.insert(all.end(), recs.begin(), recs.end());
        }
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                if (!m.at(y, x)) continue;
                bool covered = false;
                for (const auto& r : all)
                    covered |= x >= r.x && x < r.x + r.size && y >= r.y && y < r.y + r.size;
                CHECK(covered);
            }
    }
}

TEST_CASE("corpus construction is deterministic") {
    const fs::path dir = fs::temp_directory_path() / "harunet_patch_test";
    fs::remove_all(dir);

    std::vector<Volume> vols;
    for (uint64_t seed : {1ull, 2ull, 3ull}) vols.push_back(generate_phantom_volume(seed, 3, 96, 96));

    PatchDatasetConfig cfg;
    cfg.noise = NoiseParams(0.04, 0.02, 9, true);
    cfg.split_seed = 9;
    cfg.patch = 48;
    cfg.frac_train = 0.7;
    cfg.frac_val = 0.15;
    cfg.frac_test = 0.15;

    cfg.out_dir = (dir / "a").string();
    const auto ra = build_patch_dataset(vols, cfg);
    cfg.out_dir = (dir / "b").string();
    const auto rb = build_patch_dataset(vols, cfg);

    CHECK(ra.manifest == rb.manifest);
    CHECK(ra.slices_without_foreground == rb.slices_without_foreground);
    CHECK(!ra.manifest.entries.empty());

    // Same bytes on disk for the first few patches.
    int compared = 0;
    for (const auto& e : ra.manifest.entries) {
        if (compared++ == 6) break;
        std::ifstream fa(dir / "a" / e.path, std::ios::binary);
        std::ifstream fb(dir / "b" / e.path, std::ios::binary);
        REQUIRE(fa.good());
        REQUIRE(fb.good());
        const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(ba == bb);
    }

    // Pairing invariants hold by construction.
    validate_manifest(ra.manifest);
    fs::remove_all(dir);
}
