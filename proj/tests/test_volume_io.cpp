#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "harunet/manifest.hpp"
#include "harunet/rng.hpp"
#include "harunet/volume.hpp"

using namespace harunet;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    const fs::path d = fs::temp_directory_path() / "harunet_test_volume";
    fs::create_directories(d);
    return d;
}

Volume random_volume(int d, int h, int w, uint64_t seed) {
    Volume v;
    v.depth = d;
    v.height = h;
    v.width = w;
    v.id = "rand";
    v.voxels.resize(static_cast<size_t>(d) * h * w);
    Prng rng(seed, 0);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform());
    return v;
}

}  // namespace

TEST_CASE("u16 container normalizes over the declared range") {
    const fs::path p = test_dir() / "mid.hvol";
    {
        std::ofstream f(p, std::ios::binary);
        f << "HVOL v1 4 4 4 u16 0 65535\n";
        const uint16_t mid = 32768;
        for (int i = 0; i < 64; ++i)
            f.write(reinterpret_cast<const char*>(&mid), sizeof mid);
    }
    const Volume v = load_volume(p.string());
    REQUIRE(v.depth == 4);
    for (float x : v.voxels) CHECK(x == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("truncated and oversized payloads are rejected") {
    const fs::path p = test_dir() / "short.hvol";
    {
        std::ofstream f(p, std::ios::binary);
        f << "HVOL v1 4 4 4 u8 0 255\n";
        const char junk[10] = {};
        f.write(junk, sizeof junk);
    }
    CHECK_THROWS_AS(load_volume(p.string()), IoError);

    const fs::path q = test_dir() / "long.hvol";
    {
        std::ofstream f(q, std::ios::binary);
        f << "HVOL v1 2 2 2 u8 0 255\n";
        const char junk[9] = {};
        f.write(junk, sizeof junk);
    }
    CHECK_THROWS_AS(load_volume(q.string()), IoError);
}

TEST_CASE("malformed headers are rejected") {
    const fs::path p = test_dir() / "bad.hvol";
    for (const char* header : {"HVOL v2 2 2 2 u8 0 255", "HVOL v1 2 2 u8 0 255",
                               "HVOL v1 2 2 2 i64 0 255", "HVOL v1 2 2 2 u8 255 255"}) {
        std::ofstream(p, std::ios::binary) << header << "\n";
        CHECK_THROWS_AS(load_volume(p.string()), IoError);
    }
}

TEST_CASE("f32 container round-trips bitwise") {
    const Volume v = random_volume(3, 5, 7, 42);
    const fs::path p = test_dir() / "roundtrip.hvol";
    store_volume(v, p.string(), VoxelType::f32);
    const Volume w = load_volume(p.string());
    REQUIRE(w.voxels.size() == v.voxels.size());
    CHECK(std::memcmp(w.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);
    CHECK(w.id == "roundtrip");
}

TEST_CASE("integer containers preserve intensity ordering") {
    Volume v = random_volume(2, 4, 4, 9);
    const fs::path p = test_dir() / "mono.hvol";
    store_volume(v, p.string(), VoxelType::u16);
    const Volume w = load_volume(p.string());
    for (size_t i = 0; i < v.voxels.size(); ++i)
        for (size_t j = 0; j < v.voxels.size(); ++j)
            if (v.voxels[i] < v.voxels[j]) CHECK(w.voxels[i] <= w.voxels[j]);
}

TEST_CASE("axial slicing yields one full slice per depth index") {
    const Volume v = random_volume(10, 256, 256, 1);
    const auto slices = slice_volume(v, Plane::axial);
    REQUIRE(slices.size() == 10);
    for (const auto& s : slices) {
        CHECK(s.height == 256);
        CHECK(s.width == 256);
        CHECK(s.source_id == "rand");
    }
    const auto cropped = slice_volume(v, Plane::axial, CropRect{0, 0, 128, 128});
    REQUIRE(cropped.size() == 10);
    CHECK(cropped[0].height == 128);
    CHECK(cropped[0].width == 128);
    CHECK(cropped[3].at(5, 6) == v.at(3, 5, 6));
}

TEST_CASE("slice pixels map back to the source voxels in every plane") {
    const Volume v = random_volume(5, 7, 9, 2);
    const auto ax = slice_volume(v, Plane::axial);
    const auto fr = slice_volume(v, Plane::frontal);
    const auto sg = slice_volume(v, Plane::sagittal);
    REQUIRE(ax.size() == 5);
    REQUIRE(fr.size() == 7);
    REQUIRE(sg.size() == 9);
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 9; ++x) {
                CHECK(ax[z].at(y, x) == v.at(z, y, x));
                CHECK(fr[y].at(z, x) == v.at(z, y, x));
                CHECK(sg[x].at(z, y) == v.at(z, y, x));
            }
}

TEST_CASE("each plane's slices partition the voxels") {
    Volume v = random_volume(4, 6, 5, 3);
    for (size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i);
    double vol_sum = 0;
    for (float x : v.voxels) vol_sum += x;
    for (Plane p : {Plane::axial, Plane::frontal, Plane::sagittal}) {
        double sum = 0;
        size_t count = 0;
        for (const auto& s : slice_volume(v, p)) {
            for (float x : s.pixels) sum += x;
            count += s.pixels.size();
        }
        CHECK(count == v.voxels.size());
        CHECK(sum == doctest::Approx(vol_sum));
    }
}

TEST_CASE("out-of-bounds crops are rejected") {
    const Volume v = random_volume(2, 8, 8, 4);
    CHECK_THROWS_AS(slice_volume(v, Plane::axial, CropRect{4, 4, 8, 2}), ValidationError);
    CHECK_THROWS_AS(slice_volume(v, Plane::axial, CropRect{-1, 0, 4, 4}), ValidationError);
    CHECK_THROWS_AS(slice_volume(v, Plane::axial, CropRect{0, 0, 0, 4}), ValidationError);
}

namespace {

DatasetManifest random_manifest(int pairs, uint64_t seed) {
    DatasetManifest m;
    m.noise = NoiseParams(0.03, 0.01, seed, true);
    m.rng_name = kRngName;
    m.seed = seed;
    Prng rng(seed, 1);
    for (int i = 0; i < pairs; ++i) {
        const int vol = static_cast<int>(rng.below(7));
        const Split split = vol < 5 ? Split::train : (vol == 5 ? Split::val : Split::test);
        char pair[16];
        std::snprintf(pair, sizeof pair, "p%03d", i);
        const int slice_index = static_cast<int>(rng.below(20));
        const int x = static_cast<int>(rng.below(100));
        const int y = static_cast<int>(rng.below(100));
        const bool overlap = rng.below(2) == 1;
        for (PatchRole role : {PatchRole::noisy, PatchRole::clean}) {
            ManifestEntry e;
            e.path = std::string(pair) + (role == PatchRole::noisy ? "_n.png" : "_c.png");
            e.role = role;
            e.pair_id = pair;
            e.split = split;
            e.volume_id = "v" + std::to_string(vol);
            e.plane = Plane::axial;
            e.slice_index = slice_index;
            e.x = x;
            e.y = y;
            e.size = 64;
            e.overlap = overlap;
            m.entries.push_back(e);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("manifest round-trip is the identity") {
    const fs::path p = test_dir() / "manifest.tsv";
    SUBCASE("empty") {
        DatasetManifest m;
        m.noise = NoiseParams(0.04, 0.02, 5, false);
        m.rng_name = kRngName;
        m.seed = 5;
        write_manifest(m, p.string());
        CHECK(read_manifest(p.string()) == m);
    }
    SUBCASE("100 random entries") {
        const DatasetManifest m = random_manifest(50, 77);
        write_manifest(m, p.string());
        CHECK(read_manifest(p.string()) == m);
    }
}

TEST_CASE("pairing and split invariants are enforced") {
    DatasetManifest m = random_manifest(3, 8);

    SUBCASE("noisy entry without a clean partner") {
        m.entries.pop_back();
        CHECK_THROWS_AS(validate_manifest(m), ValidationError);
        const fs::path p = test_dir() / "broken.tsv";
        {
            std::ofstream f(p, std::ios::binary);
            f << "HMAN v1 sigma_q=0.03 sigma_e=0.01 clip=1 rng=" << kRngName << " seed=8\n";
            f << "a.png\tnoisy\tp000\ttrain\tv0\taxial\t0\t0\t0\t64\t0\n";
        }
        CHECK_THROWS_AS(read_manifest(p.string()), ValidationError);
    }
    SUBCASE("volume in two splits") {
        m.entries[0].split = Split::train;
        m.entries[1].split = Split::train;
        auto extra = m.entries[0];
        extra.pair_id = "p999";
        extra.split = Split::val;
        auto extra2 = m.entries[1];
        extra2.pair_id = "p999";
        extra2.split = Split::val;
        m.entries.push_back(extra);
        m.entries.push_back(extra2);
        CHECK_THROWS_AS(validate_manifest(m), ValidationError);
    }
    SUBCASE("pair with mismatched geometry") {
        m.entries[1].x = m.entries[0].x + 1;
        CHECK_THROWS_AS(validate_manifest(m), ValidationError);
    }
    SUBCASE("duplicated pair id") {
        auto dup = m.entries[0];
        m.entries.push_back(dup);
        CHECK_THROWS_AS(validate_manifest(m), ValidationError);
    }
}
