#pragma once

#include <string>
#include <vector>

#include "harunet/noise.hpp"
#include "harunet/volume.hpp"

namespace harunet {

enum class Split { train, val, test };
enum class PatchRole { noisy, clean };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
    std::string path;     // patch file, relative to the manifest location
    PatchRole role = PatchRole::clean;
    std::string pair_id;
    Split split = Split::train;
    std::string volume_id;
    Plane plane = Plane::axial;
    int slice_index = 0;
    int x = 0, y = 0, size = 0;
    bool overlap = false;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    NoiseParams noise;
    std::string rng_name;
    uint64_t seed = 0;  // corpus creation seed (split shuffle)
    std::vector<ManifestEntry> entries;

    bool operator==(const DatasetManifest&) const = default;
};

/// Checks the pairing and split invariants: every noisy entry has exactly one
/// clean partner with the same pair id and identical geometry, and no volume
/// id appears in two splits. Throws ValidationError otherwise.
void validate_manifest(const DatasetManifest& m);

// One header line naming the noise parameters, generator and seed, then one
// tab-separated record per entry in field order.
void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace harunet
