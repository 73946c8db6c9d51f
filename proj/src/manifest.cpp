#include "harunet/manifest.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "harunet/rng.hpp"

namespace harunet {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split: " + s);
}

void validate_manifest(const DatasetManifest& m) {
    struct PairState {
        int noisy = 0, clean = 0;
        ManifestEntry first;
        bool have_first = false;
    };
    std::map<std::string, PairState> pairs;
    std::map<std::string, Split> volume_split;

    for (const auto& e : m.entries) {
        auto& ps = pairs[e.pair_id];
        if (e.role == PatchRole::noisy) ++ps.noisy; else ++ps.clean;
        if (ps.have_first) {
            const auto& f = ps.first;
            const bool same_geometry = f.volume_id == e.volume_id && f.plane == e.plane &&
                                       f.slice_index == e.slice_index && f.x == e.x &&
                                       f.y == e.y && f.size == e.size && f.split == e.split;
            if (!same_geometry)
                throw ValidationError("manifest: pair '" + e.pair_id +
                                      "' has mismatched geometry between roles");
        } else {
            ps.first = e;
            ps.have_first = true;
        }

        auto it = volume_split.find(e.volume_id);
        if (it == volume_split.end())
            volume_split.emplace(e.volume_id, e.split);
        else if (it->second != e.split)
            throw ValidationError("manifest: volume '" + e.volume_id +
                                  "' appears in more than one split");
    }

    for (const auto& [id, ps] : pairs) {
        if (ps.noisy != 1 || ps.clean != 1)
            throw ValidationError("manifest: pair '" + id + "' must have exactly one noisy and one clean entry (got " +
                                  std::to_string(ps.noisy) + "/" + std::to_string(ps.clean) + ")");
    }
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    validate_manifest(m);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write manifest: " + path);

    char head[256];
    std::snprintf(head, sizeof(head),
                  "HMAN v1 sigma_q=%.17g sigma_e=%.17g clip=%d rng=%s seed=%" PRIu64 "\n",
                  m.noise.sigma_q, m.noise.sigma_e, m.noise.clip ? 1 : 0,
                  m.rng_name.empty() ? kRngName : m.rng_name.c_str(), m.seed);
    f << head;

    for (const auto& e : m.entries) {
        f << e.path << '\t' << (e.role == PatchRole::noisy ? "noisy" : "clean") << '\t'
          << e.pair_id << '\t' << split_name(e.split) << '\t' << e.volume_id << '\t'
          << plane_name(e.plane) << '\t' << e.slice_index << '\t' << e.x << '\t' << e.y
          << '\t' << e.size << '\t' << (e.overlap ? 1 : 0) << '\n';
    }
    if (!f) throw IoError("short write: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open manifest: " + path);

    std::string header;
    if (!std::getline(f, header)) throw IoError("manifest: missing header in " + path);

    DatasetManifest m;
    {
        std::istringstream hs(header);
        std::string magic, version, kv;
        hs >> magic >> version;
        if (magic != "HMAN" || version != "v1")
            throw IoError("manifest: malformed header in " + path);
        double sq = -1, se = -1;
        int clip = 1;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw IoError("manifest: bad header field '" + kv + "'");
            const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "sigma_q") sq = std::stod(val);
            else if (key == "sigma_e") se = std::stod(val);
            else if (key == "clip") clip = std::stoi(val);
            else if (key == "rng") m.rng_name = val;
            else if (key == "seed") m.seed = std::stoull(val);
            else throw IoError("manifest: unknown header field '" + key + "'");
        }
        if (sq < 0 || se < 0) throw IoError("manifest: header missing noise parameters");
        m.noise = NoiseParams(sq, se, m.seed, clip != 0);
    }

    std::string line;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        std::istringstream ls(line);
        while (std::getline(ls, cur, '\t')) fields.push_back(cur);
        if (fields.size() != 11)
            throw IoError("manifest: expected 11 fields at line " + std::to_string(lineno));

        ManifestEntry e;
        e.path = fields[0];
        if (fields[1] == "noisy") e.role = PatchRole::noisy;
        else if (fields[1] == "clean") e.role = PatchRole::clean;
        else throw IoError("manifest: bad role at line " + std::to_string(lineno));
        e.pair_id = fields[2];
        e.split = parse_split(fields[3]);
        e.volume_id = fields[4];
        e.plane = parse_plane(fields[5]);
        e.slice_index = std::stoi(fields[6]);
        e.x = std::stoi(fields[7]);
        e.y = std::stoi(fields[8]);
        e.size = std::stoi(fields[9]);
        e.overlap = std::stoi(fields[10]) != 0;
        m.entries.push_back(std::move(e));
    }

    validate_manifest(m);
    return m;
}

}  // namespace harunet
