#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace harunet {

// Counter-based generator: philox4x32-10. A (key, counter) pair maps to four
// independent 32-bit words, so any element of any stream can be generated in
// any order. Streams are keyed by (seed, stream); the counter indexes within
// a stream. This is the algorithm name recorded in dataset manifests.
inline constexpr const char* kRngName = "philox4x32-10";

namespace philox {

inline void round_once(std::array<uint32_t, 4>& ctr, std::array<uint32_t, 2>& key) {
    constexpr uint64_t kMul0 = 0xD2511F53u;
    constexpr uint64_t kMul1 = 0xCD9E8D57u;
    const uint64_t p0 = kMul0 * ctr[0];
    const uint64_t p1 = kMul1 * ctr[2];
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

/// Four pseudo-random 32-bit words for (seed, stream, counter).
inline std::array<uint32_t, 4> block(uint64_t seed, uint64_t stream, uint64_t counter) {
    std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(counter), static_cast<uint32_t>(counter >> 32),
        static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
    std::array<uint32_t, 2> key = {static_cast<uint32_t>(seed),
                                   static_cast<uint32_t>(seed >> 32)};
    for (int r = 0; r < 10; ++r) round_once(ctr, key);
    return ctr;
}

}  // namespace philox

/// Uniform in (0,1), exclusive on both ends so log() is safe.
inline double uniform01(uint32_t x) {
    return (static_cast<double>(x) + 0.5) * (1.0 / 4294967296.0);
}

/// Two independent standard normals from one counter block (Box-Muller).
inline void normal_pair(uint64_t seed, uint64_t stream, uint64_t counter,
                        double& z0, double& z1) {
    const auto b = philox::block(seed, stream, counter);
    const double u1 = uniform01(b[0]);
    const double u2 = uniform01(b[1]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
}

/// Sequential convenience view over a philox stream (shuffles, phantom
/// geometry, weight init). Each draw consumes one counter block.
class Prng {
  public:
    Prng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

    uint32_t next_u32() {
        if (have_ == 0) {
            buf_ = philox::block(seed_, stream_, counter_++);
            have_ = 4;
        }
        return buf_[4 - have_--];
    }

    double uniform() { return uniform01(next_u32()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint32_t below(uint32_t n) {
        return static_cast<uint32_t>(uniform() * n) % n;
    }

    double normal() {
        if (!have_normal_) {
            double z1;
            normal_pair(seed_, stream_, normal_counter_++ | (1ull << 62), cached_, z1);
            have_normal_ = true;
            const double tmp = cached_;
            cached_ = z1;
            return tmp;
        }
        have_normal_ = false;
        return cached_;
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<uint32_t>(last - first);
        for (uint32_t i = n; i > 1; --i) {
            const uint32_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

  private:
    uint64_t seed_, stream_;
    uint64_t counter_ = 0;
    uint64_t normal_counter_ = 0;
    std::array<uint32_t, 4> buf_{};
    int have_ = 0;
    bool have_normal_ = false;
    double cached_ = 0.0;
};

}  // namespace harunet
