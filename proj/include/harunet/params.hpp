#pragma once

#include <cstdio>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "harunet/autodiff.hpp"
#include "harunet/rng.hpp"

namespace harunet {

/// Insertion-ordered named parameter set. Creation order defines both the
/// initialization draw order and the checkpoint layout, so identical build
/// sequences produce identical files.
template <typename T>
class ParameterStore {
  public:
    Tensor<T> create(const std::string& name, int n, int c, int h, int w) {
        if (index_.count(name)) throw ValidationError("parameter exists: " + name);
        auto t = std::make_shared<Node<T>>();
        t->value = Array4<T>(n, c, h, w);
        t->requires_grad = true;
        t->name = name;
        index_[name] = items_.size();
        items_.push_back(t);
        return t;
    }

    Tensor<T> get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValidationError("no such parameter: " + name);
        return items_[it->second];
    }

    const std::vector<Tensor<T>>& items() const { return items_; }
    size_t count() const { return items_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& t : items_) n += t->value.size();
        return n;
    }

    void zero_grad() {
        for (auto& t : items_) {
            t->ensure_grad();
            t->grad.fill(T(0));
        }
    }

    // Checkpoint container: "HCKPT v1 <count>\n" then per parameter one ASCII
    // line "<name> <n> <c> <h> <w>\n" followed by the raw values as 32-bit
    // little-endian floats. Float stores round-trip bit-exactly.
    void save(const std::string& path) const {
        FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw IoError("cannot write checkpoint: " + path);
        std::fprintf(f, "HCKPT v1 %zu\n", items_.size());
        std::vector<unsigned char> buf;
        for (const auto& t : items_) {
            const auto& a = t->value;
            std::fprintf(f, "%s %d %d %d %d\n", t->name.c_str(), a.n, a.c, a.h, a.w);
            buf.resize(a.size() * 4);
            for (size_t i = 0; i < a.size(); ++i) {
                const float fv = static_cast<float>(a.v[i]);
                uint32_t u;
                std::memcpy(&u, &fv, 4);
                buf[i * 4] = u & 0xFF;
                buf[i * 4 + 1] = (u >> 8) & 0xFF;
                buf[i * 4 + 2] = (u >> 16) & 0xFF;
                buf[i * 4 + 3] = (u >> 24) & 0xFF;
            }
            if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size()) {
                std::fclose(f);
                throw IoError("short write: " + path);
            }
        }
        std::fclose(f);
    }

    void load(const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw IoError("cannot read checkpoint: " + path);
        size_t count = 0;
        if (std::fscanf(f, "HCKPT v1 %zu", &count) != 1 || std::fgetc(f) != '\n') {
            std::fclose(f);
            throw IoError("not a checkpoint file: " + path);
        }
        if (count != items_.size()) {
            std::fclose(f);
            throw ValidationError("checkpoint parameter count mismatch");
        }
        std::vector<unsigned char> buf;
        for (size_t e = 0; e < count; ++e) {
            char name[512];
            int n, c, h, w;
            if (std::fscanf(f, "%511s %d %d %d %d", name, &n, &c, &h, &w) != 5 ||
                std::fgetc(f) != '\n') {
                std::fclose(f);
                throw IoError("malformed checkpoint entry");
            }
            auto it = index_.find(name);
            if (it == index_.end()) {
                std::fclose(f);
                throw ValidationError(std::string("unknown checkpoint parameter: ") + name);
            }
            auto& a = items_[it->second]->value;
            if (a.n != n || a.c != c || a.h != h || a.w != w) {
                std::fclose(f);
                throw ValidationError(std::string("checkpoint shape mismatch: ") + name);
            }
            buf.resize(a.size() * 4);
            if (std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
                std::fclose(f);
                throw IoError("truncated checkpoint data");
            }
            for (size_t i = 0; i < a.size(); ++i) {
                const uint32_t u = static_cast<uint32_t>(buf[i * 4]) |
                                   (static_cast<uint32_t>(buf[i * 4 + 1]) << 8) |
                                   (static_cast<uint32_t>(buf[i * 4 + 2]) << 16) |
                                   (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
                float fv;
                std::memcpy(&fv, &u, 4);
                a.v[i] = static_cast<T>(fv);
            }
        }
        std::fclose(f);
    }

  private:
    std::vector<Tensor<T>> items_;
    std::unordered_map<std::string, size_t> index_;
};

/// Uniform fill over (-bound, bound); the draw count equals the value count
/// regardless of precision, so float and double builds stay aligned.
template <typename T>
void init_uniform(const Tensor<T>& t, double bound, Prng& rng) {
    for (auto& v : t->value.v) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_const(const Tensor<T>& t, double value) {
    t->value.fill(static_cast<T>(value));
}

}  // namespace harunet
