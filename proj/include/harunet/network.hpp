#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harunet/params.hpp"

namespace harunet {

/// Architecture knobs. base_channels fixes the encoder widths c, 2c, 4c, 8c
/// and a bottleneck of 16c; attention sites are the four skip connections
/// plus the bottleneck group. ablate_attention strips every attention block
/// while keeping the convolutional skeleton.
struct NetworkConfig {
    int base_channels = 64;
    int stages = 4;
    int window_size = 8;
    std::vector<int> num_heads;  // per site: 4 skips then bottleneck; empty = max(1, ch/32)
    int rhag_depth = 6;
    int mlp_ratio = 2;
    int se_reduction = 16;
    double cab_weight = 0.01;
    double leaky_slope = 0.01;
    bool ablate_attention = false;
    bool input_residual = false;  // add the input to the head output

    void validate() const;
    int stage_channels(int stage) const;  // stage 1..stages
    int bottleneck_channels() const { return 2 * stage_channels(stages); }
    /// site 1..stages = skip refiners, site stages+1 = bottleneck group
    int heads_at(int site) const;
    int site_channels(int site) const;
    int min_input_side() const;
};

NetworkConfig parse_network_config(const std::string& text);
NetworkConfig load_network_config(const std::string& path);
std::string serialize_network_config(const NetworkConfig& cfg);
void store_network_config(const NetworkConfig& cfg, const std::string& path);

struct LayerCost {
    std::string name;
    uint64_t macs = 0;
};

/// Walks the architecture for an n×1×h×w input and prices every
/// multiply-accumulate bearing layer. Elementwise work, normalization,
/// softmax, pooling and gating are charged zero.
std::vector<LayerCost> enumerate_layer_costs(const NetworkConfig& cfg, int n, int h, int w);

template <typename T>
class HaruNet {
  public:
    HaruNet(NetworkConfig cfg, uint64_t seed);

    /// Builds a fresh differentiable graph over the shared parameters.
    Tensor<T> forward(const Tensor<T>& x) const;

    /// Gradient-free forward for (n,1,h,w) pixels.
    Array4<T> infer(const Array4<T>& x) const;

    ParameterStore<T>& params() { return ps_; }
    const ParameterStore<T>& params() const { return ps_; }
    const NetworkConfig& config() const { return cfg_; }

  private:
    Tensor<T> res_block(const Tensor<T>& x, const std::string& prefix) const;
    Tensor<T> conv1x1(const Tensor<T>& x, const std::string& prefix) const;
    Tensor<T> mlp(const Tensor<T>& x, const std::string& prefix) const;
    Tensor<T> channel_attention(const Tensor<T>& u, const std::string& prefix) const;
    Tensor<T> window_self_attention(const Tensor<T>& u, const std::string& prefix, int heads,
                                    int shift) const;
    Tensor<T> hab(const Tensor<T>& x, const std::string& prefix, int heads, int shift) const;

    void build_res_block(const std::string& prefix, int in_ch, int out_ch, Prng& rng);
    void build_hab(const std::string& prefix, int ch, int heads, Prng& rng);

    NetworkConfig cfg_;
    ParameterStore<T> ps_;
};

extern template class HaruNet<float>;
extern template class HaruNet<double>;

}  // namespace harunet
