#include "harunet/network.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace harunet {

void NetworkConfig::validate() const {
    if (base_channels < 1) throw ValidationError("config: base_channels must be >= 1");
    if (stages < 1 || stages > 6) throw ValidationError("config: stages must be in 1..6");
    if (window_size < 2 || window_size % 2)
        throw ValidationError("config: window_size must be even and >= 2");
    if (rhag_depth < 1) throw ValidationError("config: rhag_depth must be >= 1");
    if (mlp_ratio < 1) throw ValidationError("config: mlp_ratio must be >= 1");
    if (se_reduction < 1) throw ValidationError("config: se_reduction must be >= 1");
    if (cab_weight < 0) throw ValidationError("config: cab_weight must be >= 0");
    if (leaky_slope < 0 || leaky_slope >= 1)
        throw ValidationError("config: leaky_slope must be in [0, 1)");
    if (!num_heads.empty() && static_cast<int>(num_heads.size()) != stages + 1)
        throw ValidationError("config: num_heads needs one entry per skip plus the bottleneck");
    for (int h : num_heads)
        if (h < 1) throw ValidationError("config: num_heads entries must be >= 1");
    if (!ablate_attention) {
        for (int site = 1; site <= stages + 1; ++site) {
            const int ch = site_channels(site);
            if (ch % heads_at(site))
                throw ValidationError("config: channels not divisible by heads at an attention site");
            if (ch < se_reduction || ch % se_reduction)
                throw ValidationError("config: se_reduction incompatible with site channels");
        }
    }
}

int NetworkConfig::stage_channels(int stage) const { return base_channels << (stage - 1); }

int NetworkConfig::site_channels(int site) const {
    return site <= stages ? stage_channels(site) : bottleneck_channels();
}

int NetworkConfig::heads_at(int site) const {
    if (!num_heads.empty()) return num_heads[site - 1];
    return std::max(1, site_channels(site) / 32);
}

int NetworkConfig::min_input_side() const {
    return (1 << stages) * (ablate_attention ? 1 : window_size);
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw ValidationError("config: bad boolean for " + key);
}

}  // namespace

NetworkConfig parse_network_config(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw ValidationError("config: expected key = value: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        try {
            if (key == "base_channels") cfg.base_channels = std::stoi(val);
            else if (key == "stages") cfg.stages = std::stoi(val);
            else if (key == "window_size") cfg.window_size = std::stoi(val);
            else if (key == "num_heads") {
                cfg.num_heads.clear();
                if (val != "auto") {
                    std::istringstream hs(val);
                    std::string tok;
                    while (std::getline(hs, tok, ',')) cfg.num_heads.push_back(std::stoi(trim(tok)));
                }
            } else if (key == "rhag_depth") cfg.rhag_depth = std::stoi(val);
            else if (key == "mlp_ratio") cfg.mlp_ratio = std::stoi(val);
            else if (key == "se_reduction") cfg.se_reduction = std::stoi(val);
            else if (key == "cab_weight") cfg.cab_weight = std::stod(val);
            else if (key == "leaky_slope") cfg.leaky_slope = std::stod(val);
            else if (key == "ablate_attention") cfg.ablate_attention = parse_bool(val, key);
            else if (key == "input_residual") cfg.input_residual = parse_bool(val, key);
            else throw ValidationError("config: unknown key: " + key);
        } catch (const std::invalid_argument&) {
            throw ValidationError("config: bad value for " + key);
        } catch (const std::out_of_range&) {
            throw ValidationError("config: bad value for " + key);
        }
    }
    cfg.validate();
    return cfg;
}

NetworkConfig load_network_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_network_config(buf.str());
}

std::string serialize_network_config(const NetworkConfig& cfg) {
    std::ostringstream out;
    out << "base_channels = " << cfg.base_channels << "\n";
    out << "stages = " << cfg.stages << "\n";
    out << "window_size = " << cfg.window_size << "\n";
    out << "num_heads = ";
    if (cfg.num_heads.empty()) {
        out << "auto";
    } else {
        for (size_t i = 0; i < cfg.num_heads.size(); ++i)
            out << (i ? "," : "") << cfg.num_heads[i];
    }
    out << "\n";
    out << "rhag_depth = " << cfg.rhag_depth << "\n";
    out << "mlp_ratio = " << cfg.mlp_ratio << "\n";
    out << "se_reduction = " << cfg.se_reduction << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", cfg.cab_weight);
    out << "cab_weight = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", cfg.leaky_slope);
    out << "leaky_slope = " << buf << "\n";
    out << "ablate_attention = " << (cfg.ablate_attention ? 1 : 0) << "\n";
    out << "input_residual = " << (cfg.input_residual ? 1 : 0) << "\n";
    return out.str();
}

void store_network_config(const NetworkConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config: " + path);
    out << serialize_network_config(cfg);
    if (!out) throw IoError("short write: " + path);
}

// ---- MAC audit ----

namespace {

struct CostSink {
    std::vector<LayerCost>& out;
    void conv(const std::string& name, int k, int ci, int co, int64_t n, int64_t ho, int64_t wo) {
        out.push_back({name, static_cast<uint64_t>(k) * k * ci * co * ho * wo * n});
    }
    void attention(const std::string& prefix, int64_t n, int ch, int h, int w, int win) {
        conv(prefix + ".q", 1, ch, ch, n, h, w);
        conv(prefix + ".k", 1, ch, ch, n, h, w);
        conv(prefix + ".v", 1, ch, ch, n, h, w);
        const int64_t nw = static_cast<int64_t>(h / win) * (w / win);
        const int64_t t = static_cast<int64_t>(win) * win;
        out.push_back({prefix + ".scores", static_cast<uint64_t>(n) * nw * t * t * ch});
        out.push_back({prefix + ".apply", static_cast<uint64_t>(n) * nw * t * t * ch});
        conv(prefix + ".o", 1, ch, ch, n, h, w);
    }
    void hab(const NetworkConfig& cfg, const std::string& prefix, int64_t n, int ch, int h,
             int w) {
        attention(prefix + ".attn", n, ch, h, w, cfg.window_size);
        conv(prefix + ".ca.w1", 1, ch, ch / cfg.se_reduction, n, 1, 1);
        conv(prefix + ".ca.w2", 1, ch / cfg.se_reduction, ch, n, 1, 1);
        conv(prefix + ".mlp.w1", 1, ch, ch * cfg.mlp_ratio, n, h, w);
        conv(prefix + ".mlp.w2", 1, ch * cfg.mlp_ratio, ch, n, h, w);
    }
    void res_block(const std::string& prefix, int in_ch, int out_ch, int64_t n, int h, int w) {
        conv(prefix + ".f1", 3, in_ch, out_ch, n, h, w);
        conv(prefix + ".f2", 3, out_ch, out_ch, n, h, w);
        conv(prefix + ".p", 1, in_ch, out_ch, n, h, w);
    }
};

}  // namespace

std::vector<LayerCost> enumerate_layer_costs(const NetworkConfig& cfg, int n, int h, int w) {
    cfg.validate();
    if (h % cfg.min_input_side() || w % cfg.min_input_side())
        throw ValidationError("input side not divisible by the architecture stride");
    std::vector<LayerCost> costs;
    CostSink s{costs};
    int ch = 1, hh = h, ww = w;
    for (int st = 1; st <= cfg.stages; ++st) {
        const int oc = cfg.stage_channels(st);
        s.res_block("enc" + std::to_string(st), ch, oc, n, hh, ww);
        ch = oc;
        s.conv("down" + std::to_string(st), 4, ch, ch, n, hh / 2, ww / 2);
        hh /= 2;
        ww /= 2;
    }
    const int bc = cfg.bottleneck_channels();
    s.conv("bott.conv", 3, ch, bc, n, hh, ww);
    if (!cfg.ablate_attention)
        for (int i = 1; i <= cfg.rhag_depth; ++i)
            s.hab(cfg, "bott.rhag.hab" + std::to_string(i), n, bc, hh, ww);
    s.conv("bott.proj", 1, ch, bc, n, hh, ww);
    int cur = bc;
    for (int d = 1; d <= cfg.stages; ++d) {
        const int site = cfg.stages - d + 1;
        const int oc = cfg.stage_channels(site);
        // transposed conv: one k x k tap bundle per *input* position
        costs.push_back({"up" + std::to_string(d),
                         static_cast<uint64_t>(16) * cur * oc * hh * ww * n});
        hh *= 2;
        ww *= 2;
        if (!cfg.ablate_attention)
            s.hab(cfg, "skip" + std::to_string(site), n, oc, hh, ww);
        s.res_block("dec" + std::to_string(d), 2 * oc, oc, n, hh, ww);
        cur = oc;
    }
    s.conv("head", 1, cur, 1, n, hh, ww);
    return costs;
}

// ---- parameter construction ----

template <typename T>
void HaruNet<T>::build_res_block(const std::string& prefix, int in_ch, int out_ch, Prng& rng) {
    init_uniform(ps_.create(prefix + ".f1.w", out_ch, in_ch, 3, 3),
                 1.0 / std::sqrt(9.0 * in_ch), rng);
    ps_.create(prefix + ".f1.b", 1, out_ch, 1, 1);
    init_uniform(ps_.create(prefix + ".f2.w", out_ch, out_ch, 3, 3),
                 1.0 / std::sqrt(9.0 * out_ch), rng);
    ps_.create(prefix + ".f2.b", 1, out_ch, 1, 1);
    init_uniform(ps_.create(prefix + ".p.w", out_ch, in_ch, 1, 1), 1.0 / std::sqrt(in_ch), rng);
    ps_.create(prefix + ".p.b", 1, out_ch, 1, 1);
}

template <typename T>
void HaruNet<T>::build_hab(const std::string& prefix, int ch, int heads, Prng& rng) {
    const int win = cfg_.window_size, span = 2 * win - 1;
    const int hidden = ch * cfg_.mlp_ratio, se = ch / cfg_.se_reduction;
    init_const(ps_.create(prefix + ".ln1.g", 1, ch, 1, 1), 1.0);
    ps_.create(prefix + ".ln1.b", 1, ch, 1, 1);
    const double cb = 1.0 / std::sqrt(static_cast<double>(ch));
    for (const char* nm : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) {
        init_uniform(ps_.create(prefix + nm + ".w", ch, ch, 1, 1), cb, rng);
        ps_.create(prefix + nm + ".b", 1, ch, 1, 1);
    }
    ps_.create(prefix + ".attn.bias", 1, heads, span, span);  // zero start: uniform attention
    init_uniform(ps_.create(prefix + ".ca.w1.w", se, ch, 1, 1), cb, rng);
    ps_.create(prefix + ".ca.w1.b", 1, se, 1, 1);
    init_uniform(ps_.create(prefix + ".ca.w2.w", ch, se, 1, 1), 1.0 / std::sqrt(double(se)), rng);
    ps_.create(prefix + ".ca.w2.b", 1, ch, 1, 1);
    init_const(ps_.create(prefix + ".ln2.g", 1, ch, 1, 1), 1.0);
    ps_.create(prefix + ".ln2.b", 1, ch, 1, 1);
    init_uniform(ps_.create(prefix + ".mlp.w1.w", hidden, ch, 1, 1), cb, rng);
    ps_.create(prefix + ".mlp.w1.b", 1, hidden, 1, 1);
    init_uniform(ps_.create(prefix + ".mlp.w2.w", ch, hidden, 1, 1),
                 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    ps_.create(prefix + ".mlp.w2.b", 1, ch, 1, 1);
}

template <typename T>
HaruNet<T>::HaruNet(NetworkConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Prng rng(seed, /*stream=*/0x170);
    int ch = 1;
    for (int st = 1; st <= cfg_.stages; ++st) {
        const int oc = cfg_.stage_channels(st);
        build_res_block("enc" + std::to_string(st), ch, oc, rng);
        ch = oc;
        init_uniform(ps_.create("down" + std::to_string(st) + ".w", ch, ch, 4, 4),
                     1.0 / std::sqrt(16.0 * ch), rng);
        ps_.create("down" + std::to_string(st) + ".b", 1, ch, 1, 1);
    }
    const int bc = cfg_.bottleneck_channels();
    init_uniform(ps_.create("bott.conv.w", bc, ch, 3, 3), 1.0 / std::sqrt(9.0 * ch), rng);
    ps_.create("bott.conv.b", 1, bc, 1, 1);
    if (!cfg_.ablate_attention)
        for (int i = 1; i <= cfg_.rhag_depth; ++i)
            build_hab("bott.rhag.hab" + std::to_string(i), bc, cfg_.heads_at(cfg_.stages + 1),
                      rng);
    init_uniform(ps_.create("bott.proj.w", bc, ch, 1, 1), 1.0 / std::sqrt(double(ch)), rng);
    ps_.create("bott.proj.b", 1, bc, 1, 1);
    int cur = bc;
    for (int d = 1; d <= cfg_.stages; ++d) {
        const int site = cfg_.stages - d + 1;
        const int oc = cfg_.stage_channels(site);
        // fan-in taken over the (out_ch, k, k) axes of the input-major weight
        init_uniform(ps_.create("up" + std::to_string(d) + ".w", cur, oc, 4, 4),
                     1.0 / std::sqrt(16.0 * oc), rng);
        ps_.create("up" + std::to_string(d) + ".b", 1, oc, 1, 1);
        if (!cfg_.ablate_attention)
            build_hab("skip" + std::to_string(site), oc, cfg_.heads_at(site), rng);
        build_res_block("dec" + std::to_string(d), 2 * oc, oc, rng);
        cur = oc;
    }
    init_uniform(ps_.create("head.w", 1, cur, 1, 1), 1.0 / std::sqrt(double(cur)), rng);
    ps_.create("head.b", 1, 1, 1, 1);
}

// ---- forward graph ----

template <typename T>
Tensor<T> HaruNet<T>::conv1x1(const Tensor<T>& x, const std::string& prefix) const {
    return conv2d(x, ps_.get(prefix + ".w"), ps_.get(prefix + ".b"), 1, 0);
}

template <typename T>
Tensor<T> HaruNet<T>::res_block(const Tensor<T>& x, const std::string& prefix) const {
    const T slope = static_cast<T>(cfg_.leaky_slope);
    auto f = leaky_relu(conv2d(x, ps_.get(prefix + ".f1.w"), ps_.get(prefix + ".f1.b"), 1, 1),
                        slope);
    f = leaky_relu(conv2d(f, ps_.get(prefix + ".f2.w"), ps_.get(prefix + ".f2.b"), 1, 1), slope);
    return add(f, conv1x1(x, prefix + ".p"));
}

template <typename T>
Tensor<T> HaruNet<T>::mlp(const Tensor<T>& x, const std::string& prefix) const {
    auto h = leaky_relu(conv1x1(x, prefix + ".w1"), static_cast<T>(cfg_.leaky_slope));
    return conv1x1(h, prefix + ".w2");
}

template <typename T>
Tensor<T> HaruNet<T>::channel_attention(const Tensor<T>& u, const std::string& prefix) const {
    auto g = global_avg_pool(u);
    g = leaky_relu(conv1x1(g, prefix + ".w1"), static_cast<T>(cfg_.leaky_slope));
    g = sigmoid(conv1x1(g, prefix + ".w2"));
    return channel_scale(u, g);
}

namespace {

/// Attention mask for shifted windows: tokens may attend only within the
/// contiguous content region they came from before the cyclic shift.
template <typename T>
std::shared_ptr<const Array4<T>> shift_mask(int h, int w, int win, int shift) {
    const int nwy = h / win, nwx = w / win, t = win * win;
    auto region = [&](int i, int extent) {
        if (i < extent - win) return 0;
        return i < extent - shift ? 1 : 2;
    };
    auto mask = std::make_shared<Array4<T>>(nwy * nwx, 1, t, t);
    for (int wy = 0; wy < nwy; ++wy)
        for (int wx = 0; wx < nwx; ++wx) {
            const int wi = wy * nwx + wx;
            for (int a = 0; a < t; ++a) {
                const int la = region(wy * win + a / win, h) * 3 + region(wx * win + a % win, w);
                for (int b = 0; b < t; ++b) {
                    const int lb =
                        region(wy * win + b / win, h) * 3 + region(wx * win + b % win, w);
                    mask->at(wi, 0, a, b) = la == lb ? T(0) : T(-100);
                }
            }
        }
    return mask;
}

}  // namespace

template <typename T>
Tensor<T> HaruNet<T>::window_self_attention(const Tensor<T>& u, const std::string& prefix,
                                            int heads, int shift) const {
    const int n = u->value.n, c = u->value.c, h = u->value.h, w = u->value.w;
    const int win = cfg_.window_size;
    auto x = shift ? roll2d(u, shift, shift) : u;
    auto q = window_partition(conv1x1(x, prefix + ".q"), win, heads);
    auto k = window_partition(conv1x1(x, prefix + ".k"), win, heads);
    auto v = window_partition(conv1x1(x, prefix + ".v"), win, heads);
    auto s = scale(matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(double(c / heads))));
    s = add_rel_pos_bias(s, ps_.get(prefix + ".bias"), win);
    if (shift) s = add_window_mask(s, shift_mask<T>(h, w, win, shift));
    auto o = matmul(softmax_lastdim(s), v, false);
    o = window_merge(o, n, c, h, w, win);
    if (shift) o = roll2d(o, -shift, -shift);
    return conv1x1(o, prefix + ".o");
}

template <typename T>
Tensor<T> HaruNet<T>::hab(const Tensor<T>& x, const std::string& prefix, int heads,
                          int shift) const {
    auto u = layer_norm(x, ps_.get(prefix + ".ln1.g"), ps_.get(prefix + ".ln1.b"));
    auto y = add(x, window_self_attention(u, prefix + ".attn", heads, shift));
    y = add_scaled(y, channel_attention(u, prefix + ".ca"), static_cast<T>(cfg_.cab_weight));
    auto z = layer_norm(y, ps_.get(prefix + ".ln2.g"), ps_.get(prefix + ".ln2.b"));
    return add(y, mlp(z, prefix + ".mlp"));
}

template <typename T>
Tensor<T> HaruNet<T>::forward(const Tensor<T>& x) const {
    const auto& v = x->value;
    if (v.c != 1) throw ValidationError("forward: expects a single input channel");
    const int div = cfg_.min_input_side();
    if (v.h % div || v.w % div)
        throw ValidationError("forward: input sides must be divisible by " + std::to_string(div));
    std::vector<Tensor<T>> skips;
    Tensor<T> cur = x;
    for (int st = 1; st <= cfg_.stages; ++st) {
        cur = res_block(cur, "enc" + std::to_string(st));
        skips.push_back(cur);
        cur = conv2d(cur, ps_.get("down" + std::to_string(st) + ".w"),
                     ps_.get("down" + std::to_string(st) + ".b"), 2, 1);
    }
    auto body = conv2d(cur, ps_.get("bott.conv.w"), ps_.get("bott.conv.b"), 1, 1);
    if (!cfg_.ablate_attention) {
        auto y = body;
        for (int i = 1; i <= cfg_.rhag_depth; ++i)
            y = hab(y, "bott.rhag.hab" + std::to_string(i), cfg_.heads_at(cfg_.stages + 1),
                    i % 2 ? 0 : cfg_.window_size / 2);
        body = add(body, y);
    }
    cur = add(body, conv1x1(cur, "bott.proj"));
    for (int d = 1; d <= cfg_.stages; ++d) {
        const int site = cfg_.stages - d + 1;
        cur = conv_transpose2d(cur, ps_.get("up" + std::to_string(d) + ".w"),
                               ps_.get("up" + std::to_string(d) + ".b"), 2, 1);
        auto skip = skips[site - 1];
        if (!cfg_.ablate_attention)
            skip = hab(skip, "skip" + std::to_string(site), cfg_.heads_at(site), 0);
        cur = res_block(concat_channels(cur, skip), "dec" + std::to_string(d));
    }
    auto y = conv2d(cur, ps_.get("head.w"), ps_.get("head.b"), 1, 0);
    return cfg_.input_residual ? add(y, x) : y;
}

template <typename T>
Array4<T> HaruNet<T>::infer(const Array4<T>& x) const {
    return forward(constant(x))->value;
}

template class HaruNet<float>;
template class HaruNet<double>;

}  // namespace harunet
