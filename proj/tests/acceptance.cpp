// Release gate: one self-contained check per shipping requirement, each
// printing a single [PASS]/[FAIL] line with its runtime. Exit code is the
// number of hard failures. Pass criterion numbers as arguments to run a
// subset, e.g. "acceptance 1 4 9".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <fcntl.h>
#include <unistd.h>

#include "harunet/autodiff.hpp"
#include "harunet/cli.hpp"
#include "harunet/metrics.hpp"
#include "harunet/network.hpp"
#include "harunet/noise.hpp"
#include "harunet/patching.hpp"
#include "harunet/rng.hpp"
#include "harunet/segmentation.hpp"
#include "harunet/training.hpp"
#include "harunet/volume.hpp"

using namespace harunet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    bool soft = false;  // documented near-miss, does not fail the gate
    std::string detail;
};

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Slice constant_slice(int h, int w, float v) {
    Slice s;
    s.height = h;
    s.width = w;
    s.pixels.assign(static_cast<size_t>(h) * w, v);
    return s;
}

// ---------------------------------------------------------------- criterion 1

Outcome crit_noise_stats() {
    const double t0 = now_s();
    const Slice clean = constant_slice(1024, 1024, 0.5f);
    const Slice noisy = add_noise(clean, NoiseParams(0.03, 0.04, 0, false), 0);
    const auto [mean, var] = measure_residual_stats(noisy, clean);

    std::vector<double> r(noisy.pixels.size());
    for (size_t i = 0; i < r.size(); ++i)
        r[i] = static_cast<double>(noisy.pixels[i]) - clean.pixels[i];
    double num = 0, den = 0;
    for (int y = 0; y < 1024; ++y)
        for (int x = 0; x < 1024; ++x) {
            const double a = r[y * 1024 + x] - mean;
            den += a * a;
            if (x + 1 < 1024) num += a * (r[y * 1024 + x + 1] - mean);
        }
    const double lag1 = num / den;
    const double wall = now_s() - t0;

    const double target = 0.03 * 0.03 + 0.04 * 0.04;
    const bool pass = std::fabs(mean) < 1e-4 && std::fabs(var - target) <= 0.03 * target &&
                      std::fabs(lag1) < 0.01 && wall < 5.0;
    return {pass, false,
            fmt("mean %.2e (<1e-4), var %.6f vs %.6f (|dev| %.2f%% <= 3%%), lag-1 %.4f (<0.01)",
                mean, var, target, 100.0 * std::fabs(var - target) / target, lag1)};
}

// ---------------------------------------------------------------- criterion 2

struct FdStats {
    double max_rel = 0;
    int sampled = 0;
};

/// Central finite differences (64-bit, step 1e-5) against reverse-mode
/// gradients; rel err = |fd - an| / max(1, |an|).
void fd_check(const std::vector<Tensor<double>>& inputs,
              const std::function<Tensor<double>()>& build, Prng& rng, int per_input,
              FdStats& st) {
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->grad = Array4<double>();
    }
    auto loss = build();
    backward(loss);
    const double h = 1e-5;
    for (const auto& in : inputs) {
        const size_t n = in->value.size();
        for (int s = 0; s < per_input; ++s) {
            const size_t idx = n <= static_cast<size_t>(per_input)
                                   ? static_cast<size_t>(s)
                                   : static_cast<size_t>(rng.below(static_cast<uint32_t>(n)));
            if (idx >= n) break;
            const double keep = in->value.v[idx];
            in->value.v[idx] = keep + h;
            const double lp = build()->value.v[0];
            in->value.v[idx] = keep - h;
            const double lm = build()->value.v[0];
            in->value.v[idx] = keep;
            const double fd = (lp - lm) / (2 * h);
            const double an = in->grad.size() ? in->grad.v[idx] : 0.0;
            st.max_rel = std::max(st.max_rel, std::fabs(fd - an) / std::max(1.0, std::fabs(an)));
            ++st.sampled;
            if (static_cast<size_t>(s) + 1 >= n) break;
        }
    }
}

Array4<double> rand4(Prng& rng, int n, int c, int h, int w, double lo = -1, double hi = 1) {
    Array4<double> a(n, c, h, w);
    for (auto& v : a.v) v = rng.uniform(lo, hi);
    return a;
}

void fd_layer_suite(Prng& rng, FdStats& st) {
    auto T = [](Array4<double> a) { return constant(std::move(a)); };
    const Array4<double> tgt = rand4(rng, 2, 3, 4, 4);

    {
        auto x = T(rand4(rng, 2, 3, 7, 7)), w = T(rand4(rng, 4, 3, 3, 3)),
             b = T(rand4(rng, 1, 4, 1, 1));
        Array4<double> t = rand4(rng, 2, 4, 4, 4);
        fd_check({x, w, b}, [&] { return mse_loss(conv2d(x, w, b, 2, 1), T(t)); }, rng, 6, st);
    }
    {
        auto x = T(rand4(rng, 1, 3, 5, 5)), w = T(rand4(rng, 3, 2, 4, 4)),
             b = T(rand4(rng, 1, 2, 1, 1));
        Array4<double> t = rand4(rng, 1, 2, 10, 10);
        fd_check({x, w, b}, [&] { return mse_loss(conv_transpose2d(x, w, b, 2, 1), T(t)); }, rng,
                 6, st);
    }
    {
        Array4<double> raw = rand4(rng, 2, 3, 4, 4);
        for (auto& v : raw.v) v = (v < 0 ? v - 0.1 : v + 0.1);  // stay off the kink
        auto x = T(raw);
        Array4<double> t = rand4(rng, 2, 3, 4, 4);
        fd_check({x}, [&] { return mse_loss(leaky_relu(x, 0.01), T(t)); }, rng, 8, st);
        fd_check({x}, [&] { return mse_loss(sigmoid(x), T(t)); }, rng, 8, st);
        fd_check({x}, [&] { return mse_loss(scale(x, 0.37), T(t)); }, rng, 6, st);
    }
    {
        auto x = T(rand4(rng, 2, 3, 4, 4)), y = T(rand4(rng, 2, 3, 4, 4));
        Array4<double> tcat = rand4(rng, 2, 6, 4, 4);
        fd_check({x, y}, [&] { return mse_loss(add(x, y), T(tgt)); }, rng, 5, st);
        fd_check({x, y}, [&] { return mse_loss(add_scaled(x, y, 0.25), T(tgt)); }, rng, 5, st);
        fd_check({x, y}, [&] { return mse_loss(concat_channels(x, y), T(tcat)); }, rng, 5, st);
        fd_check({x, y}, [&] { return mse_loss(x, y); }, rng, 5, st);
    }
    {
        auto x = T(rand4(rng, 2, 6, 3, 3)), g = T(rand4(rng, 1, 6, 1, 1)),
             b = T(rand4(rng, 1, 6, 1, 1));
        Array4<double> t = rand4(rng, 2, 6, 3, 3);
        fd_check({x, g, b}, [&] { return mse_loss(layer_norm(x, g, b, 1e-5), T(t)); }, rng, 6,
                 st);
    }
    {
        auto x = T(rand4(rng, 1, 2, 5, 5));
        Array4<double> t = rand4(rng, 1, 2, 5, 5);
        fd_check({x}, [&] { return mse_loss(softmax_lastdim(x), T(t)); }, rng, 8, st);
        fd_check({x}, [&] { return mse_loss(roll2d(x, 2, 3), T(t)); }, rng, 6, st);
    }
    {
        auto x = T(rand4(rng, 2, 5, 4, 4)), g = T(rand4(rng, 2, 5, 1, 1));
        Array4<double> tpool = rand4(rng, 2, 5, 1, 1), tgate = rand4(rng, 2, 5, 4, 4);
        fd_check({x}, [&] { return mse_loss(global_avg_pool(x), T(tpool)); }, rng, 6, st);
        fd_check({x, g}, [&] { return mse_loss(channel_scale(x, g), T(tgate)); }, rng, 6, st);
    }
    {
        auto a = T(rand4(rng, 1, 2, 4, 6)), b = T(rand4(rng, 1, 2, 6, 3)),
             c = T(rand4(rng, 1, 2, 5, 3));
        Array4<double> tmm = rand4(rng, 1, 2, 4, 3), tmt = rand4(rng, 1, 2, 4, 5);
        fd_check({a, b}, [&] { return mse_loss(matmul(a, b, false), T(tmm)); }, rng, 6, st);
        auto a2 = T(rand4(rng, 1, 2, 4, 3));
        fd_check({a2, c}, [&] { return mse_loss(matmul(a2, c, true), T(tmt)); }, rng, 6, st);
    }
    {
        // Windowed attention assembled end to end, including the bias table
        // and the additive mask plane.
        const int win = 4, heads = 2, ch = 8;
        auto x = T(rand4(rng, 1, ch, 8, 8));
        auto wq = T(rand4(rng, ch, ch, 1, 1)), wk = T(rand4(rng, ch, ch, 1, 1)),
             wv = T(rand4(rng, ch, ch, 1, 1));
        auto table = T(rand4(rng, 1, heads, 2 * win - 1, 2 * win - 1));
        const std::shared_ptr<const Array4<double>> mask =
            std::make_shared<Array4<double>>(rand4(rng, 4, 1, win * win, win * win));
        Array4<double> t = rand4(rng, 1, ch, 8, 8);
        auto build = [&] {
            auto q = window_partition(conv2d(x, wq, Tensor<double>{}, 1, 0), win, heads);
            auto k = window_partition(conv2d(x, wk, Tensor<double>{}, 1, 0), win, heads);
            auto v = window_partition(conv2d(x, wv, Tensor<double>{}, 1, 0), win, heads);
            auto s = scale(matmul(q, k, true), 1.0 / std::sqrt(double(ch / heads)));
            s = add_rel_pos_bias(s, table, win);
            s = add_window_mask(s, mask);
            auto o = window_merge(matmul(softmax_lastdim(s), v, false), 1, ch, 8, 8, win);
            return mse_loss(o, T(t));
        };
        fd_check({x, wq, wk, wv, table}, build, rng, 5, st);
    }
    {
        auto x = T(rand4(rng, 2, 2, 3, 3));
        Array4<double> w = rand4(rng, 2, 2, 3, 3, 0.0, 1.0);
        fd_check({x}, [&] { return weighted_sum(x, w); }, rng, 8, st);
    }
}

Outcome crit_gradients() {
    const double t0 = now_s();
    FdStats st;
    Prng oprng(100, 0);
    fd_layer_suite(oprng, st);

    NetworkConfig cfg;
    cfg.base_channels = 8;
    cfg.window_size = 4;
    cfg.se_reduction = 4;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        HaruNet<double> net(cfg, seed);
        Prng rng(seed, 17);
        const Array4<double> x = rand4(rng, 1, 1, 64, 64, 0.0, 1.0);
        const Array4<double> t = rand4(rng, 1, 1, 64, 64, 0.0, 1.0);

        net.params().zero_grad();
        auto loss = mse_loss(net.forward(constant(x)), constant(t));
        backward(loss);

        auto eval = [&] {
            const Array4<double> y = net.infer(x);
            double acc = 0;
            for (size_t i = 0; i < y.size(); ++i) {
                const double d = y.v[i] - t.v[i];
                acc += d * d;
            }
            return acc / double(y.size());
        };

        const auto& items = net.params().items();
        const double h = 1e-5;
        for (int s = 0; s < 34; ++s) {
            auto& p = items[rng.below(static_cast<uint32_t>(items.size()))];
            const size_t idx = rng.below(static_cast<uint32_t>(p->value.size()));
            const double keep = p->value.v[idx];
            p->value.v[idx] = keep + h;
            const double lp = eval();
            p->value.v[idx] = keep - h;
            const double lm = eval();
            p->value.v[idx] = keep;
            const double fd = (lp - lm) / (2 * h);
            const double an = p->grad.size() ? p->grad.v[idx] : 0.0;
            st.max_rel = std::max(st.max_rel, std::fabs(fd - an) / std::max(1.0, std::fabs(an)));
            ++st.sampled;
        }
    }
    const double wall = now_s() - t0;
    const bool pass = st.max_rel < 1e-4 && st.sampled >= 200 && wall < 120.0;
    return {pass, false,
            fmt("max rel err %.2e (<1e-4) over %d sampled parameters (>=200), 3 net seeds",
                st.max_rel, st.sampled)};
}

// ---------------------------------------------------------------- criterion 3

double gmsd_loops(const Slice& a, const Slice& b, double c) {
    const int h2 = a.height / 2, w2 = a.width / 2;
    const double third = 1.0 / 3.0;
    const double kx[3][3] = {{third, 0, -third}, {third, 0, -third}, {third, 0, -third}};
    const double ky[3][3] = {{third, third, third}, {0, 0, 0}, {-third, -third, -third}};
    auto grad = [&](const Slice& s) {
        std::vector<double> half(static_cast<size_t>(h2) * w2), g(half.size());
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                half[y * w2 + x] = (double(s.at(2 * y, 2 * x)) + s.at(2 * y, 2 * x + 1) +
                                    s.at(2 * y + 1, 2 * x) + s.at(2 * y + 1, 2 * x + 1)) /
                                   4.0;
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x) {
                double gx = 0, gy = 0;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        const int yy = y + i - 1, xx = x + j - 1;
                        if (yy < 0 || yy >= h2 || xx < 0 || xx >= w2) continue;
                        gx += kx[i][j] * half[yy * w2 + xx];
                        gy += ky[i][j] * half[yy * w2 + xx];
                    }
                g[y * w2 + x] = std::sqrt(gx * gx + gy * gy);
            }
        return g;
    };
    const auto ga = grad(a), gb = grad(b);
    double mean = 0;
    std::vector<double> sim(ga.size());
    for (size_t i = 0; i < sim.size(); ++i)
        mean += sim[i] = (2 * ga[i] * gb[i] + c) / (ga[i] * ga[i] + gb[i] * gb[i] + c);
    mean /= double(sim.size());
    double var = 0;
    for (double v : sim) var += (v - mean) * (v - mean);
    return std::sqrt(var / double(sim.size()));
}

Outcome crit_metric_oracles() {
    const double t0 = now_s();
    std::string why;

    Prng rng(40, 0);
    Slice a = constant_slice(32, 32, 0);
    for (auto& v : a.pixels) v = static_cast<float>(rng.uniform());
    const bool inf_ok = psnr(a, a, 1.0).infinite;

    const Slice zero = constant_slice(64, 64, 0.0f), tenth = constant_slice(64, 64, 0.1f);
    const double twenty = psnr(zero, tenth, 1.0).db;
    const bool psnr_ok = std::fabs(twenty - 20.0) < 1e-6;

    const double s = ssim(constant_slice(16, 16, 0.5f), constant_slice(16, 16, 0.6f), 1.0);
    const bool ssim_ok = std::fabs(s - 0.9836) < 1e-3;

    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Slice p = constant_slice(16, 16, 0), q = constant_slice(16, 16, 0);
        for (auto& v : p.pixels) v = static_cast<float>(rng.uniform());
        for (auto& v : q.pixels) v = static_cast<float>(rng.uniform());
        worst = std::max(worst, std::fabs(gmsd(p, q) - gmsd_loops(p, q, 0.0026)));
    }
    const bool gmsd_ok = worst <= 1e-10;

    const double wall = now_s() - t0;
    const bool pass = inf_ok && psnr_ok && ssim_ok && gmsd_ok && wall < 10.0;
    return {pass, false,
            fmt("identity flag %d, 0.1-offset %.8f dB, const-pair similarity %.5f, "
                "gradient-deviation oracle gap %.1e (<=1e-10)",
                int(inf_ok), twenty, s, worst)};
}

// ---------------------------------------------------------------- criterion 4

Outcome crit_mac_counter() {
    const double t0 = now_s();
    auto rnd = [](Prng& r, int n, int c, int h, int w) {
        Array4<float> a(n, c, h, w);
        for (auto& v : a.v) v = static_cast<float>(r.uniform());
        return a;
    };
    Prng rng(60, 0);
    std::string why;
    bool pass = true;

    {
        auto x = constant(rnd(rng, 1, 1, 256, 256));
        auto w = constant(rnd(rng, 64, 1, 3, 3));
        MacScope scope;
        conv2d(x, w, Tensor<float>{}, 1, 1);
        uint64_t loops = 0;
        for (int oc = 0; oc < 64; ++oc)
            for (int oy = 0; oy < 256; ++oy)
                for (int ox = 0; ox < 256; ++ox)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) ++loops;
        pass &= scope.rec.total == loops && loops == 37748736ull;
        why += fmt("conv3x3 %llu==%llu", (unsigned long long)scope.rec.total,
                   (unsigned long long)loops);
    }
    {
        auto x = constant(rnd(rng, 1, 1, 64, 48));
        auto w = constant(rnd(rng, 1, 1, 1, 1));
        MacScope scope;
        conv2d(x, w, Tensor<float>{}, 1, 0);
        uint64_t loops = 0;
        for (int oy = 0; oy < 64; ++oy)
            for (int ox = 0; ox < 48; ++ox) ++loops;
        pass &= scope.rec.total == loops;
        why += fmt(", conv1x1 %llu==%llu", (unsigned long long)scope.rec.total,
                   (unsigned long long)loops);
    }
    {
        auto x = constant(rnd(rng, 1, 3, 8, 8));
        auto w = constant(rnd(rng, 3, 2, 4, 4));
        MacScope scope;
        conv_transpose2d(x, w, Tensor<float>{}, 2, 1);
        uint64_t loops = 0;
        for (int ic = 0; ic < 3; ++ic)
            for (int iy = 0; iy < 8; ++iy)
                for (int ix = 0; ix < 8; ++ix)
                    for (int oc = 0; oc < 2; ++oc)
                        for (int ky = 0; ky < 4; ++ky)
                            for (int kx = 0; kx < 4; ++kx) ++loops;
        pass &= scope.rec.total == loops;
        why += fmt(", convT %llu==%llu", (unsigned long long)scope.rec.total,
                   (unsigned long long)loops);
    }
    {
        auto a = constant(rnd(rng, 1, 1, 5, 7));
        auto b = constant(rnd(rng, 1, 1, 9, 7));
        MacScope scope;
        matmul(a, b, true);
        uint64_t loops = 0;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 9; ++j)
                for (int k = 0; k < 7; ++k) ++loops;
        pass &= scope.rec.total == loops;
        why += fmt(", linear %llu==%llu", (unsigned long long)scope.rec.total,
                   (unsigned long long)loops);
    }
    {
        const int win = 4, heads = 2, ch = 8, t = win * win, dh = ch / heads;
        auto x = constant(rnd(rng, 1, ch, 4, 4));
        auto wq = constant(rnd(rng, ch, ch, 1, 1)), wk = constant(rnd(rng, ch, ch, 1, 1)),
             wv = constant(rnd(rng, ch, ch, 1, 1));
        MacScope scope;
        auto q = window_partition(conv2d(x, wq, Tensor<float>{}, 1, 0), win, heads);
        auto k = window_partition(conv2d(x, wk, Tensor<float>{}, 1, 0), win, heads);
        auto v = window_partition(conv2d(x, wv, Tensor<float>{}, 1, 0), win, heads);
        auto sc = matmul(q, k, true);
        matmul(softmax_lastdim(sc), v, false);
        uint64_t loops = 0;
        for (int p = 0; p < 3; ++p)  // q/k/v projections
            for (int oc = 0; oc < ch; ++oc)
                for (int pix = 0; pix < 16; ++pix)
                    for (int ic = 0; ic < ch; ++ic) ++loops;
        for (int hd = 0; hd < heads; ++hd)  // scores
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < t; ++j)
                    for (int d = 0; d < dh; ++d) ++loops;
        for (int hd = 0; hd < heads; ++hd)  // weighted values
            for (int i = 0; i < t; ++i)
                for (int d = 0; d < dh; ++d)
                    for (int j = 0; j < t; ++j) ++loops;
        pass &= scope.rec.total == loops;
        why += fmt(", attention window %llu==%llu", (unsigned long long)scope.rec.total,
                   (unsigned long long)loops);
    }

    const MacBreakdown full = count_macs(NetworkConfig{}, 1, 256, 256);
    const double gm = full.total_gmacs(), ref = 40.760;
    why += fmt("; informational: full net %.3f GMACs at 256x256 vs externally reported %.3f "
               "(factor %.2f; attention-counting conventions and unstated window/head settings "
               "dominate)",
               gm, ref, gm / ref);

    const double wall = now_s() - t0;
    pass = pass && wall < 10.0;
    return {pass, false, why};
}

// ---------------------------------------------------------------- criterion 5

int interior_hole_pixels(const BinaryMask& m) {
    const int h = m.height, w = m.width;
    std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
    std::deque<std::pair<int, int>> q;
    auto push = [&](int y, int x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        const size_t i = static_cast<size_t>(y) * w + x;
        if (seen[i] || m.bits[i]) return;
        seen[i] = 1;
        q.emplace_back(y, x);
    };
    for (int x = 0; x < w; ++x) {
        push(0, x);
        push(h - 1, x);
    }
    for (int y = 0; y < h; ++y) {
        push(y, 0);
        push(y, w - 1);
    }
    while (!q.empty()) {
        const auto [y, x] = q.front();
        q.pop_front();
        push(y - 1, x);
        push(y + 1, x);
        push(y, x - 1);
        push(y, x + 1);
    }
    int holes = 0;
    for (size_t i = 0; i < seen.size(); ++i) holes += !m.bits[i] && !seen[i];
    return holes;
}

double mask_iou(const BinaryMask& m, const Slice& truth) {
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < m.bits.size(); ++i) {
        const bool t = truth.pixels[i] > 0.0f, p = m.bits[i] != 0;
        inter += t && p;
        uni += t || p;
    }
    return uni ? double(inter) / double(uni) : 1.0;
}

Outcome crit_segmentation() {
    const double t0 = now_s();

    int hole_pixels = 0;
    for (const auto [side, outer, inner] : {std::array{128, 40, 10}, {160, 55, 25}, {96, 30, 14}}) {
        Slice ring = constant_slice(side, side, 0);
        const double cy = side / 2.0, cx = side / 2.0;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const double r = std::hypot(y - cy, x - cx);
                if (r <= outer && r >= inner) ring.at(y, x) = 0.75f;
            }
        hole_pixels += interior_hole_pixels(segment_slice(ring));
    }

    bool monotone = true;
    const SegmentationConfig scfg;
    for (uint64_t seed = 0; seed < 50 && monotone; ++seed) {
        const Volume v = generate_phantom_volume(seed, 4, 96, 96);
        const auto slices = slice_volume(v, Plane::axial);
        if (*std::max_element(slices[2].pixels.begin(), slices[2].pixels.end()) <= 0.0f)
            continue;
        const BinaryMask m0 = kmeans_foreground(slices[2], scfg.kmeans);
        const BinaryMask m1 = dilate_mask(m0, scfg.dilate_kernel);
        const BinaryMask mf =
            fill_holes(m1, scfg.fill_kernel_start, scfg.fill_kernel_step, scfg.max_fill_iters);
        for (size_t i = 0; i < m0.bits.size(); ++i) {
            monotone &= !(m0.bits[i] && !m1.bits[i]);
            monotone &= !(m1.bits[i] && !mf.bits[i]);
        }
    }

    double clean_min = 1.0, noisy_min = 1.0;
    for (uint64_t seed = 1; seed <= 12; ++seed) {
        const Volume v = generate_phantom_volume(seed, 6, 320, 320);
        const auto slices = slice_volume(v, Plane::axial);
        for (int z : {2, 3}) {
            clean_min = std::min(clean_min, mask_iou(segment_slice(slices[z]), slices[z]));
            const Slice noisy = add_noise(slices[z], NoiseParams(0.04, 0.02, 77, true), z);
            noisy_min = std::min(noisy_min, mask_iou(segment_slice(noisy), slices[z]));
        }
    }

    const double wall = now_s() - t0;
    const bool pass =
        hole_pixels == 0 && monotone && clean_min >= 0.95 && noisy_min >= 0.90 && wall < 60.0;
    return {pass, false,
            fmt("ring hole pixels %d (==0), 50-phantom stage monotonicity %s, IoU min clean "
                "%.4f (>=0.95) noisy %.4f (>=0.90)",
                hole_pixels, monotone ? "ok" : "VIOLATED", clean_min, noisy_min)};
}

// ---------------------------------------------------------------- criterion 6

Outcome crit_patching() {
    const double t0 = now_s();
    Prng rng(700, 0);

    bool nested_ok = true;
    for (int trial = 0; trial < 100 && nested_ok; ++trial) {
        std::vector<BoundingBox> boxes;
        const int n = 2 + int(rng.below(12));
        for (int i = 0; i < n; ++i) {
            BoundingBox b;
            b.x = int(rng.below(40));
            b.y = int(rng.below(40));
            b.w = 1 + int(rng.below(30));
            b.h = 1 + int(rng.below(30));
            boxes.push_back(b);
            if (rng.uniform() < 0.3) boxes.push_back(b);  // force duplicates
            if (rng.uniform() < 0.3 && b.w > 2 && b.h > 2)
                boxes.push_back({b.x + 1, b.y + 1, b.w - 2, b.h - 2});  // force strict nesting
        }
        std::vector<BoundingBox> expect;
        for (size_t i = 0; i < boxes.size(); ++i) {
            bool drop = false;
            for (size_t j = 0; j < boxes.size() && !drop; ++j) {
                if (j == i || !boxes[j].contains(boxes[i])) continue;
                drop = !(boxes[i] == boxes[j]) || j < i;
            }
            if (!drop) expect.push_back(boxes[i]);
        }
        nested_ok = remove_nested_boxes(boxes) == expect;
    }

    bool coverage_ok = true, disjoint_ok = true;
    for (int trial = 0; trial < 30 && coverage_ok && disjoint_ok; ++trial) {
        const int H = 96, W = 96, patch = 16;
        BinaryMask m;
        m.height = H;
        m.width = W;
        m.stage = MaskStage::Mf;
        m.bits.assign(static_cast<size_t>(H) * W, 0);
        const int blobs = 1 + int(rng.below(4));
        for (int b = 0; b < blobs; ++b) {
            const int cy = 10 + int(rng.below(H - 20)), cx = 10 + int(rng.below(W - 20));
            const int ry = 3 + int(rng.below(14)), rx = 3 + int(rng.below(14));
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const double dy = (y - cy) / double(ry), dx = (x - cx) / double(rx);
                    if (dy * dy + dx * dx <= 1.0) m.bits[y * W + x] = 1;
                }
        }
        auto boxes = remove_nested_boxes(extract_bounding_boxes(m));
        std::vector<uint8_t> covered(m.bits.size(), 0);
        for (const auto& box : boxes) {
            const auto pats = tile_patches(box, patch, W, H);
            std::vector<uint8_t> grid_cells(m.bits.size(), 0);
            for (const auto& p : pats) {
                for (int y = p.y; y < p.y + p.size; ++y)
                    for (int x = p.x; x < p.x + p.size; ++x) {
                        covered[y * W + x] = 1;
                        if (!p.overlap) {
                            disjoint_ok &= !grid_cells[y * W + x];
                            grid_cells[y * W + x] = 1;
                        }
                    }
            }
        }
        for (size_t i = 0; i < m.bits.size(); ++i)
            if (m.bits[i] && !covered[i]) coverage_ok = false;
    }

    const double wall = now_s() - t0;
    const bool pass = nested_ok && coverage_ok && disjoint_ok && wall < 30.0;
    return {pass, false,
            fmt("containment oracle %s on 100 sets, coverage %s, unflagged grid disjoint %s",
                nested_ok ? "ok" : "MISMATCH", coverage_ok ? "ok" : "GAP",
                disjoint_ok ? "ok" : "OVERLAP")};
}

// ------------------------------------------------------------ criteria 7 & 8

constexpr uint64_t kCorpusSeeds[] = {3, 4, 5, 6};
constexpr uint64_t kHeldOutSeeds[] = {7, 8};
constexpr int kTrainEpochs = 40;
constexpr double kTrainLr = 3e-4;
constexpr uint64_t kTrainSeed = 11;

NetworkConfig tiny_config(bool ablate) {
    NetworkConfig cfg;
    cfg.base_channels = 8;
    cfg.window_size = 4;
    cfg.se_reduction = 4;
    cfg.ablate_attention = ablate;
    return cfg;
}

struct DeskScale {
    bool ready = false;
    fs::path dir;
    DatasetManifest manifest;
    double haru_val = 0, resu_val = 0;
    double haru_train_s = 0, resu_train_s = 0;
    HaruNet<float> haru{tiny_config(false), kTrainSeed};
};

DeskScale& desk_scale() {
    static DeskScale ds;
    if (ds.ready) return ds;
    ds.dir = fs::temp_directory_path() / "harunet_acceptance";
    fs::remove_all(ds.dir);
    fs::create_directories(ds.dir);

    std::vector<Volume> vols;
    for (uint64_t seed : kCorpusSeeds) vols.push_back(generate_phantom_volume(seed, 6, 192, 192));
    PatchDatasetConfig pcfg;
    pcfg.noise = NoiseParams(0.04, 0.02, 1, true);
    pcfg.split_seed = 1;
    pcfg.patch = 64;
    pcfg.frac_train = 0.75;
    pcfg.frac_val = 0.25;
    pcfg.frac_test = 0.0;
    pcfg.out_dir = (ds.dir / "corpus").string();
    ds.manifest = build_patch_dataset(vols, pcfg).manifest;

    TrainConfig tcfg;
    tcfg.lr0 = kTrainLr;
    tcfg.max_epochs = kTrainEpochs;
    tcfg.batch_size = 8;
    tcfg.seed = kTrainSeed;

    double t0 = now_s();
    const TrainHistory hh =
        train(ds.haru, ds.manifest, pcfg.out_dir, tcfg, (ds.dir / "haru").string());
    ds.haru_train_s = now_s() - t0;
    ds.haru_val = hh.best_val;

    HaruNet<float> resu(tiny_config(true), kTrainSeed);
    t0 = now_s();
    const TrainHistory rh =
        train(resu, ds.manifest, pcfg.out_dir, tcfg, (ds.dir / "resu").string());
    ds.resu_train_s = now_s() - t0;
    ds.resu_val = rh.best_val;

    ds.ready = true;
    return ds;
}

Slice blur3(const Slice& s) {
    auto refl = [&](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    Slice t = s, out = s;
    const float k[3] = {0.25f, 0.5f, 0.25f};
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            float a = 0;
            for (int d = -1; d <= 1; ++d) a += k[d + 1] * s.at(y, refl(x + d, s.width));
            t.at(y, x) = a;
        }
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            float a = 0;
            for (int d = -1; d <= 1; ++d) a += k[d + 1] * t.at(refl(y + d, s.height), x);
            out.at(y, x) = a;
        }
    return out;
}

Outcome crit_denoising() {
    DeskScale& ds = desk_scale();
    const double budget = ds.haru_train_s * max_threads();
    bool pass = budget <= 1800.0;
    std::string why = fmt("train %.0fs x %d threads = %.0fs (<=1800s)", ds.haru_train_s,
                          max_threads(), budget);

    for (uint64_t seed : kHeldOutSeeds) {
        const Volume clean = generate_phantom_volume(seed, 6, 192, 192);
        Volume noisy = clean;
        const auto cl = slice_volume(clean, Plane::axial);
        for (size_t z = 0; z < cl.size(); ++z) {
            const Slice ns = add_noise(cl[z], NoiseParams(0.04, 0.02, 1000 + seed, true), z);
            std::copy(ns.pixels.begin(), ns.pixels.end(),
                      noisy.voxels.begin() + z * size_t(clean.height) * clean.width);
        }
        const DenoiseResult dr = denoise_volume(ds.haru, noisy, 64, 16);
        const auto no = slice_volume(noisy, Plane::axial);
        const auto de = slice_volume(dr.volume, Plane::axial);
        double np = 0, dp = 0, bp = 0, ng = 0, dg = 0;
        for (size_t z = 0; z < cl.size(); ++z) {
            const Slice bl = blur3(no[z]);
            np += psnr(cl[z], no[z], 1.0).db;
            dp += psnr(cl[z], de[z], 1.0).db;
            bp += psnr(cl[z], bl, 1.0).db;
            ng += gmsd(cl[z], no[z]);
            dg += gmsd(cl[z], de[z]);
        }
        const double n = double(cl.size());
        np /= n; dp /= n; bp /= n; ng /= n; dg /= n;
        const bool vol_ok = dp >= np + 3.0 && dp >= bp + 1.0 && dg < ng;
        pass &= vol_ok;
        why += fmt("; held-out %llu: %.2f dB vs noisy %.2f+3 / blur %.2f+1, deviation %.4f vs "
                   "%.4f -> %s",
                   (unsigned long long)seed, dp, np, bp, dg, ng, vol_ok ? "ok" : "MISSED");
    }
    return {pass, false, why};
}

Outcome crit_ablation() {
    DeskScale& ds = desk_scale();
    const double h = ds.haru_val, r = ds.resu_val;
    const std::string detail =
        fmt("attention val MSE %.6g vs plain residual %.6g at matched seed/epochs (%d @ lr %g)",
            h, r, kTrainEpochs, kTrainLr);
    if (h <= r) return {true, false, detail};
    if (h <= r * 1.02)
        return {false, true, detail + "; within 2%: documented soft failure, gate stays green"};
    return {false, false, detail + fmt("; inversion of %.1f%% exceeds the 2%% tie band",
                                       100.0 * (h / r - 1.0))};
}

// ---------------------------------------------------------------- criterion 9

Outcome crit_scheduler() {
    const double t0 = now_s();
    TrainConfig cfg;
    PlateauScheduler constant(cfg);
    std::vector<int> halved;
    int stopped = 0;
    for (int epoch = 1; epoch <= 30 && !stopped; ++epoch) {
        const double before = constant.lr();
        const auto d = constant.observe(1.0);
        if (d.lr_next < before) halved.push_back(epoch);
        if (d.stop) stopped = epoch;
    }
    const bool const_ok = halved == std::vector<int>{6, 11, 16} && stopped == 21;

    bool scripted_ok = true;
    for (uint64_t seed : {5ull, 6ull, 7ull}) {
        PlateauScheduler sched(cfg);
        Prng rng(seed, 0);
        double best = std::numeric_limits<double>::infinity(), lr = cfg.lr0;
        int flat = 0, since_cut = 0;
        for (int epoch = 1; epoch <= 80; ++epoch) {
            const double loss = rng.uniform() < 0.25 ? rng.uniform(0, best) : best + 0.1;
            bool want_stop = false;
            if (loss < best) {
                best = loss;
                flat = since_cut = 0;
            } else {
                ++flat;
                ++since_cut;
                if (flat >= cfg.early_stop_patience) {
                    want_stop = true;
                } else if (since_cut >= cfg.plateau_patience) {
                    lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
                    since_cut = 0;
                }
            }
            const auto d = sched.observe(loss);
            scripted_ok &= d.stop == want_stop && d.lr_next == lr;
            if (want_stop) break;
        }
    }
    const double wall = now_s() - t0;
    const bool pass = const_ok && scripted_ok && wall < 1.0;
    return {pass, false,
            fmt("constant stream: halvings at {6,11,16} %s, stop at 21 %s; scripted oracle %s",
                const_ok ? "ok" : "WRONG", stopped == 21 ? "ok" : "WRONG",
                scripted_ok ? "ok" : "MISMATCH")};
}

// --------------------------------------------------------------- criterion 10

// Sends the pipeline's progress chatter to /dev/null so the gate prints one
// line per criterion.
struct QuietStdout {
    int saved;
    QuietStdout() : saved(dup(1)) {
        std::fflush(stdout);
        const int nul = open("/dev/null", O_WRONLY);
        dup2(nul, 1);
        close(nul);
    }
    ~QuietStdout() {
        std::fflush(stdout);
        dup2(saved, 1);
        close(saved);
    }
};

Outcome crit_determinism() {
    auto run = [](const fs::path& root) {
        fs::remove_all(root);
        fs::create_directories(root);
        const std::string r = root.string();
        std::ofstream(root / "tiny.cfg")
            << "base_channels = 8\nwindow_size = 4\nse_reduction = 4\n";
        auto cli = [](std::vector<std::string> args) { return cli_main(args); };
        int rc = 0;
        rc |= cli({"phantom", "--seed", "21", "--dims", "4x96x96", "--out", r + "/vols/a.hvol",
                   "--threads", "1"});
        rc |= cli({"phantom", "--seed", "22", "--dims", "4x96x96", "--out", r + "/vols/b.hvol",
                   "--threads", "1"});
        rc |= cli({"patchify", "--input", r + "/vols", "--out", r + "/corpus", "--patch", "64",
                   "--split", "0.5,0.5,0", "--seed", "5", "--threads", "1"});
        rc |= cli({"train", "--manifest", r + "/corpus/manifest.tsv", "--config",
                   r + "/tiny.cfg", "--out", r + "/run", "--epochs", "2", "--batch-size", "4",
                   "--seed", "3", "--lr", "1e-3", "--threads", "1"});
        rc |= cli({"denoise", "--ckpt", r + "/run/best.ckpt", "--volume", r + "/vols/a.hvol",
                   "--out", r + "/den/a.hvol", "--tile", "64", "--overlap", "16", "--threads",
                   "1"});
        return rc;
    };
    const fs::path a = fs::temp_directory_path() / "harunet_det_a";
    const fs::path b = fs::temp_directory_path() / "harunet_det_b";
    {
        QuietStdout quiet;
        if (run(a) != 0 || run(b) != 0) return {false, false, "a pipeline stage failed"};
    }

    std::string why;
    bool pass = true;
    auto compare = [&](const std::string& rel) {
        const bool same = slurp(a / rel) == slurp(b / rel) && fs::exists(a / rel);
        pass &= same;
        why += fmt("%s%s %s", why.empty() ? "" : ", ", rel.c_str(), same ? "==" : "DIFFERS");
    };
    compare("corpus/manifest.tsv");
    compare("run/best.ckpt");
    compare("run/config.cfg");
    compare("den/a.hvol");
    int pngs = 0;
    bool png_same = true;
    for (const char* split : {"train", "val", "test"}) {
        const fs::path dir = a / "corpus" / split;
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::directory_iterator(dir)) {
            const fs::path rel = fs::path("corpus") / split / e.path().filename();
            png_same &= slurp(a / rel) == slurp(b / rel);
            ++pngs;
        }
    }
    pass &= png_same && pngs > 0;
    why += fmt(", %d patch files %s", pngs, png_same ? "==" : "DIFFER");
    fs::remove_all(a);
    fs::remove_all(b);
    return {pass, false, why};
}

}  // namespace

int main(int argc, char** argv) {
    struct Entry {
        int id;
        const char* label;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "noise residual statistics", crit_noise_stats},
        {2, "finite-difference gradient audit", crit_gradients},
        {3, "image metric closed forms and oracle", crit_metric_oracles},
        {4, "multiply-accumulate counter oracle", crit_mac_counter},
        {5, "segmentation masks and foreground recovery", crit_segmentation},
        {6, "box pruning and patch coverage", crit_patching},
        {7, "desk-scale denoising efficacy", crit_denoising},
        {8, "attention ablation direction", crit_ablation},
        {9, "plateau scheduler and early stop", crit_scheduler},
        {10, "end-to-end byte determinism", crit_determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int hard_failures = 0;
    for (const auto& e : entries) {
        if (!wanted.empty() && !wanted.count(e.id)) continue;
        const double t0 = now_s();
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o = {false, false, std::string("exception: ") + ex.what()};
        }
        const double wall = now_s() - t0;
        const char* tag = o.pass ? "PASS" : (o.soft ? "SOFT-FAIL" : "FAIL");
        std::printf("[%s] criterion %d: %s (%.1fs) %s\n", tag, e.id, e.label, wall,
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && !o.soft) ++hard_failures;
    }
    return hard_failures;
}
