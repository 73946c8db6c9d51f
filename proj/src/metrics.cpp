#include "harunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace harunet {

namespace {

void check_dims(const Slice& a, const Slice& b, const char* who) {
    if (a.height != b.height || a.width != b.width)
        throw ValidationError(std::string(who) + ": image dimensions differ");
}

}  // namespace

PsnrValue psnr(const Slice& ref, const Slice& test, double peak) {
    check_dims(ref, test, "psnr");
    if (peak <= 0) throw ValidationError("psnr: peak must be positive");
    double acc = 0;
    const size_t n = ref.pixels.size();
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(ref.pixels[i]) - test.pixels[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(n);
    if (mse == 0) return {0, true};
    return {10.0 * std::log10(peak * peak / mse), false};
}

double ssim(const Slice& ref, const Slice& test, double peak, const SsimParams& p) {
    check_dims(ref, test, "ssim");
    if (peak <= 0 || p.window < 3 || p.window % 2 == 0 || p.sigma <= 0)
        throw ValidationError("ssim: bad parameters");
    if (ref.height < p.window || ref.width < p.window)
        throw ValidationError("ssim: image smaller than the statistics window");
    const int k = p.window, r = k / 2;
    std::vector<double> w(static_cast<size_t>(k) * k);
    double wsum = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double dy = i - r, dx = j - r;
            wsum += w[i * k + j] = std::exp(-(dy * dy + dx * dx) / (2 * p.sigma * p.sigma));
        }
    for (auto& v : w) v /= wsum;
    const double c1 = p.k1 * peak * p.k1 * peak, c2 = p.k2 * peak * p.k2 * peak;

    const int oh = ref.height - k + 1, ow = ref.width - k + 1;
    double total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static)
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    const double wv = w[i * k + j];
                    const double a = ref.at(y + i, x + j), b = test.at(y + i, x + j);
                    mx += wv * a;
                    my += wv * b;
                    sxx += wv * a * a;
                    syy += wv * b * b;
                    sxy += wv * (a * b);  // grouped so the two argument orders round alike
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    return total / (static_cast<double>(oh) * ow);
}

namespace {

/// 3x3 Prewitt gradient magnitude of the half-resolution image, zero-padded.
std::vector<double> gradient_magnitude(const Slice& s, int h2, int w2) {
    std::vector<double> half(static_cast<size_t>(h2) * w2), gm(half.size());
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x)
            half[y * w2 + x] = 0.25 * (static_cast<double>(s.at(2 * y, 2 * x)) +
                                       s.at(2 * y, 2 * x + 1) + s.at(2 * y + 1, 2 * x) +
                                       s.at(2 * y + 1, 2 * x + 1));
    auto px = [&](int y, int x) {
        return y < 0 || y >= h2 || x < 0 || x >= w2 ? 0.0 : half[y * w2 + x];
    };
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            const double gx = (px(y - 1, x - 1) + px(y, x - 1) + px(y + 1, x - 1) -
                               px(y - 1, x + 1) - px(y, x + 1) - px(y + 1, x + 1)) /
                              3.0;
            const double gy = (px(y - 1, x - 1) + px(y - 1, x) + px(y - 1, x + 1) -
                               px(y + 1, x - 1) - px(y + 1, x) - px(y + 1, x + 1)) /
                              3.0;
            gm[y * w2 + x] = std::sqrt(gx * gx + gy * gy);
        }
    return gm;
}

}  // namespace

double gmsd(const Slice& ref, const Slice& test, const GmsdParams& p) {
    check_dims(ref, test, "gmsd");
    const int h2 = ref.height / 2, w2 = ref.width / 2;
    if (h2 < 1 || w2 < 1) throw ValidationError("gmsd: image too small");
    const auto g1 = gradient_magnitude(ref, h2, w2);
    const auto g2 = gradient_magnitude(test, h2, w2);
    const size_t n = g1.size();
    std::vector<double> sim(n);
    for (size_t i = 0; i < n; ++i)
        sim[i] = (2 * g1[i] * g2[i] + p.c) / (g1[i] * g1[i] + g2[i] * g2[i] + p.c);
    double mean = 0;
    for (double v : sim) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (double v : sim) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(n));
}

void MetricsReport::finalize() {
    mean_psnr = {};
    mean_ssim = mean_gmsd = 0;
    if (per_image.empty()) return;
    double acc = 0;
    for (const auto& m : per_image) {
        mean_psnr.infinite |= m.psnr.infinite;
        acc += m.psnr.db;
        mean_ssim += m.ssim;
        mean_gmsd += m.gmsd;
    }
    const double n = static_cast<double>(per_image.size());
    mean_psnr.db = mean_psnr.infinite ? 0 : acc / n;
    mean_ssim /= n;
    mean_gmsd /= n;
}

MacBreakdown count_macs(const NetworkConfig& cfg, int n, int h, int w) {
    MacBreakdown b;
    b.layers = enumerate_layer_costs(cfg, n, h, w);
    for (const auto& l : b.layers) b.total += l.macs;
    return b;
}

std::string render_report(const std::vector<MetricsReport>& reports) {
    std::vector<const MetricsReport*> rows;
    for (const auto& r : reports) rows.push_back(&r);
    auto key = [](const MetricsReport* r) {
        return r->mean_psnr.infinite ? HUGE_VAL : r->mean_psnr.db;
    };
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const MetricsReport* a, const MetricsReport* b) { return key(a) > key(b); });
    std::ostringstream out;
    out << "Model | PSNR | SSIM | GMSD | GMACs/patch | time/scan\n";
    char buf[64];
    for (const auto* r : rows) {
        out << r->model << " | ";
        if (r->mean_psnr.infinite) {
            out << "inf";
        } else {
            std::snprintf(buf, sizeof buf, "%.2f", r->mean_psnr.db);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%.4f", r->mean_ssim);
        out << " | " << buf;
        std::snprintf(buf, sizeof buf, "%.4f", r->mean_gmsd);
        out << " | " << buf;
        if (r->gmacs >= 0) {
            std::snprintf(buf, sizeof buf, "%.3f", r->gmacs);
            out << " | " << buf;
        } else {
            out << " | -";
        }
        if (r->minutes_per_scan >= 0) {
            std::snprintf(buf, sizeof buf, "%.2f", r->minutes_per_scan);
            out << " | " << buf << "\n";
        } else {
            out << " | -\n";
        }
    }
    return out.str();
}

}  // namespace harunet
