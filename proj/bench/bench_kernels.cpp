// Timing harness: parallel kernels against their serial reference twins on
// representative shapes, with a max-abs-difference agreement column.

#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "harunet/kernels.hpp"
#include "harunet/reference.hpp"
#include "harunet/rng.hpp"

using namespace harunet;

namespace {

double now() {
#ifdef _OPENMP
    return omp_get_wtime();
#else
    return static_cast<double>(clock()) / CLOCKS_PER_SEC;
#endif
}

Array4<float> random_array(int n, int c, int h, int w, Prng& rng) {
    Array4<float> a(n, c, h, w);
    for (auto& x : a.v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return a;
}

double max_abs_diff(const Array4<float>& a, const Array4<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

void report(const std::string& name, const std::function<Array4<float>()>& serial,
            const std::function<Array4<float>()>& parallel, int reps) {
    auto s = serial();
    auto p = parallel();
    const double diff = max_abs_diff(s, p);

    double t0 = now();
    for (int i = 0; i < reps; ++i) s = serial();
    const double ts = (now() - t0) / reps;
    t0 = now();
    for (int i = 0; i < reps; ++i) p = parallel();
    const double tp = (now() - t0) / reps;

    std::printf("%-26s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   max diff %.2e\n",
                name.c_str(), ts * 1e3, tp * 1e3, ts / tp, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (compiled without OpenMP)\n");
#endif

    Prng rng(7, 0);
    const int reps = 3;

    {
        auto x = random_array(2, 32, 64, 64, rng);
        auto w = random_array(64, 32, 3, 3, rng);
        auto b = random_array(64, 1, 1, 1, rng);
        report(
            "conv3x3 32->64 @64x64", [&] { return ref::conv_fwd(x, w, &b, 1, 1); },
            [&] { return kern::conv_fwd(x, w, &b, 1, 1); }, reps);
    }
    {
        auto gy = random_array(2, 64, 64, 64, rng);
        auto w = random_array(64, 32, 3, 3, rng);
        report(
            "conv3x3 input grad", [&] { return ref::conv_gx(gy, w, 1, 1, 64, 64); },
            [&] { return kern::conv_gx(gy, w, 1, 1, 64, 64); }, reps);
    }
    {
        auto x = random_array(2, 32, 64, 64, rng);
        auto gy = random_array(2, 64, 64, 64, rng);
        report(
            "conv3x3 weight grad", [&] { return ref::conv_gw(x, gy, 1, 1, 3, 3); },
            [&] { return kern::conv_gw(x, gy, 1, 1, 3, 3); }, reps);
    }
    {
        auto x = random_array(4, 96, 48, 48, rng);
        auto g = random_array(1, 96, 1, 1, rng);
        auto b = random_array(1, 96, 1, 1, rng);
        report(
            "layer norm @48x48x96", [&] { return ref::ln_fwd(x, g, b, 1e-5); },
            [&] {
                Array4<float> y, mu, rstd;
                kern::ln_fwd(x, g, b, 1e-5f, y, mu, rstd);
                return y;
            },
            reps);
    }
    {
        auto x = random_array(64, 4, 64, 64, rng);
        report(
            "softmax rows 64", [&] { return ref::softmax_last(x); },
            [&] { return kern::softmax_last_fwd(x); }, reps);
    }
    return 0;
}
