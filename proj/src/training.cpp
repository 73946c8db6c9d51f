#include "harunet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>

#include "harunet/autodiff.hpp"
#include "harunet/errors.hpp"
#include "harunet/png_io.hpp"
#include "harunet/rng.hpp"

namespace fs = std::filesystem;

namespace harunet {

void TrainConfig::validate() const {
    if (!(lr0 > 0)) throw ValidationError("train config: lr0 must be > 0");
    if (!(min_lr > 0) || min_lr > lr0)
        throw ValidationError("train config: min_lr must be in (0, lr0]");
    if (plateau_patience < 1) throw ValidationError("train config: plateau_patience must be >= 1");
    if (!(plateau_factor > 0 && plateau_factor < 1))
        throw ValidationError("train config: plateau_factor must be in (0,1)");
    if (early_stop_patience < 1)
        throw ValidationError("train config: early_stop_patience must be >= 1");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
    if (max_epochs < 0) throw ValidationError("train config: max_epochs must be >= 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
        throw ValidationError("train config: adam betas must be in [0,1)");
    if (!(adam.eps > 0)) throw ValidationError("train config: adam eps must be > 0");
}

template <typename T>
AdamState<T>::AdamState(const ParameterStore<T>& ps, AdamParams params) : p(params) {
    m.reserve(ps.items().size());
    v.reserve(ps.items().size());
    for (const auto& t : ps.items()) {
        const auto& s = t->value;
        m.emplace_back(s.n, s.c, s.h, s.w);
        v.emplace_back(s.n, s.c, s.h, s.w);
    }
}

template <typename T>
void AdamState<T>::step(ParameterStore<T>& ps, double lr) {
    if (ps.items().size() != m.size())
        throw ValidationError("adam: state does not match parameter store");
    ++t;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    for (size_t k = 0; k < m.size(); ++k) {
        auto& param = ps.items()[k];
        param->ensure_grad();
        T* x = param->value.data();
        const T* g = param->grad.data();
        T* mk = m[k].data();
        T* vk = v[k].data();
        const int64_t cnt = static_cast<int64_t>(param->value.size());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < cnt; ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = p.beta1 * mk[i] + (1.0 - p.beta1) * gi;
            const double vi = p.beta2 * vk[i] + (1.0 - p.beta2) * gi * gi;
            mk[i] = static_cast<T>(mi);
            vk[i] = static_cast<T>(vi);
            x[i] = static_cast<T>(x[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + p.eps));
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;

template <typename T>
PairSet<T> load_pairs(const DatasetManifest& m, const std::string& dir, Split split) {
    std::map<std::string, const ManifestEntry*> clean_by_pair;
    for (const auto& e : m.entries)
        if (e.split == split && e.role == PatchRole::clean) clean_by_pair[e.pair_id] = &e;

    PairSet<T> out;
    for (const auto& e : m.entries) {
        if (e.split != split || e.role != PatchRole::noisy) continue;
        auto it = clean_by_pair.find(e.pair_id);
        if (it == clean_by_pair.end())
            throw ValidationError("load_pairs: unpaired noisy patch " + e.path);
        if (out.patch == 0) out.patch = e.size;
        if (e.size != out.patch || it->second->size != out.patch)
            throw ValidationError("load_pairs: mixed patch sizes in split");
        for (const ManifestEntry* pe : {&e, it->second}) {
            std::vector<float> px;
            int h = 0, w = 0;
            read_png16((fs::path(dir) / pe->path).string(), px, h, w);
            if (h != pe->size || w != pe->size)
                throw ValidationError("load_pairs: " + pe->path + " does not match its record");
            Array4<T> a(1, 1, h, w);
            for (size_t i = 0; i < px.size(); ++i) a.v[i] = static_cast<T>(px[i]);
            (pe->role == PatchRole::noisy ? out.noisy : out.clean).push_back(std::move(a));
        }
    }
    return out;
}

template PairSet<float> load_pairs<float>(const DatasetManifest&, const std::string&, Split);
template PairSet<double> load_pairs<double>(const DatasetManifest&, const std::string&, Split);

namespace {

template <typename T>
Array4<T> gather_batch(const std::vector<Array4<T>>& pool, const std::vector<size_t>& order,
                       size_t first, int bn, int s) {
    Array4<T> b(bn, 1, s, s);
    const size_t plane = static_cast<size_t>(s) * s;
    for (int i = 0; i < bn; ++i)
        std::copy_n(pool[order[first + i]].data(), plane, b.data() + plane * i);
    return b;
}

/// Elementwise mean squared error over a pair set, gradient-free.
template <typename T>
double eval_mse(const HaruNet<T>& net, const PairSet<T>& set, int batch_size) {
    const size_t n = set.noisy.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    double sse = 0;
    size_t cnt = 0;
    for (size_t i = 0; i < n; i += batch_size) {
        const int bn = static_cast<int>(std::min<size_t>(batch_size, n - i));
        auto x = gather_batch(set.noisy, order, i, bn, set.patch);
        auto y = gather_batch(set.clean, order, i, bn, set.patch);
        auto pred = net.infer(x);
        for (size_t j = 0; j < pred.size(); ++j) {
            const double d = static_cast<double>(pred.v[j]) - static_cast<double>(y.v[j]);
            sse += d * d;
        }
        cnt += pred.size();
    }
    return sse / static_cast<double>(cnt);
}

void write_history(const TrainHistory& hist, const std::string& out_dir) {
    const std::string path = (fs::path(out_dir) / "history.csv").string();
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    std::fprintf(f, "epoch,train_loss,val_loss,lr,seconds\n");
    for (const auto& e : hist.epochs)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.lr,
                     e.seconds);
    std::fclose(f);
}

}  // namespace

template <typename T>
TrainHistory train_on_pairs(HaruNet<T>& net, const PairSet<T>& train_set,
                            const PairSet<T>& val_set, const TrainConfig& cfg,
                            const std::string& out_dir) {
    cfg.validate();
    if (train_set.noisy.empty() || val_set.noisy.empty())
        throw ValidationError("train: both train and val splits must be non-empty");
    if (train_set.noisy.size() != train_set.clean.size())
        throw ValidationError("train: unpaired training set");
    if (val_set.patch != train_set.patch)
        throw ValidationError("train: train/val patch sizes differ");
    const int side = net.config().min_input_side();
    if (train_set.patch % side != 0)
        throw ValidationError("train: patch size must be a multiple of " + std::to_string(side));

    fs::create_directories(out_dir);
    store_network_config(net.config(), (fs::path(out_dir) / "config.cfg").string());
    const std::string ckpt = (fs::path(out_dir) / "best.ckpt").string();

    auto& ps = net.params();
    AdamState<T> adam(ps, cfg.adam);
    PlateauScheduler sched(cfg);
    TrainHistory hist;

    if (cfg.max_epochs == 0) {
        ps.save(ckpt);
        hist.stop_reason = "epoch budget";
        write_history(hist, out_dir);
        return hist;
    }

    const size_t n = train_set.noisy.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_epoch = sched.lr();
        Prng shuf(cfg.seed, static_cast<uint64_t>(epoch));
        shuf.shuffle(order.begin(), order.end());

        double train_sum = 0;
        for (size_t i = 0; i < n; i += cfg.batch_size) {
            const int bn = static_cast<int>(std::min<size_t>(cfg.batch_size, n - i));
            auto xb = gather_batch(train_set.noisy, order, i, bn, train_set.patch);
            auto yb = gather_batch(train_set.clean, order, i, bn, train_set.patch);
            auto loss = mse_loss(net.forward(constant(std::move(xb))), constant(std::move(yb)));
            const double lv = static_cast<double>(loss->value.v[0]);
            if (!std::isfinite(lv))
                throw ValidationError("train: non-finite training loss at epoch " +
                                      std::to_string(epoch));
            ps.zero_grad();
            backward(loss);
            adam.step(ps, lr_epoch);
            train_sum += lv * bn;
        }

        const double train_loss = train_sum / static_cast<double>(n);
        const double val_loss = eval_mse(net, val_set, cfg.batch_size);
        if (!std::isfinite(val_loss))
            throw ValidationError("train: non-finite validation loss at epoch " +
                                  std::to_string(epoch));
        const auto d = sched.observe(val_loss);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back({epoch, train_loss, val_loss, lr_epoch, seconds});
        if (d.improved) {
            ps.save(ckpt);
            hist.best_val = val_loss;
            hist.best_epoch = epoch;
        }
        if (d.stop) {
            hist.stop_reason = "early stop";
            break;
        }
    }
    if (hist.stop_reason.empty()) hist.stop_reason = "epoch budget";

    ps.load(ckpt);
    write_history(hist, out_dir);
    return hist;
}

template TrainHistory train_on_pairs<float>(HaruNet<float>&, const PairSet<float>&,
                                            const PairSet<float>&, const TrainConfig&,
                                            const std::string&);
template TrainHistory train_on_pairs<double>(HaruNet<double>&, const PairSet<double>&,
                                             const PairSet<double>&, const TrainConfig&,
                                             const std::string&);

TrainHistory train(HaruNet<float>& net, const DatasetManifest& manifest,
                   const std::string& data_dir, const TrainConfig& cfg,
                   const std::string& out_dir) {
    auto tr = load_pairs<float>(manifest, data_dir, Split::train);
    auto va = load_pairs<float>(manifest, data_dir, Split::val);
    return train_on_pairs(net, tr, va, cfg, out_dir);
}

}  // namespace harunet
