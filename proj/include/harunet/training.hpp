#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "harunet/manifest.hpp"
#include "harunet/network.hpp"
#include "harunet/volume.hpp"

namespace harunet {

struct AdamParams {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainConfig {
    double lr0 = 1e-4;
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    int early_stop_patience = 20;
    double min_lr = 1e-6;
    int batch_size = 8;
    int max_epochs = 100;
    uint64_t seed = 0;
    AdamParams adam;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0, val_loss = 0;
    double lr = 0;  // rate used during this epoch
    double seconds = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::string stop_reason;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
};

/// Validation-loss bookkeeping: halve the rate after plateau_patience epochs
/// without a new best (strict decrease), stop after early_stop_patience.
/// The epoch that sets a new best resets both counters.
class PlateauScheduler {
  public:
    explicit PlateauScheduler(const TrainConfig& cfg)
        : cfg_(cfg), lr_(cfg.lr0), best_(std::numeric_limits<double>::infinity()) {}

    struct Decision {
        bool improved = false;
        bool stop = false;
        double lr_next = 0;
    };

    Decision observe(double val_loss) {
        Decision d;
        if (val_loss < best_) {
            best_ = val_loss;
            since_improve_ = since_reduce_ = 0;
            d.improved = true;
        } else {
            ++since_improve_;
            ++since_reduce_;
            if (since_improve_ >= cfg_.early_stop_patience) {
                d.stop = true;
            } else if (since_reduce_ >= cfg_.plateau_patience) {
                lr_ = std::max(lr_ * cfg_.plateau_factor, cfg_.min_lr);
                since_reduce_ = 0;
            }
        }
        d.lr_next = lr_;
        return d;
    }

    double lr() const { return lr_; }
    double best() const { return best_; }

  private:
    TrainConfig cfg_;
    double lr_, best_;
    int since_improve_ = 0, since_reduce_ = 0;
};

/// Bias-corrected moment state for every parameter of a store, in store order.
template <typename T>
struct AdamState {
    AdamParams p;
    std::vector<Array4<T>> m, v;
    int64_t t = 0;

    AdamState(const ParameterStore<T>& ps, AdamParams params);
    void step(ParameterStore<T>& ps, double lr);
};

extern template struct AdamState<float>;
extern template struct AdamState<double>;

/// Decoded training pairs; index i of each vector is one noisy/clean pair.
template <typename T>
struct PairSet {
    std::vector<Array4<T>> noisy, clean;
    int patch = 0;
};

/// Reads one split's patch pairs from a manifest's directory.
template <typename T>
PairSet<T> load_pairs(const DatasetManifest& m, const std::string& dir, Split split);

extern template PairSet<float> load_pairs<float>(const DatasetManifest&, const std::string&,
                                                 Split);
extern template PairSet<double> load_pairs<double>(const DatasetManifest&, const std::string&,
                                                   Split);

/// Epoch loop over in-memory pairs: seeded shuffles, Adam on the MSE loss,
/// plateau scheduling, early stopping. Writes best.ckpt, config.cfg and
/// history.csv into out_dir; the checkpoint holds the best-validation
/// parameters, which are also restored into the network on return.
template <typename T>
TrainHistory train_on_pairs(HaruNet<T>& net, const PairSet<T>& train_set,
                            const PairSet<T>& val_set, const TrainConfig& cfg,
                            const std::string& out_dir);

extern template TrainHistory train_on_pairs<float>(HaruNet<float>&, const PairSet<float>&,
                                                   const PairSet<float>&, const TrainConfig&,
                                                   const std::string&);
extern template TrainHistory train_on_pairs<double>(HaruNet<double>&, const PairSet<double>&,
                                                    const PairSet<double>&, const TrainConfig&,
                                                    const std::string&);

/// Manifest-driven wrapper around train_on_pairs.
TrainHistory train(HaruNet<float>& net, const DatasetManifest& manifest,
                   const std::string& data_dir, const TrainConfig& cfg,
                   const std::string& out_dir);

/// Deterministic synthetic volume: 3-8 soft-edged ellipsoids sharing one
/// per-volume tissue intensity (with small per-structure jitter), mild
/// sinusoidal texture and 1-3 darker cavities each, on an exactly-zero
/// background.
Volume generate_phantom_volume(uint64_t seed, int depth, int height, int width,
                               double voxel_mm = 1.0);

struct DenoiseResult {
    Volume volume;
    double seconds = 0;
};

/// Slice-by-slice tiled inference with cosine-feathered overlap blending;
/// output clipped to [0,1]. Slices smaller than the tile are mirrored out to
/// tile size and cropped back.
DenoiseResult denoise_volume(const HaruNet<float>& net, const Volume& v, int tile = 256,
                             int overlap = 32);

}  // namespace harunet
