#include "harunet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "harunet/errors.hpp"
#include "harunet/manifest.hpp"
#include "harunet/metrics.hpp"
#include "harunet/network.hpp"
#include "harunet/noise.hpp"
#include "harunet/patching.hpp"
#include "harunet/png_io.hpp"
#include "harunet/segmentation.hpp"
#include "harunet/training.hpp"
#include "harunet/volume.hpp"

namespace fs = std::filesystem;

namespace harunet {
namespace {

void apply_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

/// Appends the reproducibility line (version, verb, flags) to run.log in the
/// directory that received this run's outputs.
void log_run(const fs::path& out_dir, const std::vector<std::string>& args) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / "run.log", std::ios::app);
    if (!f) throw IoError("cannot append to " + (out_dir / "run.log").string());
    f << "harunet " << kVersion;
    for (const auto& a : args) f << ' ' << a;
    f << '\n';
}

std::vector<fs::path> list_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void parse_ints(const std::string& flag, const std::string& text, char sep, int* out, int k) {
    size_t pos = 0;
    for (int i = 0; i < k; ++i) {
        size_t next = text.find(sep, pos);
        const std::string tok =
            text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        try {
            out[i] = std::stoi(tok);
        } catch (const std::exception&) {
            throw ValidationError(flag + ": cannot parse '" + text + "'");
        }
        if ((next == std::string::npos) != (i == k - 1))
            throw ValidationError(flag + ": expected " + std::to_string(k) + " fields");
        pos = next + 1;
    }
}

Slice slice_from_png(const fs::path& p, int index) {
    Slice s;
    s.plane = Plane::axial;
    s.index = index;
    s.source_id = p.stem().string();
    read_png16(p.string(), s.pixels, s.height, s.width);
    return s;
}

void run_phantom(uint64_t seed, const std::string& dims, const std::string& out,
                 double voxel_mm) {
    int d[3];
    parse_ints("--dims", dims, 'x', d, 3);
    const Volume v = generate_phantom_volume(seed, d[0], d[1], d[2], voxel_mm);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    store_volume(v, out);
    size_t nonzero = 0;
    for (float x : v.voxels) nonzero += x > 0;
    std::printf("phantom %dx%dx%d seed %llu -> %s (nonzero fraction %.3f)\n", d[0], d[1], d[2],
                static_cast<unsigned long long>(seed), out.c_str(),
                static_cast<double>(nonzero) / static_cast<double>(v.size()));
}

void run_simulate(const std::string& input, const std::string& out, double sq, double se,
                  uint64_t seed, bool no_clip) {
    const auto files = list_files(input, ".png");
    if (files.empty()) throw ValidationError("simulate-noise: no .png slices in " + input);
    const NoiseParams p(sq, se, seed, !no_clip);
    fs::create_directories(out);

    DatasetManifest m;
    m.noise = p;
    m.rng_name = kRngName;
    m.seed = seed;
    for (size_t i = 0; i < files.size(); ++i) {
        const Slice clean = slice_from_png(files[i], static_cast<int>(i));
        const Slice noisy = add_noise(clean, p, i);
        const std::string stem = files[i].stem().string();
        const std::string noisy_name = stem + "_noisy.png";
        const std::string clean_name = stem + "_clean.png";
        write_png16((fs::path(out) / noisy_name).string(), noisy.pixels.data(), noisy.height,
                    noisy.width);
        write_png16((fs::path(out) / clean_name).string(), clean.pixels.data(), clean.height,
                    clean.width);
        char pair[16];
        std::snprintf(pair, sizeof pair, "p%06zu", i);
        for (const auto& [name, role] :
             {std::pair{noisy_name, PatchRole::noisy}, std::pair{clean_name, PatchRole::clean}}) {
            ManifestEntry e;
            e.path = name;
            e.role = role;
            e.pair_id = pair;
            e.split = Split::train;
            e.volume_id = stem;
            e.plane = Plane::axial;
            e.slice_index = static_cast<int>(i);
            e.size = clean.width;
            m.entries.push_back(e);
        }
    }
    write_manifest(m, (fs::path(out) / "manifest.tsv").string());
    std::printf("simulate-noise: %zu slices -> %s (sigma_q %g, sigma_e %g, clip %d)\n",
                files.size(), out.c_str(), sq, se, static_cast<int>(!no_clip));
}

void run_segment(const std::string& input, const std::string& output, bool save_stages) {
    const auto files = list_files(input, ".png");
    if (files.empty()) throw ValidationError("segment: no .png slices in " + input);
    fs::create_directories(output);
    const SegmentationConfig cfg;
    for (size_t i = 0; i < files.size(); ++i) {
        const Slice s = slice_from_png(files[i], static_cast<int>(i));
        const BinaryMask m0 = kmeans_foreground(s, cfg.kmeans);
        const BinaryMask m1 = dilate_mask(m0, cfg.dilate_kernel);
        const BinaryMask mf =
            fill_holes(m1, cfg.fill_kernel_start, cfg.fill_kernel_step, cfg.max_fill_iters);
        const std::string stem = files[i].stem().string();
        write_png1((fs::path(output) / (stem + "_mask.png")).string(), mf.bits.data(), mf.height,
                   mf.width);
        if (save_stages) {
            write_png1((fs::path(output) / (stem + "_m0.png")).string(), m0.bits.data(),
                       m0.height, m0.width);
            write_png1((fs::path(output) / (stem + "_m1.png")).string(), m1.bits.data(),
                       m1.height, m1.width);
        }
    }
    std::printf("segment: %zu slices -> %s\n", files.size(), output.c_str());
}

void run_patchify(const std::string& input, const std::string& out, double sq, double se,
                  uint64_t seed, bool no_clip, int patch, const std::string& split,
                  const std::string& planes, double jitter) {
    const auto files = list_files(input, ".hvol");
    if (files.empty()) throw ValidationError("patchify: no .hvol volumes in " + input);
    std::vector<Volume> volumes;
    for (const auto& f : files) volumes.push_back(load_volume(f.string()));

    PatchDatasetConfig cfg;
    cfg.noise = NoiseParams(sq, se, seed, !no_clip);
    cfg.split_seed = seed;
    cfg.patch = patch;
    if (std::sscanf(split.c_str(), "%lf,%lf,%lf", &cfg.frac_train, &cfg.frac_val,
                    &cfg.frac_test) != 3)
        throw ValidationError("--split: expected three comma-separated fractions");
    cfg.planes.clear();
    for (size_t pos = 0; pos <= planes.size();) {
        size_t next = planes.find(',', pos);
        if (next == std::string::npos) next = planes.size();
        cfg.planes.push_back(parse_plane(planes.substr(pos, next - pos)));
        pos = next + 1;
    }
    cfg.sigma_jitter = jitter;
    cfg.out_dir = out;

    const PatchDatasetResult res = build_patch_dataset(volumes, cfg);
    std::printf("patchify: %zu volumes -> %zu patch records in %s (%d slices without "
                "foreground)\n",
                volumes.size(), res.manifest.entries.size(), out.c_str(),
                res.slices_without_foreground);
}

void run_train(const std::string& manifest_path, const std::string& config_path,
               const std::string& out, int epochs, int batch, uint64_t seed, double lr) {
    NetworkConfig net_cfg;
    if (!config_path.empty()) net_cfg = load_network_config(config_path);
    net_cfg.validate();

    TrainConfig tcfg;
    tcfg.max_epochs = epochs;
    tcfg.batch_size = batch;
    tcfg.seed = seed;
    tcfg.lr0 = lr;

    std::printf("network config:\n%s", serialize_network_config(net_cfg).c_str());
    std::printf("training: lr0=%g batch_size=%d max_epochs=%d seed=%llu\n", tcfg.lr0,
                tcfg.batch_size, tcfg.max_epochs, static_cast<unsigned long long>(seed));

    const DatasetManifest m = read_manifest(manifest_path);
    const std::string data_dir = fs::path(manifest_path).parent_path().string();
    HaruNet<float> net(net_cfg, seed);
    const TrainHistory hist = train(net, m, data_dir.empty() ? "." : data_dir, tcfg, out);
    std::printf("train: %zu epochs, best val %.6g at epoch %d, stop reason: %s\n",
                hist.epochs.size(), hist.best_val, hist.best_epoch, hist.stop_reason.c_str());
    std::printf("checkpoint: %s\n", (fs::path(out) / "best.ckpt").string().c_str());
}

void run_denoise(const std::string& ckpt, const std::string& config_path,
                 const std::string& volume, const std::string& out, int tile, int overlap) {
    const std::string cfg_path =
        config_path.empty() ? (fs::path(ckpt).parent_path() / "config.cfg").string()
                            : config_path;
    const NetworkConfig cfg = load_network_config(cfg_path);
    HaruNet<float> net(cfg, 0);
    net.params().load(ckpt);

    const Volume v = load_volume(volume);
    const DenoiseResult res = denoise_volume(net, v, tile, overlap);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    store_volume(res.volume, out);
    std::printf("denoise: %s -> %s (%.2f s, %.2f min/scan)\n", volume.c_str(), out.c_str(),
                res.seconds, res.seconds / 60.0);
}

void run_evaluate(const std::string& ref_dir, const std::string& test_dir, double peak,
                  const std::string& out, const std::string& model) {
    MetricsReport report;
    report.model = model;
    for (const char* ext : {".png", ".hvol"}) {
        for (const auto& rf : list_files(ref_dir, ext)) {
            const fs::path tf = fs::path(test_dir) / rf.filename();
            if (!fs::exists(tf)) continue;
            if (ext == std::string(".png")) {
                const Slice r = slice_from_png(rf, 0);
                const Slice t = slice_from_png(tf, 0);
                report.per_image.push_back(
                    {rf.stem().string(), psnr(r, t, peak), ssim(r, t, peak), gmsd(r, t)});
            } else {
                const Volume rv = load_volume(rf.string());
                const Volume tv = load_volume(tf.string());
                const auto rs = slice_volume(rv, Plane::axial);
                const auto ts = slice_volume(tv, Plane::axial);
                if (rs.size() != ts.size())
                    throw ValidationError("evaluate: depth mismatch for " +
                                          rf.filename().string());
                for (size_t z = 0; z < rs.size(); ++z) {
                    char id[256];
                    std::snprintf(id, sizeof id, "%s:z%03zu", rf.stem().string().c_str(), z);
                    report.per_image.push_back({id, psnr(rs[z], ts[z], peak),
                                                ssim(rs[z], ts[z], peak), gmsd(rs[z], ts[z])});
                }
            }
        }
    }
    if (report.per_image.empty())
        throw ValidationError("evaluate: no matching file names between " + ref_dir + " and " +
                              test_dir);
    report.finalize();
    const std::string text = render_report({report});
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) {
        if (fs::path(out).has_parent_path())
            fs::create_directories(fs::path(out).parent_path());
        std::ofstream f(out);
        if (!f) throw IoError("cannot write " + out);
        f << text;
    }
}

void run_macs(const std::string& config_path, const std::string& input) {
    NetworkConfig cfg;
    if (!config_path.empty()) cfg = load_network_config(config_path);
    cfg.validate();
    int d[4];
    parse_ints("--input", input, 'x', d, 4);
    if (d[1] != 1) throw ValidationError("--input: channel count must be 1");
    const MacBreakdown b = count_macs(cfg, d[0], d[2], d[3]);
    for (const auto& l : b.layers)
        std::printf("%-28s %15llu\n", l.name.c_str(), static_cast<unsigned long long>(l.macs));
    std::printf("total %llu MACs = %.3f GMACs for %s\n",
                static_cast<unsigned long long>(b.total), b.total_gmacs(), input.c_str());
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"CBCT denoising pipeline: phantom generation, noise simulation, "
                 "segmentation-driven patching, training, tiled inference and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = all cores; 1 = bitwise "
                                         "deterministic)");
    app.set_version_flag("--version", std::string("harunet ") + kVersion);

    std::string input, out, dims, split = "0.7,0.15,0.15", planes = "axial";
    std::string manifest_path, config_path, ckpt, volume, ref_dir, test_dir, model = "model";
    uint64_t seed = 0;
    double sigma_q = 0.04, sigma_e = 0.02, voxel_mm = 1.0, jitter = 0.0, lr = 1e-4, peak = 1.0;
    bool no_clip = false, save_stages = false;
    int patch = 256, tile = 256, overlap = 32, epochs = 100, batch = 8;

    auto* ph = app.add_subcommand("phantom", "generate a synthetic test volume");
    ph->add_option("--seed", seed, "generator seed")->required();
    ph->add_option("--dims", dims, "volume extent as DxHxW")->required();
    ph->add_option("--out", out, "output .hvol path")->required();
    ph->add_option("--voxel-mm", voxel_mm, "voxel edge length metadata")->capture_default_str();

    auto* sim = app.add_subcommand("simulate-noise", "corrupt a directory of clean slices");
    sim->add_option("--input", input, "directory of clean 16-bit .png slices")->required();
    sim->add_option("--out", out, "output directory")->required();
    sim->add_option("--sigma-q", sigma_q, "dose-dependent sigma")->capture_default_str();
    sim->add_option("--sigma-e", sigma_e, "electronic sigma")->capture_default_str();
    sim->add_option("--seed", seed, "noise seed")->capture_default_str();
    sim->add_flag("--no-clip", no_clip, "keep values outside [0,1]");

    auto* seg = app.add_subcommand("segment", "foreground masks for a slice directory");
    seg->add_option("--input", input, "directory of .png slices")->required();
    seg->add_option("--output", out, "mask output directory")->required();
    seg->add_flag("--save-stages", save_stages, "also write the intermediate masks");

    auto* pat = app.add_subcommand("patchify", "build a training corpus from volumes");
    pat->add_option("--input", input, "directory of .hvol volumes")->required();
    pat->add_option("--out", out, "corpus output directory")->required();
    pat->add_option("--noise-sigma-q", sigma_q, "dose-dependent sigma")->capture_default_str();
    pat->add_option("--noise-sigma-e", sigma_e, "electronic sigma")->capture_default_str();
    pat->add_option("--seed", seed, "split and noise seed")->capture_default_str();
    pat->add_flag("--no-clip", no_clip, "keep values outside [0,1]");
    pat->add_option("--patch", patch, "patch side")->capture_default_str();
    pat->add_option("--split", split, "train,val,test fractions")->capture_default_str();
    pat->add_option("--planes", planes, "comma list of axial,frontal,sagittal")->capture_default_str();
    pat->add_option("--sigma-jitter", jitter, "relative per-slice sigma jitter")->capture_default_str();

    auto* tr = app.add_subcommand("train", "fit the network on a patch corpus");
    tr->add_option("--manifest", manifest_path, "corpus manifest.tsv")->required();
    tr->add_option("--config", config_path, "network config file (defaults when omitted)");
    tr->add_option("--out", out, "run output directory")->required();
    tr->add_option("--epochs", epochs, "epoch budget")->capture_default_str();
    tr->add_option("--batch-size", batch, "minibatch size")->capture_default_str();
    tr->add_option("--seed", seed, "init and shuffle seed")->capture_default_str();
    tr->add_option("--lr", lr, "initial learning rate")->capture_default_str();

    auto* dn = app.add_subcommand("denoise", "run tiled inference over a volume");
    dn->add_option("--ckpt", ckpt, "checkpoint file")->required();
    dn->add_option("--config", config_path, "network config (default: config.cfg next to the "
                                            "checkpoint)");
    dn->add_option("--volume", volume, "input .hvol")->required();
    dn->add_option("--out", out, "output .hvol path")->required();
    dn->add_option("--tile", tile, "tile side")->capture_default_str();
    dn->add_option("--overlap", overlap, "tile overlap")->capture_default_str();

    auto* ev = app.add_subcommand("evaluate", "image quality report over matched files");
    ev->add_option("--ref", ref_dir, "reference directory (.png or .hvol)")->required();
    ev->add_option("--test", test_dir, "test directory with matching names")->required();
    ev->add_option("--peak", peak, "peak signal value")->capture_default_str();
    ev->add_option("--out", out, "also write the report here");
    ev->add_option("--model", model, "row label")->capture_default_str();

    std::string mac_input = "1x1x256x256";
    auto* mc = app.add_subcommand("macs", "analytic multiply-accumulate audit");
    mc->add_option("--config", config_path, "network config file (defaults when omitted)");
    mc->add_option("--input", mac_input, "input shape NxCxHxW")->capture_default_str();

    ph->callback([&] {
        apply_threads(threads);
        run_phantom(seed, dims, out, voxel_mm);
        log_run(fs::path(out).parent_path(), args);
    });
    sim->callback([&] {
        apply_threads(threads);
        run_simulate(input, out, sigma_q, sigma_e, seed, no_clip);
        log_run(out, args);
    });
    seg->callback([&] {
        apply_threads(threads);
        run_segment(input, out, save_stages);
        log_run(out, args);
    });
    pat->callback([&] {
        apply_threads(threads);
        run_patchify(input, out, sigma_q, sigma_e, seed, no_clip, patch, split, planes, jitter);
        log_run(out, args);
    });
    tr->callback([&] {
        apply_threads(threads);
        run_train(manifest_path, config_path, out, epochs, batch, seed, lr);
        log_run(out, args);
    });
    dn->callback([&] {
        apply_threads(threads);
        run_denoise(ckpt, config_path, volume, out, tile, overlap);
        log_run(fs::path(out).parent_path(), args);
    });
    ev->callback([&] {
        apply_threads(threads);
        run_evaluate(ref_dir, test_dir, peak, out, model);
        if (!out.empty()) log_run(fs::path(out).parent_path(), args);
    });
    mc->callback([&] {
        apply_threads(threads);
        run_macs(config_path, mac_input);
    });

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace harunet
