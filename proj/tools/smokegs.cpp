// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/core/errors.hpp"
#include "smokegs/core/parallel.hpp"
#include "smokegs/data/data.hpp"
#include "smokegs/medium/medium.hpp"
#include "smokegs/train/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace smokegs;

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    throw usage_error("value for '" + key + "' must be true or false");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("");
        }
        return d;
    } catch (const std::exception&) {
        throw usage_error("value for '" + key + "' is not a number: " + v);
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const unsigned long long d = std::stoull(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("");
        }
        return d;
    } catch (const std::exception&) {
        throw usage_error("value for '" + key + "' is not a non-negative integer: " + v);
    }
}

/// Applies one flat config key. Returns false for unknown keys so callers
/// can report them all at once.
bool apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "steps") {
        cfg.steps = parse_u64(value, key);
    } else if (key == "gaussian_count") {
        cfg.gaussian_count = parse_u64(value, key);
    } else if (key == "seed") {
        cfg.seed = parse_u64(value, key);
    } else if (key == "workers") {
        cfg.workers = static_cast<int>(parse_u64(value, key));
    } else if (key == "fusion_weight") {
        cfg.fusion_weight = parse_double(value, key);
    } else if (key == "medium_enabled") {
        cfg.medium_enabled = parse_bool(value, key);
    } else if (key == "sh_warmup_interval") {
        cfg.sh_warmup_interval = parse_u64(value, key);
    } else if (key == "checkpoint_interval") {
        cfg.checkpoint_interval = parse_u64(value, key);
    } else if (key == "eval_interval") {
        cfg.eval_interval = parse_u64(value, key);
    } else if (key == "log_interval") {
        cfg.log_interval = parse_u64(value, key);
    } else if (key == "loss.lambda") {
        cfg.loss.lambda = parse_double(value, key);
    } else if (key == "loss.ssim_window") {
        cfg.loss.ssim_window = static_cast<int>(parse_u64(value, key));
    } else if (key == "loss.ssim_sigma") {
        cfg.loss.ssim_sigma = parse_double(value, key);
    } else if (key == "loss.ssim_c1") {
        cfg.loss.ssim_c1 = parse_double(value, key);
    } else if (key == "loss.ssim_c2") {
        cfg.loss.ssim_c2 = parse_double(value, key);
    } else if (key == "optim.beta1") {
        cfg.optim.beta1 = parse_double(value, key);
    } else if (key == "optim.beta2") {
        cfg.optim.beta2 = parse_double(value, key);
    } else if (key == "optim.eps") {
        cfg.optim.eps = parse_double(value, key);
    } else if (key == "optim.grad_clip") {
        cfg.optim.grad_clip = parse_double(value, key);
    } else if (key == "optim.position_lr_decay") {
        cfg.optim.position_lr_decay = parse_double(value, key);
    } else if (key == "optim.lr.positions") {
        cfg.optim.rates.positions = parse_double(value, key);
    } else if (key == "optim.lr.rotations") {
        cfg.optim.rates.rotations = parse_double(value, key);
    } else if (key == "optim.lr.scales") {
        cfg.optim.rates.scales = parse_double(value, key);
    } else if (key == "optim.lr.opacities") {
        cfg.optim.rates.opacities = parse_double(value, key);
    } else if (key == "optim.lr.sh") {
        cfg.optim.rates.sh = parse_double(value, key);
    } else if (key == "optim.lr.mlp") {
        cfg.optim.rates.mlp = parse_double(value, key);
    } else if (key == "raster.near_plane") {
        cfg.raster.near_plane = parse_double(value, key);
    } else if (key == "raster.alpha_clamp") {
        cfg.raster.alpha_clamp = parse_double(value, key);
    } else if (key == "raster.termination_threshold") {
        cfg.raster.termination_threshold = parse_double(value, key);
    } else if (key == "raster.early_termination") {
        cfg.raster.early_termination = parse_bool(value, key);
    } else if (key == "raster.cov_floor") {
        cfg.raster.cov_floor = parse_double(value, key);
    } else if (key == "raster.alpha_min") {
        cfg.raster.alpha_min = parse_double(value, key);
    } else if (key == "raster.tile_size") {
        cfg.raster.tile_size = static_cast<int>(parse_u64(value, key));
    } else if (key == "init.scale_fraction") {
        cfg.init.scale_fraction = parse_double(value, key);
    } else if (key == "init.opacity") {
        cfg.init.init_opacity = parse_double(value, key);
    } else if (key == "init.gray") {
        cfg.init.init_gray = parse_double(value, key);
    } else {
        return false;
    }
    return true;
}

void apply_preset(TrainConfig& cfg, const std::string& preset) {
    if (preset == "toy") {
        cfg.steps = 200;
        cfg.gaussian_count = 3;
        cfg.log_interval = 10;
        cfg.checkpoint_interval = 0;
        cfg.eval_interval = 0;
    } else if (preset == "small") {
        cfg.steps = 5000;
        cfg.gaussian_count = 500;
        cfg.log_interval = 100;
        cfg.checkpoint_interval = 0;
        cfg.eval_interval = 1000;
    } else if (preset == "paper") {
        cfg.steps = 150000;
        cfg.gaussian_count = 100000;
        cfg.log_interval = 1000;
        cfg.checkpoint_interval = 10000;
        cfg.eval_interval = 10000;
    } else {
        throw usage_error("unknown preset '" + preset + "' (expected toy, small or paper)");
    }
}

void apply_kv_batch(TrainConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kvs,
                    const std::string& origin) {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : kvs) {
        if (!apply_config_kv(cfg, k, v)) {
            unknown.push_back(k);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config key(s) in " + origin + ":";
        for (const std::string& k : unknown) {
            msg += " " + k;
        }
        throw usage_error(msg);
    }
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("config file not found: " + path);
    }
    std::vector<std::pair<std::string, std::string>> kvs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const auto strip = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = strip(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw usage_error(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        kvs.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return kvs;
}

std::vector<std::pair<std::string, std::string>>
split_overrides(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> kvs;
    for (const std::string& s : sets) {
        const size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw usage_error("--set expects key=value, got '" + s + "'");
        }
        kvs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return kvs;
}

struct TrainArgs {
    std::string dataset;
    std::string out;
    std::string preset;
    std::string config;
    std::string resume;
    std::vector<std::string> sets;
    int downscale = 1;
    int workers = -1;
    int64_t seed = -1;
    bool no_medium = false;
    bool dry_run = false;
};

TrainConfig build_train_config(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.preset.empty()) {
        apply_preset(cfg, a.preset);
    }
    if (!a.config.empty()) {
        apply_kv_batch(cfg, read_config_file(a.config), a.config);
    }
    apply_kv_batch(cfg, split_overrides(a.sets), "--set");
    if (a.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(a.seed);
    }
    if (a.workers >= 0) {
        cfg.workers = a.workers;
    }
    if (a.no_medium) {
        cfg.medium_enabled = false;
    }
    // Small runs: keep intervals inside the run so validate() holds.
    cfg.log_interval = std::min(cfg.log_interval, cfg.steps);
    if (cfg.checkpoint_interval > cfg.steps) {
        cfg.checkpoint_interval = 0;
    }
    if (cfg.eval_interval > cfg.steps) {
        cfg.eval_interval = 0;
    }
    return cfg;
}

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg = build_train_config(a);
    cfg.validate();
    if (a.dry_run) {
        if (!a.out.empty()) {
            fs::create_directories(a.out);
            std::ofstream os(fs::path(a.out) / "config.toml");
            if (!os) {
                throw io_error("cannot write config snapshot under " + a.out);
            }
            os << config_snapshot(cfg);
        }
        std::cout << config_snapshot(cfg);
        return 0;
    }
    const Dataset ds = load_dataset(a.dataset, a.downscale);
    const TrainResult r = train(ds, cfg, a.out, a.resume);
    std::printf("trained %llu steps, checkpoint %s\n",
                static_cast<unsigned long long>(r.final_step), r.final_checkpoint.c_str());
    if (r.has_holdout) {
        std::printf("holdout psnr %.4f dB, ssim %.6f\n", r.holdout_psnr, r.holdout_ssim);
    } else {
        std::printf("no holdout views\n");
    }
    return 0;
}

struct RenderArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::vector<std::string> frames;
    int downscale = 1;
    int workers = -1;
    bool no_medium = false;
    bool dump_medium = false;
};

int cmd_render(const RenderArgs& a) {
    if (!fs::exists(a.checkpoint)) {
        throw io_error("checkpoint not found: " + a.checkpoint);
    }
    const GaussianScene scene = load_checkpoint(a.checkpoint);
    const Dataset ds = load_dataset(a.dataset, a.downscale);
    fs::create_directories(a.out);

    std::set<std::string> wanted(a.frames.begin(), a.frames.end());
    TrainConfig cfg;
    cfg.medium_enabled = !a.no_medium;
    if (a.workers >= 0) {
        cfg.workers = a.workers;
    }
    MediumFeatureCache cache;
    size_t rendered = 0;
    for (const DatasetFrame& frame : ds.frames) {
        if (!wanted.empty() && wanted.find(frame.id) == wanted.end()) {
            continue;
        }
        Image img = render_full(scene, frame.camera, cfg, &cache);
        write_image(img, (fs::path(a.out) / (frame.id + ".png")).string());
        if (a.dump_medium) {
            const auto feats = cache.get(frame.camera);
            const MediumOutputs m = medium_forward(scene.medium, feats, frame.camera.width,
                                                   frame.camera.height,
                                                   resolve_workers(cfg.workers));
            auto dump = [&](const std::vector<double>& field, const char* tag) {
                Image f(frame.camera.width, frame.camera.height);
                f.data = field;
                write_image(f, (fs::path(a.out) / (frame.id + "_medium_" + tag + ".png")).string());
            };
            dump(m.rgb, "rgb");
            dump(m.bs, "bs");
            dump(m.attn, "attn");
        }
        ++rendered;
    }
    if (!wanted.empty() && rendered != wanted.size()) {
        throw data_error("some requested frame ids are not in the manifest");
    }
    std::printf("rendered %zu view(s) to %s\n", rendered, a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string pred;
    std::string target;
    std::string csv;
    int workers = -1;
};

int cmd_eval(const EvalArgs& a) {
    auto list_pngs = [](const std::string& dir) {
        if (!fs::is_directory(dir)) {
            throw io_error("not a directory: " + dir);
        }
        std::map<std::string, std::string> ids;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") {
                ids[e.path().stem().string()] = e.path().string();
            }
        }
        return ids;
    };
    const auto pred = list_pngs(a.pred);
    const auto target = list_pngs(a.target);
    std::string missing;
    for (const auto& [id, path] : pred) {
        if (target.find(id) == target.end()) {
            missing += " " + id;
        }
    }
    for (const auto& [id, path] : target) {
        if (pred.find(id) == pred.end()) {
            missing += " " + id;
        }
    }
    if (!missing.empty()) {
        throw data_error("frame ids without a counterpart:" + missing);
    }
    if (pred.empty()) {
        throw data_error("no PNG frames to compare");
    }

    const LossConfig loss_cfg;
    std::string csv = "frame_id,psnr_db,ssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& [id, path] : pred) {
        const Image p = read_image(path);
        const Image t = read_image(target.at(id));
        if (!p.same_shape(t)) {
            throw shape_mismatch_error("frame " + id + " differs in resolution");
        }
        const double pv = psnr(p, t);
        const double sv = ssim_value(p, t, loss_cfg);
        psnr_sum += pv;
        ssim_sum += sv;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g\n", id.c_str(), pv, sv);
        csv += buf;
        std::printf("%-24s psnr %8.4f dB  ssim %.6f\n", id.c_str(), pv, sv);
    }
    const double n = static_cast<double>(pred.size());
    std::printf("%-24s psnr %8.4f dB  ssim %.6f\n", "mean", psnr_sum / n, ssim_sum / n);
    if (!a.csv.empty()) {
        std::ofstream os(a.csv);
        if (!os) {
            throw io_error("cannot write CSV: " + a.csv);
        }
        os << csv;
    }
    return 0;
}

struct SynthArgs {
    std::string out;
    uint64_t seed = 1;
    SyntheticSceneSpec spec;
    double extent = 1.0;
};

int cmd_synth(const SynthArgs& a) {
    SyntheticSceneSpec spec = a.spec;
    spec.bounds.min = Vec3{-a.extent, -a.extent, -a.extent};
    spec.bounds.max = Vec3{a.extent, a.extent, a.extent};
    const SyntheticResult r = generate_synthetic(spec, a.seed, a.out);
    std::printf("synthesized %zu gaussians, %d views (%d holdout) under %s\n", r.scene.count(),
                spec.camera_count, spec.holdout_count, a.out.c_str());
    return 0;
}

int cmd_inspect(const std::string& path) {
    const GaussianScene scene = load_checkpoint(path);
    std::printf("gaussians: %zu\n", scene.count());
    std::printf("sh_slots: %d\n", GaussianScene::kShSlots);
    std::printf("active_sh_degree: %d\n", scene.active_sh_degree);
    auto stats = [](const char* name, const std::vector<float>& v) {
        double lo = v.empty() ? 0.0 : v[0], hi = lo, sum = 0.0;
        for (float x : v) {
            lo = std::min(lo, static_cast<double>(x));
            hi = std::max(hi, static_cast<double>(x));
            sum += x;
        }
        std::printf("%-14s min %12.6g  mean %12.6g  max %12.6g\n", name, lo,
                    v.empty() ? 0.0 : sum / static_cast<double>(v.size()), hi);
    };
    stats("positions", scene.positions);
    stats("rotations", scene.rotations);
    stats("log_scales", scene.log_scales);
    stats("opacity_logits", scene.opacity_logits);
    stats("sh_coeffs", scene.sh_coeffs);
    auto norm = [](const char* name, const std::vector<float>& v) {
        double s = 0.0;
        for (float x : v) {
            s += static_cast<double>(x) * x;
        }
        std::printf("medium.%-7s l2 %.6g\n", name, std::sqrt(s));
    };
    norm("w1", scene.medium.w1);
    norm("b1", scene.medium.b1);
    norm("w2", scene.medium.w2);
    norm("b2", scene.medium.b2);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gaussian-splat scene fitting with a learned medium branch"};
    app.require_subcommand(1);

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "optimize a scene against a dataset");
    train_cmd->add_option("--dataset", ta.dataset, "dataset root containing manifest.json");
    train_cmd->add_option("--out", ta.out, "output directory");
    train_cmd->add_option("--preset", ta.preset, "toy, small or paper");
    train_cmd->add_option("--config", ta.config, "flat key = value config file");
    train_cmd->add_option("--set", ta.sets, "inline override key=value (repeatable)");
    train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
    train_cmd->add_option("--downscale", ta.downscale, "integer image downscale factor");
    train_cmd->add_option("--workers", ta.workers, "worker threads (default SMOKEGS_WORKERS)");
    train_cmd->add_option("--seed", ta.seed, "RNG seed");
    train_cmd->add_flag("--no-medium", ta.no_medium, "disable the medium branch");
    train_cmd->add_flag("--dry-run", ta.dry_run, "print the effective config and exit");

    RenderArgs ra;
    CLI::App* render_cmd = app.add_subcommand("render", "render poses from a checkpoint");
    render_cmd->add_option("--checkpoint", ra.checkpoint, "scene checkpoint")->required();
    render_cmd->add_option("--dataset", ra.dataset, "dataset root with poses")->required();
    render_cmd->add_option("--out", ra.out, "output directory")->required();
    render_cmd->add_option("--frame", ra.frames, "frame id to render (repeatable; default all)");
    render_cmd->add_option("--downscale", ra.downscale, "integer image downscale factor");
    render_cmd->add_option("--workers", ra.workers, "worker threads");
    render_cmd->add_flag("--no-medium", ra.no_medium, "render the splats alone");
    render_cmd->add_flag("--dump-medium", ra.dump_medium, "also write medium rgb/bs/attn maps");

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between two image directories");
    eval_cmd->add_option("--pred", ea.pred, "predicted images")->required();
    eval_cmd->add_option("--target", ea.target, "reference images")->required();
    eval_cmd->add_option("--csv", ea.csv, "write per-frame rows to this CSV");
    eval_cmd->add_option("--workers", ea.workers, "worker threads");

    SynthArgs sa;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic smoke dataset");
    synth_cmd->add_option("--out", sa.out, "output directory")->required();
    synth_cmd->add_option("--seed", sa.seed, "RNG seed");
    synth_cmd->add_option("--count", sa.spec.gaussian_count, "gaussian count");
    synth_cmd->add_option("--cameras", sa.spec.camera_count, "camera ring size");
    synth_cmd->add_option("--holdout", sa.spec.holdout_count, "held-out view count");
    synth_cmd->add_option("--width", sa.spec.width, "image width");
    synth_cmd->add_option("--height", sa.spec.height, "image height");
    synth_cmd->add_option("--fov", sa.spec.fov_deg, "horizontal field of view, degrees");
    synth_cmd->add_option("--radius", sa.spec.ring_radius, "camera ring radius");
    synth_cmd->add_option("--ring-height", sa.spec.ring_height, "camera height above center");
    synth_cmd->add_option("--extent", sa.extent, "half-extent of the scene cube");
    synth_cmd->add_option("--haze", sa.spec.haze_beta, "global haze blend in [0,1]");
    synth_cmd->add_option("--tint", sa.spec.tint_amplitude, "directional tint amplitude");
    synth_cmd->add_option("--tint-degree", sa.spec.tint_degree, "SH degree of the tint field");

    std::string inspect_path;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
    inspect_cmd->add_option("checkpoint", inspect_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            if (!ta.dry_run && (ta.dataset.empty() || ta.out.empty())) {
                throw usage_error("train requires --dataset and --out");
            }
            return cmd_train(ta);
        }
        if (render_cmd->parsed()) {
            return cmd_render(ra);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(ea);
        }
        if (synth_cmd->parsed()) {
            return cmd_synth(sa);
        }
        if (inspect_cmd->parsed()) {
            return cmd_inspect(inspect_path);
        }
        throw usage_error("no subcommand given");
    } catch (const usage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const invalid_argument_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const numeric_fault& e) {
        std::fprintf(stderr, "numeric fault: %s\n", e.what());
        return 3;
    } catch (const data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
