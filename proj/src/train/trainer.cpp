// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/train/trainer.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/parallel.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/medium/medium.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace smokegs {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (steps < 1) {
        throw invalid_argument_error("training needs at least one step");
    }
    if (gaussian_count < 1) {
        throw invalid_argument_error("training needs at least one gaussian");
    }
    for (uint64_t interval : {checkpoint_interval, eval_interval, log_interval}) {
        if (interval > steps) {
            throw invalid_argument_error("intervals must not exceed the step count");
        }
    }
    if (sh_warmup_interval < 1) {
        throw invalid_argument_error("sh warm-up interval must be >= 1");
    }
    if (fusion_weight < 0.0) {
        throw invalid_argument_error("fusion weight must be >= 0");
    }
    if (workers < 0) {
        throw invalid_argument_error("worker count must be >= 0");
    }
    loss.validate();
    optim.validate();
}

const std::vector<double>& MediumFeatureCache::get(const Camera& cam) {
    auto it = cache_.find(cam.id);
    if (it != cache_.end()) {
        return it->second;
    }
    auto [pos, inserted] = cache_.emplace(cam.id, encode_directions(ray_direction_field(cam)));
    (void)inserted;
    return pos->second;
}

Image render_full(const GaussianScene& scene, const Camera& cam, const TrainConfig& cfg,
                  MediumFeatureCache* cache) {
    const int workers = resolve_workers(cfg.workers);
    RenderOutputs out = rasterize(scene, cam, cfg.raster, workers);
    if (!cfg.medium_enabled) {
        return std::move(out.image);
    }
    MediumFeatureCache local;
    const std::vector<double>& feats = (cache ? *cache : local).get(cam);
    MediumOutputs mout = medium_forward(scene.medium, feats, cam.width, cam.height, workers);
    return fuse(out.image, mout, cfg.fusion_weight);
}

std::vector<Image> render_views(const GaussianScene& scene, const std::vector<Camera>& cams,
                                const TrainConfig& cfg) {
    MediumFeatureCache cache;
    std::vector<Image> views;
    views.reserve(cams.size());
    for (const Camera& cam : cams) {
        Image img = render_full(scene, cam, cfg, &cache);
        for (double& v : img.data) {
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
        views.push_back(std::move(img));
    }
    return views;
}

StepMetrics train_step(GaussianScene& scene, OptimState& state, const Camera& cam,
                       const Image& target, const TrainConfig& cfg, MediumFeatureCache* cache) {
    const int workers = resolve_workers(cfg.workers);
    RenderOutputs out = rasterize(scene, cam, cfg.raster, workers);

    MediumOutputs mout;
    Image fused;
    MediumFeatureCache local;
    if (cfg.medium_enabled) {
        const std::vector<double>& feats = (cache ? *cache : local).get(cam);
        mout = medium_forward(scene.medium, feats, cam.width, cam.height, workers);
        fused = fuse(out.image, mout, cfg.fusion_weight);
    } else {
        fused = out.image;
    }

    const LossResult l1 = l1_loss(fused, target);
    const LossResult ss = ssim(fused, target, cfg.loss);
    StepMetrics metrics;
    metrics.l1 = l1.value;
    metrics.ssim = ss.value;
    metrics.loss = (1.0 - cfg.loss.lambda) * l1.value + cfg.loss.lambda * (1.0 - ss.value);
    metrics.psnr = psnr(fused, target);

    Image grad(fused.width, fused.height);
    for (size_t i = 0; i < grad.data.size(); ++i) {
        grad.data[i] =
            (1.0 - cfg.loss.lambda) * l1.grad.data[i] - cfg.loss.lambda * ss.grad.data[i];
    }
    // A non-finite target or render poisons the loss; fault before any state
    // is touched so the caller can retry or abort.
    bool finite = std::isfinite(metrics.loss);
    for (size_t i = 0; finite && i < grad.data.size(); ++i) {
        finite = std::isfinite(grad.data[i]);
    }
    if (!finite) {
        throw numeric_fault("loss or its gradient is non-finite");
    }

    // Fusion is additive, so dL/dI_gs is the fused-image gradient unchanged.
    GradientSet grads = rasterize_backward(out, grad, workers);
    if (cfg.medium_enabled) {
        MediumGradients mg =
            medium_backward(scene.medium, mout, grad, cfg.fusion_weight, nullptr, workers);
        grads.w1 = std::move(mg.w1);
        grads.b1 = std::move(mg.b1);
        grads.w2 = std::move(mg.w2);
        grads.b2 = std::move(mg.b2);
    }
    adam_step(state, scene, grads, cfg.optim);
    return metrics;
}

void split_views(const Dataset& dataset, std::vector<size_t>& train_out,
                 std::vector<size_t>& holdout_out) {
    train_out.clear();
    holdout_out.clear();
    bool explicit_split = false;
    for (const DatasetFrame& f : dataset.frames) {
        if (!f.split.empty()) {
            explicit_split = true;
            break;
        }
    }
    size_t with_image = 0;
    for (size_t i = 0; i < dataset.frames.size(); ++i) {
        if (!dataset.frames[i].has_image()) {
            continue;
        }
        const size_t ord = with_image++;
        const bool holdout = explicit_split ? dataset.frames[i].split == "holdout"
                                            : ord % 8 == 7;
        (holdout ? holdout_out : train_out).push_back(i);
    }
}

std::string config_snapshot(const TrainConfig& cfg) {
    std::map<std::string, std::string> kv;
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    kv["steps"] = std::to_string(cfg.steps);
    kv["gaussian_count"] = std::to_string(cfg.gaussian_count);
    kv["seed"] = std::to_string(cfg.seed);
    kv["workers"] = std::to_string(cfg.workers);
    kv["fusion_weight"] = num(cfg.fusion_weight);
    kv["medium_enabled"] = cfg.medium_enabled ? "true" : "false";
    kv["sh_warmup_interval"] = std::to_string(cfg.sh_warmup_interval);
    kv["checkpoint_interval"] = std::to_string(cfg.checkpoint_interval);
    kv["eval_interval"] = std::to_string(cfg.eval_interval);
    kv["log_interval"] = std::to_string(cfg.log_interval);
    kv["loss.lambda"] = num(cfg.loss.lambda);
    kv["loss.ssim_window"] = std::to_string(cfg.loss.ssim_window);
    kv["loss.ssim_sigma"] = num(cfg.loss.ssim_sigma);
    kv["loss.ssim_c1"] = num(cfg.loss.ssim_c1);
    kv["loss.ssim_c2"] = num(cfg.loss.ssim_c2);
    kv["optim.beta1"] = num(cfg.optim.beta1);
    kv["optim.beta2"] = num(cfg.optim.beta2);
    kv["optim.eps"] = num(cfg.optim.eps);
    kv["optim.grad_clip"] = num(cfg.optim.grad_clip);
    kv["optim.position_lr_decay"] = num(cfg.optim.position_lr_decay);
    kv["optim.lr.positions"] = num(cfg.optim.rates.positions);
    kv["optim.lr.rotations"] = num(cfg.optim.rates.rotations);
    kv["optim.lr.scales"] = num(cfg.optim.rates.scales);
    kv["optim.lr.opacities"] = num(cfg.optim.rates.opacities);
    kv["optim.lr.sh"] = num(cfg.optim.rates.sh);
    kv["optim.lr.mlp"] = num(cfg.optim.rates.mlp);
    kv["raster.near_plane"] = num(cfg.raster.near_plane);
    kv["raster.alpha_clamp"] = num(cfg.raster.alpha_clamp);
    kv["raster.termination_threshold"] = num(cfg.raster.termination_threshold);
    kv["raster.early_termination"] = cfg.raster.early_termination ? "true" : "false";
    kv["raster.cov_floor"] = num(cfg.raster.cov_floor);
    kv["raster.alpha_min"] = num(cfg.raster.alpha_min);
    kv["raster.tile_size"] = std::to_string(cfg.raster.tile_size);
    kv["init.scale_fraction"] = num(cfg.init.scale_fraction);
    kv["init.opacity"] = num(cfg.init.init_opacity);
    kv["init.gray"] = num(cfg.init.init_gray);

    std::string out;
    for (const auto& [k, v] : kv) {
        out += k + " = " + v + "\n";
    }
    return out;
}

namespace {

std::string adam_path_for(const std::string& checkpoint) {
    const std::string suffix = ".smgs";
    if (checkpoint.size() > suffix.size() &&
        checkpoint.compare(checkpoint.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return checkpoint.substr(0, checkpoint.size() - suffix.size()) + ".adam";
    }
    return checkpoint + ".adam";
}

Bounds bounds_from_cameras(const Dataset& dataset) {
    // No declared bounds: cameras orbit the subject, so seed gaussians in a
    // box around the camera centroid at half the camera spread.
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const DatasetFrame& f : dataset.frames) {
        const Vec3 t = f.camera.pose.translation();
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], t[a]);
            hi[a] = std::max(hi[a], t[a]);
        }
    }
    const Vec3 center = (lo + hi) * 0.5;
    double half = 0.0;
    for (int a = 0; a < 3; ++a) {
        half = std::max(half, 0.25 * (hi[a] - lo[a]));
    }
    if (!(half > 0.0)) {
        half = 1.0;
    }
    Bounds b;
    b.min = center - Vec3{half, half, half};
    b.max = center + Vec3{half, half, half};
    return b;
}

void append_metrics_row(std::ofstream& os, uint64_t step, const StepMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%.12g,%.12g,%.12g,%.12g\n", step, m.loss, m.l1,
                  m.ssim, m.psnr);
    os << buf;
    os.flush();
}

} // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_checkpoint) {
    cfg.validate();
#if defined(__GLIBC__)
    // The step loop churns multi-megabyte activation buffers; with default
    // thresholds glibc returns them to the kernel on every free (mmap/munmap
    // or heap trim) and each step pays the page faults again. Numerically
    // inert, roughly halves wall time per step.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    std::vector<size_t> train_idx, holdout_idx;
    split_views(dataset, train_idx, holdout_idx);
    if (train_idx.empty()) {
        throw data_error("dataset has no training views with images");
    }

    GaussianScene scene;
    OptimState state;
    if (resume_checkpoint.empty()) {
        const Bounds bounds = dataset.bounds ? *dataset.bounds : bounds_from_cameras(dataset);
        scene = init_scene(cfg.gaussian_count, bounds, cfg.seed, cfg.init);
        state = OptimState::zeros_like(scene);
    } else {
        scene = load_checkpoint(resume_checkpoint);
        state = load_adam_state(adam_path_for(resume_checkpoint));
        if (!state.matches(scene)) {
            throw data_error("optimizer state does not match the checkpoint scene");
        }
        if (state.step >= cfg.steps) {
            throw invalid_argument_error("checkpoint is already at or past the requested steps");
        }
    }

    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root / "checkpoints", ec);
    fs::create_directories(root / "renders", ec);
    if (!fs::is_directory(root / "checkpoints")) {
        throw io_error("cannot create output directory: " + out_dir);
    }
    {
        std::ofstream os(root / "config.toml");
        if (!os) {
            throw io_error("cannot write config snapshot under " + out_dir);
        }
        os << config_snapshot(cfg);
    }
    const bool fresh = resume_checkpoint.empty() || !fs::exists(root / "metrics.csv");
    std::ofstream metrics_csv(root / "metrics.csv", fresh ? std::ios::out : std::ios::app);
    if (fresh) {
        metrics_csv << "step,L,L1,SSIM,PSNR\n";
    }
    std::ofstream eval_csv;
    if (!holdout_idx.empty()) {
        const bool eval_fresh = resume_checkpoint.empty() || !fs::exists(root / "eval.csv");
        eval_csv.open(root / "eval.csv", eval_fresh ? std::ios::out : std::ios::app);
        if (eval_fresh) {
            eval_csv << "step,frame_id,psnr,ssim\n";
        }
    }

    MediumFeatureCache cache;
    TrainResult result;

    auto save_pair = [&](uint64_t step) {
        const std::string path =
            (root / "checkpoints" / ("step_" + std::to_string(step) + ".smgs")).string();
        save_checkpoint(scene, path);
        save_adam_state(state, adam_path_for(path));
        return path;
    };
    auto eval_holdout = [&](uint64_t step) {
        double psnr_sum = 0.0, ssim_sum = 0.0;
        for (size_t idx : holdout_idx) {
            Image img = render_full(scene, dataset.frames[idx].camera, cfg, &cache);
            for (double& v : img.data) {
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            }
            const double p = psnr(img, dataset.images[idx]);
            const double s = ssim_value(img, dataset.images[idx], cfg.loss);
            psnr_sum += p;
            ssim_sum += s;
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%" PRIu64 ",%s,%.12g,%.12g\n", step,
                          dataset.frames[idx].id.c_str(), p, s);
            eval_csv << buf;
        }
        eval_csv.flush();
        const double n = static_cast<double>(holdout_idx.size());
        return std::pair<double, double>{psnr_sum / n, ssim_sum / n};
    };

    std::vector<size_t> order;
    uint64_t order_epoch = UINT64_MAX;
    int consecutive_faults = 0;

    while (state.step < cfg.steps) {
        const uint64_t done = state.step;
        const uint64_t epoch = done / train_idx.size();
        const size_t pos = static_cast<size_t>(done % train_idx.size());
        if (epoch != order_epoch) {
            order = train_idx;
            Rng epoch_rng(Rng::mix(cfg.seed, epoch));
            epoch_rng.shuffle(order);
            order_epoch = epoch;
        }
        const size_t frame = order[pos];
        scene.raise_sh_degree(sh_warmup(done, cfg.sh_warmup_interval));
        try {
            const StepMetrics m = train_step(scene, state, dataset.frames[frame].camera,
                                             dataset.images[frame], cfg, &cache);
            consecutive_faults = 0;
            const uint64_t t = state.step;
            if ((cfg.log_interval != 0 && t % cfg.log_interval == 0) || t == cfg.steps) {
                append_metrics_row(metrics_csv, t, m);
                result.history.emplace_back(t, m);
            }
            if (cfg.checkpoint_interval != 0 && t % cfg.checkpoint_interval == 0 &&
                t != cfg.steps) {
                save_pair(t);
            }
            if (!holdout_idx.empty() && cfg.eval_interval != 0 && t % cfg.eval_interval == 0 &&
                t != cfg.steps) {
                eval_holdout(t);
            }
        } catch (const numeric_fault&) {
            // Parameters and moments are untouched; a deterministic retry can
            // only flip the outcome if the view changes, so three strikes end
            // the run.
            if (++consecutive_faults >= 3) {
                throw;
            }
        }
    }

    result.final_step = state.step;
    result.final_checkpoint = save_pair(state.step);
    if (!holdout_idx.empty()) {
        const auto [p, s] = eval_holdout(state.step);
        result.has_holdout = true;
        result.holdout_psnr = p;
        result.holdout_ssim = s;
        for (size_t idx : holdout_idx) {
            Image img = render_full(scene, dataset.frames[idx].camera, cfg, &cache);
            write_image(img, (root / "renders" / (dataset.frames[idx].id + ".png")).string());
        }
    }
    return result;
}

} // namespace smokegs
