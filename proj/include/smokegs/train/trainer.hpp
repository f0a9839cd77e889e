// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/data/data.hpp"
#include "smokegs/optim/loss.hpp"
#include "smokegs/optim/optim.hpp"
#include "smokegs/rasterizer/rasterizer.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace smokegs {

struct TrainConfig {
    uint64_t steps = 5000;
    size_t gaussian_count = 2000;
    LossConfig loss;
    OptimConfig optim;
    RasterizeConfig raster;
    SceneInitConfig init;
    uint64_t sh_warmup_interval = 10000;
    double fusion_weight = 0.2;
    bool medium_enabled = true;
    uint64_t seed = 1;
    uint64_t checkpoint_interval = 0; // 0 = final checkpoint only
    uint64_t eval_interval = 0;       // 0 = final evaluation only
    uint64_t log_interval = 100;
    int workers = 0; // 0 = SMOKEGS_WORKERS or 1

    void validate() const;
};

struct StepMetrics {
    double loss = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

/// Direction features depend only on the camera; cached across steps.
class MediumFeatureCache {
  public:
    const std::vector<double>& get(const Camera& cam);

  private:
    std::map<std::string, std::vector<double>> cache_;
};

/// Full pipeline for one view: rasterize, then (optionally) add the medium
/// term. Unclamped.
Image render_full(const GaussianScene& scene, const Camera& cam, const TrainConfig& cfg,
                  MediumFeatureCache* cache = nullptr);

/// Export-clamped renders for a list of cameras. `medium` off renders the
/// splats alone.
std::vector<Image> render_views(const GaussianScene& scene, const std::vector<Camera>& cams,
                                const TrainConfig& cfg);

/// One optimization step on one view. Throws numeric_fault with scene and
/// optimizer state untouched when any gradient is non-finite.
StepMetrics train_step(GaussianScene& scene, OptimState& state, const Camera& cam,
                       const Image& target, const TrainConfig& cfg,
                       MediumFeatureCache* cache = nullptr);

struct TrainResult {
    std::vector<std::pair<uint64_t, StepMetrics>> history; // logged rows
    uint64_t final_step = 0;
    std::string final_checkpoint;
    bool has_holdout = false;
    double holdout_psnr = 0.0; // means over holdout views at the final step
    double holdout_ssim = 0.0;
};

/// Runs the loop over `dataset`, writing config.toml, metrics.csv, eval.csv,
/// checkpoints/ and renders/ under out_dir. `resume_checkpoint`, when
/// non-empty, restores scene + optimizer state and continues to cfg.steps.
/// View order per epoch is a pure function of (seed, epoch), so resumed runs
/// replay the original trajectory bitwise.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_checkpoint = "");

/// Train/holdout split: explicit per-frame splits win; otherwise every 8th
/// view (indices 7, 15, ...) is held out. Frames without images are ignored.
void split_views(const Dataset& dataset, std::vector<size_t>& train_out,
                 std::vector<size_t>& holdout_out);

/// Flat key = value snapshot of a config, one key per line, sorted.
std::string config_snapshot(const TrainConfig& cfg);

} // namespace smokegs
