// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/camera/camera.hpp"
#include "smokegs/core/types.hpp"
#include "smokegs/scene/scene.hpp"

#include <cstdint>
#include <vector>

namespace smokegs {

struct RasterizeConfig {
    double near_plane = 0.01;   // scene units; gaussians at depth <= this are culled
    double alpha_clamp = 0.99;  // per-splat alpha ceiling
    double termination_threshold = 1e-4; // stop compositing once T drops below
    bool early_termination = true;
    double cov_floor = 0.3;     // pixels^2 added to the screen-covariance diagonal
    double alpha_min = 1.0 / 255.0; // splats below this alpha are skipped entirely
    int tile_size = 16;
};

/// One gaussian after projection to a camera. Covariance and conic are the
/// symmetric 2x2 matrices [[a, b], [b, c]]; `radius` bounds the pixel
/// distance beyond which alpha falls under alpha_min, so the tile footprint
/// covers exactly the splat's composited support.
struct ProjectedGaussian {
    double mean_x = 0.0, mean_y = 0.0;
    double cov_a = 0.0, cov_b = 0.0, cov_c = 0.0;
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double depth = 0.0;
    double radius = 0.0;
    Vec3 color;
    double opacity = 0.0;
    uint32_t index = 0; // source gaussian
};

struct RenderStats {
    size_t input_count = 0;
    size_t culled = 0; // near-plane plus vanishing-alpha drops
    double mean_contributors_per_pixel = 0.0;
};

/// Forward render plus everything the backward pass needs. The scene pointer
/// and revision pin the forward state; rasterize_backward refuses to run if
/// the scene mutated in between.
struct RenderOutputs {
    Image image;                           // I_gs, unclamped linear RGB
    std::vector<double> transmittance;     // per pixel, final T in [0, 1]
    std::vector<uint32_t> contributor_count; // per pixel, composited splats
    RenderStats stats;

    ActivatedParams params;
    std::vector<ProjectedGaussian> projected; // sorted by (depth, index)
    std::vector<std::vector<uint32_t>> tile_lists; // per tile, indices into projected
    std::vector<uint32_t> advance; // per pixel, exclusive end position in its tile list
    int tiles_x = 0, tiles_y = 0;
    RasterizeConfig config;
    Camera camera;
    const GaussianScene* scene = nullptr;
    uint64_t scene_revision = 0;
};

/// EWA projection: Sigma_3 = R diag(exp s)^2 R^T mapped through the local
/// affine approximation of the perspective projection, plus the diagonal
/// floor. Culls gaussians at depth <= near_plane and splats whose peak alpha
/// cannot reach alpha_min. Output preserves input order.
std::vector<ProjectedGaussian> project_gaussians(const ActivatedParams& params, const Camera& cam,
                                                 const RasterizeConfig& config = {},
                                                 RenderStats* stats = nullptr);

/// Tiled front-to-back compositing over a black background:
///   C = sum_i c_i a_i T_i,  T_i = prod_{k<i} (1 - a_k),
///   a_i = min(alpha_clamp, opacity_i * exp(-0.5 delta^T Sigma_2^-1 delta)).
/// Deterministic: depth sort ties break by gaussian index; pixels are
/// independent, so the image is identical for any worker count.
RenderOutputs rasterize(const GaussianScene& scene, const Camera& cam,
                        const RasterizeConfig& config = {}, int workers = 1);

/// Reverse-traversal gradients of sum(dL_dimage * image) with respect to all
/// gaussian parameters (medium fields stay zero). Tiles are processed in
/// parallel with per-worker accumulators merged in worker order, so results
/// are bitwise reproducible at a fixed worker count.
GradientSet rasterize_backward(const RenderOutputs& outputs, const Image& dL_dimage,
                               int workers = 1);

/// Brute-force oracle: per-pixel loop over every depth-sorted gaussian with
/// no tiles, no radius culling and no early termination, written against the
/// same compositing definition through independent arithmetic. Intentionally
/// slow; small scenes only.
Image rasterize_reference(const GaussianScene& scene, const Camera& cam,
                          const RasterizeConfig& config = {});

} // namespace smokegs
