// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/rng.hpp"
#include "smokegs/core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace smokegs {

/// Two-layer MLP of the medium branch: 25 -> 128 -> 9. Weights are float32
/// (checkpoint precision); all math on them runs in double. Row-major:
/// w1[h * 25 + i], w2[o * 128 + h].
struct MediumMLPWeights {
    static constexpr int kIn = 25;
    static constexpr int kHidden = 128;
    static constexpr int kOut = 9;

    std::vector<float> w1; // kHidden x kIn
    std::vector<float> b1; // kHidden
    std::vector<float> w2; // kOut x kHidden
    std::vector<float> b2; // kOut

    /// Layers uniform in +-sqrt(1/fan_in), biases zero.
    static MediumMLPWeights init(Rng& rng);
    static MediumMLPWeights zeros();

    size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
    bool all_finite() const;
};

/// The learnable scene: M explicit Gaussians plus the medium MLP. Parameters
/// are stored as float32 (the checkpoint is the source of truth for
/// precision); every computation promotes to double. `revision` increments
/// on each mutation so backward passes can detect stale forward state.
struct GaussianScene {
    static constexpr int kShSlots = 16; // (3+1)^2 color coefficients per channel

    std::vector<float> positions;      // M x 3
    std::vector<float> rotations;      // M x 4 quaternions (w,x,y,z), unnormalized storage
    std::vector<float> log_scales;     // M x 3
    std::vector<float> opacity_logits; // M
    std::vector<float> sh_coeffs;      // M x 16 x 3, basis-major, RGB innermost
    MediumMLPWeights medium;
    int active_sh_degree = 0; // in [0, 3], non-decreasing over a run
    uint64_t revision = 0;

    size_t count() const { return opacity_logits.size(); }
    void bump_revision() { ++revision; }

    /// Raise active_sh_degree to `degree` if higher; never lowers it.
    void raise_sh_degree(int degree);
};

/// Per-field gradient accumulators mirroring GaussianScene shapes, in double.
struct GradientSet {
    std::vector<double> positions;
    std::vector<double> rotations;
    std::vector<double> log_scales;
    std::vector<double> opacity_logits;
    std::vector<double> sh_coeffs;
    std::vector<double> w1, b1, w2, b2;

    static GradientSet zeros_like(const GaussianScene& scene);
    void zero();
    void add(const GradientSet& other);
    bool all_finite() const;
};

/// Activation-applied view of the scene used by the renderer. Transformed
/// fields are materialized; sh_coeffs alias the scene storage.
struct ActivatedParams {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations; // unit quaternions
    std::vector<Vec3> scales;    // exp(log_scales)
    std::vector<double> opacities; // sigmoid(opacity_logits)
    const float* sh_coeffs = nullptr;
    int active_sh_degree = 0;
};

/// Throws numeric_fault naming the first non-finite parameter index.
ActivatedParams activated_params(const GaussianScene& scene);

struct SceneInitConfig {
    double scale_fraction = 0.5; // of mean nearest-neighbor spacing
    double init_opacity = 0.1;
    double init_gray = 0.5; // DC color before SH offset
};

/// Uniform-random positions in `bounds`, identity rotations, isotropic
/// log-scales from mean nearest-neighbor spacing, opacity logit(0.1),
/// gray DC color, degree 0, medium weights from MediumMLPWeights::init.
/// Deterministic given seed.
GaussianScene init_scene(size_t count, const Bounds& bounds, uint64_t seed,
                         const SceneInitConfig& config = {});

/// Point-cloud seeding: positions copied from `points`, DC color from the
/// matching entry of `colors`. Everything else as init_scene.
GaussianScene init_scene_from_points(const std::vector<Vec3>& points,
                                     const std::vector<Vec3>& colors, uint64_t seed,
                                     const SceneInitConfig& config = {});

/// Mean distance to the nearest neighbor over all points (grid-accelerated,
/// exact). Throws on fewer than 2 points.
double mean_nearest_neighbor_spacing(const std::vector<Vec3>& points);

/// Checkpoint format (little-endian):
///   header  = "SMGS", version u32 (=1), M u64, K u32 (=16), active_sh_degree u32
///   body    = float32 arrays: positions, rotations, log_scales,
///             opacity_logits, sh_coeffs, then W1, b1, W2, b2
///   footer  = CRC32 of the body bytes, u32
/// Round-trip is bit-exact. Version 1 fixes the medium output channel order
/// to [rgb, bs, attn].
void save_checkpoint(const GaussianScene& scene, const std::string& path);
GaussianScene load_checkpoint(const std::string& path);

inline constexpr uint32_t kCheckpointVersion = 1;

} // namespace smokegs
