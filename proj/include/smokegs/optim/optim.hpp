// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/scene/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace smokegs {

/// Per-group Adam learning rates.
struct OptimGroupRates {
    double positions = 1.6e-4;
    double rotations = 1e-3;
    double scales = 5e-3;
    double opacities = 5e-2;
    double sh = 2.5e-3;
    double mlp = 1e-3;
};

struct OptimConfig {
    OptimGroupRates rates;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient L2-norm clip. 0 disables.
    double grad_clip = 0.0;
    /// Per-step exponential decay applied to the position rate:
    /// lr(t) = positions * exp(-decay * t). 0 disables.
    double position_lr_decay = 0.0;

    void validate() const;
};

/// Adam moments for every learnable array, float32 like the parameters.
/// The step counter is the number of completed updates.
struct OptimState {
    uint64_t step = 0;
    std::vector<float> m_positions, v_positions;
    std::vector<float> m_rotations, v_rotations;
    std::vector<float> m_log_scales, v_log_scales;
    std::vector<float> m_opacity, v_opacity;
    std::vector<float> m_sh, v_sh;
    std::vector<float> m_w1, v_w1;
    std::vector<float> m_b1, v_b1;
    std::vector<float> m_w2, v_w2;
    std::vector<float> m_b2, v_b2;

    static OptimState zeros_like(const GaussianScene& scene);
    bool matches(const GaussianScene& scene) const;
};

/// One bias-corrected Adam update. Throws invalid_argument_error on shape
/// mismatch and numeric_fault on non-finite gradients; in both cases the
/// scene and state are left untouched. Bumps the scene revision on success.
void adam_step(OptimState& state, GaussianScene& scene, const GradientSet& grads,
               const OptimConfig& cfg);

/// Optimizer-state file ("SMAD"), stored alongside checkpoints so training
/// can resume bit-identically. Same little-endian + CRC32 framing as the
/// scene checkpoint.
inline constexpr uint32_t kAdamStateVersion = 1;

void save_adam_state(const OptimState& state, const std::string& path);
OptimState load_adam_state(const std::string& path);

/// Spherical-harmonics warm-up: degree min(3, step / interval).
int sh_warmup(uint64_t step, uint64_t interval);

} // namespace smokegs
