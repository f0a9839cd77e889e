// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/types.hpp"

namespace smokegs {

struct LossConfig {
    double lambda = 0.2;      // weight of the (1 - SSIM) term
    int ssim_window = 11;     // odd, >= 3
    double ssim_sigma = 1.5;  // Gaussian window width
    double ssim_c1 = 0.01 * 0.01; // stabilizers at dynamic range 1
    double ssim_c2 = 0.03 * 0.03;

    void validate() const;
};

struct LossResult {
    double value = 0.0;
    Image grad; // d value / d pred
};

/// Mean absolute error over all pixels and channels; gradient is
/// sign(pred - target) / count with sign(0) = 0.
LossResult l1_loss(const Image& pred, const Image& target);

/// Mean local SSIM over Gaussian-weighted windows (valid mode: only windows
/// fully inside the image), each channel treated as its own plane. The
/// gradient with respect to `pred` is analytic.
LossResult ssim(const Image& pred, const Image& target, const LossConfig& cfg = {});

/// L = (1 - lambda) * L1 + lambda * (1 - SSIM), gradients combined to match.
LossResult combined_loss(const Image& pred, const Image& target, const LossConfig& cfg = {});

/// 10*log10(1/MSE) on [0,1]-clamped copies; `cap` both stands in for the
/// zero-MSE case and bounds the result.
double psnr(const Image& pred, const Image& target, double cap = 99.0);

/// SSIM value without the gradient (for evaluation loops).
double ssim_value(const Image& pred, const Image& target, const LossConfig& cfg = {});

} // namespace smokegs
