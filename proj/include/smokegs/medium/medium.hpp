// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/types.hpp"
#include "smokegs/scene/scene.hpp"

#include <cstdint>
#include <vector>

namespace smokegs {

/// Per-pixel medium terms plus the forward state the backward pass needs.
/// Channel split of the 9 MLP outputs: [0..3) rgb (sigmoid), [3..6) bs
/// (softplus), [6..9) attn (softplus). Only rgb enters the fusion; bs and
/// attn are carried for inspection and receive zero gradient.
struct MediumOutputs {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;  // n x 3, each in (0, 1)
    std::vector<double> bs;   // n x 3, each >= 0
    std::vector<double> attn; // n x 3, each >= 0

    std::vector<double> features; // n x 25 input copy
    std::vector<double> hidden;   // n x 128 sigmoid activations
    uint32_t weights_fingerprint = 0;

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

struct MediumGradients {
    std::vector<double> w1, b1, w2, b2;
};

/// Degree-4 SH encoding of unit rays: one 25-wide feature row per ray.
/// Throws invalid_argument_error if any ray norm deviates from 1 by > 1e-6.
std::vector<double> encode_directions(const std::vector<Vec3>& rays);

/// h = sigmoid(W1 f + b1); o = W2 h + b2; split and activate per the channel
/// map above. Pure in (weights, features); pixels are independent, so the
/// result is identical for any worker count.
MediumOutputs medium_forward(const MediumMLPWeights& weights, const std::vector<double>& features,
                             int width, int height, int workers = 1);

/// I_gs + weight * medium_rgb, element-wise, unclamped.
Image fuse(const Image& i_gs, const MediumOutputs& medium, double weight = 0.2);

/// Gradients of the four weight tensors under the fusion above; the bs/attn
/// output rows receive exactly zero. `dfeatures`, when non-null, receives
/// n x 25 input gradients. Throws stale_state_error if `weights` are not the
/// ones the forward pass saw.
MediumGradients medium_backward(const MediumMLPWeights& weights, const MediumOutputs& outputs,
                                const Image& dL_dfused, double fuse_weight,
                                std::vector<double>* dfeatures = nullptr, int workers = 1);

/// CRC over the raw float storage; pins forward state to a weight snapshot.
uint32_t medium_weights_fingerprint(const MediumMLPWeights& weights);

} // namespace smokegs
