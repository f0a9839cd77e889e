// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/types.hpp"

#include <cmath>

namespace smokegs {

/// Overflow-safe logistic function.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// d sigmoid / dx expressed through the output value.
inline double sigmoid_grad_from_value(double s) { return s * (1.0 - s); }

/// Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|)).
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotmat(const Vec4& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r.m = {1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
           2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
           2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y)};
    return r;
}

} // namespace smokegs
