// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/types.hpp"

#include <string>
#include <vector>

namespace smokegs {

/// Pinhole camera. The pose is camera-to-world with the camera looking down
/// its local -z axis (OpenGL-style). Immutable once validated; all
/// operations are pure.
struct Camera {
    std::string id;
    int width = 0;
    int height = 0;
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    Mat4 pose = Mat4::identity(); // camera-to-world

    /// Throws invalid_argument_error unless fx,fy > 0, W,H >= 1,
    /// 0 <= cx < W, 0 <= cy < H, and the pose rotation is orthonormal
    /// (max |R^T R - I| < 1e-6, det ~ +1) with finite entries.
    void validate() const;

    /// World-to-render transform: pose^-1 with rows 1 and 2 (0-indexed)
    /// negated. Identity pose maps to diag(1,-1,-1,1). After this flip the
    /// render frame has +z pointing into the scene.
    Mat4 view_matrix() const;

    /// Unit world-space direction for pixel-center coordinates (u, v):
    /// d_cam = ((u-cx)/fx, (v-cy)/fy, 1) normalized, then rotated by the
    /// camera-to-world rotation. No row flip is applied here.
    Vec3 pixel_ray_world(double u, double v) const;

    /// Camera rescaled by an integer factor: dimensions and intrinsics all
    /// divide by `factor`, so rays through corresponding pixel centers are
    /// unchanged. W and H must be divisible by factor.
    Camera downscaled(int factor) const;

    /// Pose positioned at `eye` with local -z toward `target`.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                          int height, double fx, double fy, double cx, double cy);
};

/// Row-major H*W field of pixel_ray_world values at pixel centers
/// (i + 0.5, j + 0.5); entry index is j * W + i.
std::vector<Vec3> ray_direction_field(const Camera& cam);

} // namespace smokegs
