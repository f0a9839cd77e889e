// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/camera/camera.hpp"

#include "smokegs/core/errors.hpp"

#include <cmath>

namespace smokegs {
namespace {

bool rotation_is_orthonormal(const Mat3& r) {
    const Mat3 gram = r.transposed() * r;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            if (std::abs(gram(i, j) - want) >= 1e-6) {
                return false;
            }
        }
    }
    return std::abs(r.det() - 1.0) < 1e-5;
}

} // namespace

void Camera::validate() const {
    if (width < 1 || height < 1) {
        throw invalid_argument_error("camera '" + id + "': image dimensions must be >= 1");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw invalid_argument_error("camera '" + id + "': focal lengths must be positive");
    }
    if (!(cx >= 0.0) || !(cx < width) || !(cy >= 0.0) || !(cy < height)) {
        throw invalid_argument_error("camera '" + id + "': principal point outside image");
    }
    for (double v : pose.m) {
        if (!std::isfinite(v)) {
            throw invalid_argument_error("camera '" + id + "': non-finite pose entry");
        }
    }
    if (pose(3, 0) != 0.0 || pose(3, 1) != 0.0 || pose(3, 2) != 0.0 || pose(3, 3) != 1.0) {
        throw invalid_argument_error("camera '" + id + "': pose bottom row must be (0,0,0,1)");
    }
    if (!rotation_is_orthonormal(pose.rotation())) {
        throw invalid_argument_error("camera '" + id + "': pose rotation is not orthonormal");
    }
}

Mat4 Camera::view_matrix() const {
    if (!rotation_is_orthonormal(pose.rotation())) {
        throw invalid_argument_error("camera '" + id + "': pose is not a rigid transform");
    }
    Mat4 v = pose.rigid_inverse();
    for (int c = 0; c < 4; ++c) {
        v(1, c) = -v(1, c);
        v(2, c) = -v(2, c);
    }
    return v;
}

Vec3 Camera::pixel_ray_world(double u, double v) const {
    const Vec3 d_cam{(u - cx) / fx, (v - cy) / fy, 1.0};
    return (pose.rotation() * d_cam.normalized()).normalized();
}

Camera Camera::downscaled(int factor) const {
    if (factor < 1 || width % factor != 0 || height % factor != 0) {
        throw invalid_argument_error("camera '" + id + "': dimensions not divisible by " +
                                     std::to_string(factor));
    }
    Camera out = *this;
    out.width = width / factor;
    out.height = height / factor;
    out.fx = fx / factor;
    out.fy = fy / factor;
    out.cx = cx / factor;
    out.cy = cy / factor;
    return out;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fx, double fy, double cx, double cy) {
    const Vec3 z = (eye - target).normalized(); // camera looks down -z
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.pose = Mat4::identity();
    for (int i = 0; i < 3; ++i) {
        cam.pose(i, 0) = x[i];
        cam.pose(i, 1) = y[i];
        cam.pose(i, 2) = z[i];
        cam.pose(i, 3) = eye[i];
    }
    cam.validate();
    return cam;
}

std::vector<Vec3> ray_direction_field(const Camera& cam) {
    cam.validate();
    const Mat3 r = cam.pose.rotation();
    std::vector<Vec3> field(static_cast<size_t>(cam.width) * cam.height);
    size_t idx = 0;
    for (int j = 0; j < cam.height; ++j) {
        const double y = (j + 0.5 - cam.cy) / cam.fy;
        for (int i = 0; i < cam.width; ++i, ++idx) {
            const double x = (i + 0.5 - cam.cx) / cam.fx;
            const Vec3 d{x, y, 1.0};
            field[idx] = (r * d.normalized()).normalized();
        }
    }
    return field;
}

} // namespace smokegs
