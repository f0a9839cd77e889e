// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/sh/sh.hpp"

#include "smokegs/core/errors.hpp"

#include <algorithm>

namespace smokegs {
namespace {

constexpr double kC0 = 0.28209479177387814;

constexpr double kC1 = 0.4886025119029199;

constexpr double kC2a = 1.0925484305920792; // xy, yz, xz
constexpr double kC2b = 0.31539156525252005; // 3z^2 - 1
constexpr double kC2c = 0.5462742152960396; // x^2 - y^2

constexpr double kC3a = 0.5900435899266435; // y(3x^2-y^2), x(x^2-3y^2)
constexpr double kC3b = 2.890611442640554;  // xyz
constexpr double kC3c = 0.4570457994644658; // y(5z^2-1), x(5z^2-1)
constexpr double kC3d = 0.3731763325901154; // z(5z^2-3)
constexpr double kC3e = 1.445305721320277;  // z(x^2-y^2)

constexpr double kC4a = 2.5033429417967046;  // xy(x^2-y^2)
constexpr double kC4b = 1.7701307697799304;  // yz(3x^2-y^2), xz(x^2-3y^2)
constexpr double kC4c = 0.9461746957575601;  // xy(7z^2-1)
constexpr double kC4d = 0.6690465435572892;  // yz(7z^2-3), xz(7z^2-3)
constexpr double kC4e = 0.10578554691520431; // 35z^4 - 30z^2 + 3
constexpr double kC4f = 0.47308734787878004; // (x^2-y^2)(7z^2-1)
constexpr double kC4g = 0.6258357354491761;  // x^4 - 6x^2y^2 + y^4

void check_degree(int degree) {
    if (degree < 0 || degree > kShMaxDegree) {
        throw invalid_argument_error("sh degree out of range [0, 4]");
    }
}

} // namespace

void sh_basis(const Vec3& dir, int degree, double* out) {
    check_degree(degree);
    const double x = dir.x, y = dir.y, z = dir.z;

    out[0] = kC0;
    if (degree < 1) return;

    out[1] = kC1 * y;
    out[2] = kC1 * z;
    out[3] = kC1 * x;
    if (degree < 2) return;

    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kC2a * x * y;
    out[5] = kC2a * y * z;
    out[6] = kC2b * (3.0 * zz - 1.0);
    out[7] = kC2a * x * z;
    out[8] = kC2c * (xx - yy);
    if (degree < 3) return;

    out[9] = kC3a * y * (3.0 * xx - yy);
    out[10] = kC3b * x * y * z;
    out[11] = kC3c * y * (5.0 * zz - 1.0);
    out[12] = kC3d * z * (5.0 * zz - 3.0);
    out[13] = kC3c * x * (5.0 * zz - 1.0);
    out[14] = kC3e * z * (xx - yy);
    out[15] = kC3a * x * (xx - 3.0 * yy);
    if (degree < 4) return;

    out[16] = kC4a * x * y * (xx - yy);
    out[17] = kC4b * y * z * (3.0 * xx - yy);
    out[18] = kC4c * x * y * (7.0 * zz - 1.0);
    out[19] = kC4d * y * z * (7.0 * zz - 3.0);
    out[20] = kC4e * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = kC4d * x * z * (7.0 * zz - 3.0);
    out[22] = kC4f * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = kC4b * x * z * (xx - 3.0 * yy);
    out[24] = kC4g * (xx * xx - 6.0 * xx * yy + yy * yy);
}

void sh_basis_jacobian(const Vec3& dir, int degree, double* out) {
    check_degree(degree);
    const double x = dir.x, y = dir.y, z = dir.z;
    auto row = [&](int i, double dx, double dy, double dz) {
        out[3 * i + 0] = dx;
        out[3 * i + 1] = dy;
        out[3 * i + 2] = dz;
    };

    row(0, 0.0, 0.0, 0.0);
    if (degree < 1) return;

    row(1, 0.0, kC1, 0.0);
    row(2, 0.0, 0.0, kC1);
    row(3, kC1, 0.0, 0.0);
    if (degree < 2) return;

    const double xx = x * x, yy = y * y, zz = z * z;
    row(4, kC2a * y, kC2a * x, 0.0);
    row(5, 0.0, kC2a * z, kC2a * y);
    row(6, 0.0, 0.0, kC2b * 6.0 * z);
    row(7, kC2a * z, 0.0, kC2a * x);
    row(8, kC2c * 2.0 * x, -kC2c * 2.0 * y, 0.0);
    if (degree < 3) return;

    row(9, kC3a * 6.0 * x * y, kC3a * 3.0 * (xx - yy), 0.0);
    row(10, kC3b * y * z, kC3b * x * z, kC3b * x * y);
    row(11, 0.0, kC3c * (5.0 * zz - 1.0), kC3c * 10.0 * y * z);
    row(12, 0.0, 0.0, kC3d * (15.0 * zz - 3.0));
    row(13, kC3c * (5.0 * zz - 1.0), 0.0, kC3c * 10.0 * x * z);
    row(14, kC3e * 2.0 * x * z, -kC3e * 2.0 * y * z, kC3e * (xx - yy));
    row(15, kC3a * 3.0 * (xx - yy), -kC3a * 6.0 * x * y, 0.0);
    if (degree < 4) return;

    row(16, kC4a * y * (3.0 * xx - yy), kC4a * x * (xx - 3.0 * yy), 0.0);
    row(17, kC4b * 6.0 * x * y * z, kC4b * 3.0 * z * (xx - yy), kC4b * y * (3.0 * xx - yy));
    row(18, kC4c * y * (7.0 * zz - 1.0), kC4c * x * (7.0 * zz - 1.0), kC4c * 14.0 * x * y * z);
    row(19, 0.0, kC4d * z * (7.0 * zz - 3.0), kC4d * y * (21.0 * zz - 3.0));
    row(20, 0.0, 0.0, kC4e * (140.0 * zz - 60.0) * z);
    row(21, kC4d * z * (7.0 * zz - 3.0), 0.0, kC4d * x * (21.0 * zz - 3.0));
    row(22, kC4f * 2.0 * x * (7.0 * zz - 1.0), -kC4f * 2.0 * y * (7.0 * zz - 1.0),
        kC4f * 14.0 * z * (xx - yy));
    row(23, kC4b * 3.0 * z * (xx - yy), -kC4b * 6.0 * x * y * z, kC4b * x * (xx - 3.0 * yy));
    row(24, kC4g * 4.0 * x * (xx - 3.0 * yy), kC4g * 4.0 * y * (yy - 3.0 * xx), 0.0);
}

ShColor sh_color(const float* coeffs, int degree, const Vec3& unit_dir) {
    if (degree > 3) {
        throw invalid_argument_error("gaussian color degree exceeds stored bands");
    }
    double basis[16];
    sh_basis(unit_dir, degree, basis);
    const int n = sh_count(degree);
    ShColor result{};
    for (int c = 0; c < 3; ++c) {
        double acc = 0.5;
        for (int i = 0; i < n; ++i) {
            acc += static_cast<double>(coeffs[i * 3 + c]) * basis[i];
        }
        result.clamped[c] = acc < 0.0;
        result.rgb[c] = std::max(0.0, acc);
    }
    return result;
}

} // namespace smokegs
