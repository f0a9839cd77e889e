// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/types.hpp"

#include <array>

namespace smokegs {

/// Real orthonormalized spherical harmonics, degrees 0..4, hard-coded
/// Cartesian polynomial forms. Basis order is l-major with m running
/// -l..l, so index(l, m) = l*(l+1) + m.
inline constexpr int kShMaxDegree = 4;

constexpr int sh_count(int degree) { return (degree + 1) * (degree + 1); }

/// Evaluates the basis at `dir` into out[0 .. sh_count(degree)). `dir` must be
/// unit length for the values to be true sphere samples; the polynomials are
/// evaluated on the raw components either way.
void sh_basis(const Vec3& dir, int degree, double* out);

/// Row i of `out` (3 doubles) is the gradient of basis function i with the
/// direction treated as a free 3-vector. Callers composing with a normalized
/// direction must chain through d(normalize)/d(raw) themselves.
void sh_basis_jacobian(const Vec3& dir, int degree, double* out);

struct ShColor {
    Vec3 rgb;
    std::array<bool, 3> clamped; // channel hit the max(0, .) floor
};

/// Per-gaussian view-dependent color: max(0, 0.5 + sum_i c_i * Y_i(dir)).
/// `coeffs` holds 16 basis slots x 3 channels, basis-major; slots beyond
/// sh_count(degree) are ignored.
ShColor sh_color(const float* coeffs, int degree, const Vec3& unit_dir);

} // namespace smokegs
