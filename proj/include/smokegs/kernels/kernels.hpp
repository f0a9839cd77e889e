// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

namespace smokegs::kernels {

/// Data-parallel inner loops shared by the medium MLP, losses, fusion and the
/// optimizer. Every entry has a scalar reference implementation and an AVX2
/// variant; the active table is chosen once at startup from CPU features (or
/// forced via SMOKEGS_KERNELS=scalar|avx2|auto). Variants agree with the
/// reference up to floating-point reassociation; tests pin the tolerance.
struct KernelTable {
    const char* name;

    /// out[i] = base[i] + w * add[i]
    void (*fuse_add)(const double* base, const double* add, double w, double* out, size_t n);

    /// sum_i |a[i] - b[i]|
    double (*abs_diff_sum)(const double* a, const double* b, size_t n);

    /// sum_i (a[i] - b[i])^2
    double (*sq_diff_sum)(const double* a, const double* b, size_t n);

    /// out[i] = scale * sign(a[i] - b[i]), sign(0) = 0
    void (*sign_diff)(const double* a, const double* b, double scale, double* out, size_t n);

    double (*dot)(const double* a, const double* b, size_t n);

    /// y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, size_t n);

    /// Dense layer over a batch. Weights are stored transposed (in_dim x
    /// out_dim) so the inner loop runs contiguously over outputs:
    ///   y[b, o] = bias[o] + sum_i x[b, i] * wt[i, o]
    void (*linear_forward)(const double* wt, const double* bias, const double* x, double* y,
                           size_t batch, size_t in_dim, size_t out_dim);

    /// dwt[i, o] += sum_b x[b, i] * dy[b, o];  dbias[o] += sum_b dy[b, o]
    void (*linear_backward_params)(const double* x, const double* dy, double* dwt, double* dbias,
                                   size_t batch, size_t in_dim, size_t out_dim);

    /// dx[b, i] = sum_o wt[i, o] * dy[b, o]
    void (*linear_backward_input)(const double* wt, const double* dy, double* dx, size_t batch,
                                  size_t in_dim, size_t out_dim);

    /// x[i] = 1 / (1 + exp(-x[i]))
    void (*sigmoid_inplace)(double* x, size_t n);

    /// Dense layer with weights in their natural (out_dim x in_dim) layout.
    /// Each output is a dot product over the input row; preferable when
    /// out_dim is small and a transpose would dominate.
    ///   y[b, o] = bias[o] + sum_i w[o, i] * x[b, i]
    void (*linear_forward_outmajor)(const double* w, const double* bias, const double* x,
                                    double* y, size_t batch, size_t in_dim, size_t out_dim);

    /// dw[o, i] += sum_b dy[b, o] * x[b, i];  dbias[o] += sum_b dy[b, o]
    void (*linear_backward_params_outmajor)(const double* x, const double* dy, double* dw,
                                            double* dbias, size_t batch, size_t in_dim,
                                            size_t out_dim);

    /// dx[b, i] = sum_o dy[b, o] * w[o, i]
    void (*linear_backward_input_outmajor)(const double* w, const double* dy, double* dx,
                                           size_t batch, size_t in_dim, size_t out_dim);

    /// Bias-corrected Adam over one parameter group. Parameters and moments
    /// live in float32; the arithmetic runs in double. bc1/bc2 are the
    /// 1/(1-beta^t) corrections, precomputed per step.
    void (*adam_update)(float* p, float* m, float* v, const double* g, size_t n, double lr,
                        double beta1, double beta2, double eps, double bc1, double bc2);
};

enum class Impl { scalar, avx2 };

const KernelTable& scalar_table();
const KernelTable& avx2_table(); // entries null when not compiled in

bool avx2_available(); // compiled in AND supported by this CPU

/// Active table (dispatched on first use; honors SMOKEGS_KERNELS).
const KernelTable& active();

/// Force an implementation (tests). Throws usage_error if unavailable.
void select(Impl impl);
void select_auto();

std::string active_name();

} // namespace smokegs::kernels
