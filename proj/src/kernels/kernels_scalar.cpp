// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/kernels/kernels.hpp"

#include <cmath>

namespace smokegs::kernels {
namespace {

void fuse_add(const double* base, const double* add, double w, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        out[i] = base[i] + w * add[i];
    }
}

double abs_diff_sum(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return acc;
}

double sq_diff_sum(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void sign_diff(const double* a, const double* b, double scale, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        out[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
}

double dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void axpy(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void linear_forward(const double* wt, const double* bias, const double* x, double* y, size_t batch,
                    size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * in_dim;
        double* yb = y + b * out_dim;
        for (size_t o = 0; o < out_dim; ++o) {
            yb[o] = bias[o];
        }
        for (size_t i = 0; i < in_dim; ++i) {
            const double xi = xb[i];
            const double* wrow = wt + i * out_dim;
            for (size_t o = 0; o < out_dim; ++o) {
                yb[o] += xi * wrow[o];
            }
        }
    }
}

void linear_backward_params(const double* x, const double* dy, double* dwt, double* dbias,
                            size_t batch, size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * in_dim;
        const double* dyb = dy + b * out_dim;
        for (size_t o = 0; o < out_dim; ++o) {
            dbias[o] += dyb[o];
        }
        for (size_t i = 0; i < in_dim; ++i) {
            const double xi = xb[i];
            double* drow = dwt + i * out_dim;
            for (size_t o = 0; o < out_dim; ++o) {
                drow[o] += xi * dyb[o];
            }
        }
    }
}

void linear_backward_input(const double* wt, const double* dy, double* dx, size_t batch,
                           size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* dyb = dy + b * out_dim;
        double* dxb = dx + b * in_dim;
        for (size_t i = 0; i < in_dim; ++i) {
            const double* wrow = wt + i * out_dim;
            double acc = 0.0;
            for (size_t o = 0; o < out_dim; ++o) {
                acc += wrow[o] * dyb[o];
            }
            dxb[i] = acc;
        }
    }
}

void sigmoid_inplace(double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        x[i] = 1.0 / (1.0 + std::exp(-x[i]));
    }
}

void linear_forward_outmajor(const double* w, const double* bias, const double* x, double* y,
                             size_t batch, size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * in_dim;
        double* yb = y + b * out_dim;
        for (size_t o = 0; o < out_dim; ++o) {
            const double* wrow = w + o * in_dim;
            double acc = 0.0;
            for (size_t i = 0; i < in_dim; ++i) {
                acc += wrow[i] * xb[i];
            }
            yb[o] = bias[o] + acc;
        }
    }
}

void linear_backward_params_outmajor(const double* x, const double* dy, double* dw, double* dbias,
                                     size_t batch, size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * in_dim;
        const double* dyb = dy + b * out_dim;
        for (size_t o = 0; o < out_dim; ++o) {
            const double d = dyb[o];
            dbias[o] += d;
            double* drow = dw + o * in_dim;
            for (size_t i = 0; i < in_dim; ++i) {
                drow[i] += d * xb[i];
            }
        }
    }
}

void linear_backward_input_outmajor(const double* w, const double* dy, double* dx, size_t batch,
                                    size_t in_dim, size_t out_dim) {
    for (size_t b = 0; b < batch; ++b) {
        const double* dyb = dy + b * out_dim;
        double* dxb = dx + b * in_dim;
        for (size_t i = 0; i < in_dim; ++i) {
            dxb[i] = 0.0;
        }
        for (size_t o = 0; o < out_dim; ++o) {
            const double d = dyb[o];
            const double* wrow = w + o * in_dim;
            for (size_t i = 0; i < in_dim; ++i) {
                dxb[i] += d * wrow[i];
            }
        }
    }
}

void adam_update(float* p, float* m, float* v, const double* g, size_t n, double lr, double beta1,
                 double beta2, double eps, double bc1, double bc2) {
    for (size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double step = lr * (mi * bc1) / (std::sqrt(vi * bc2) + eps);
        p[i] = static_cast<float>(static_cast<double>(p[i]) - step);
    }
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table = {
        "scalar",        fuse_add,
        abs_diff_sum,    sq_diff_sum,
        sign_diff,       dot,
        axpy,            linear_forward,
        linear_backward_params, linear_backward_input,
        sigmoid_inplace, linear_forward_outmajor,
        linear_backward_params_outmajor, linear_backward_input_outmajor,
        adam_update,
    };
    return table;
}

} // namespace smokegs::kernels
