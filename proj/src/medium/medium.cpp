// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/medium/medium.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/core/parallel.hpp"
#include "smokegs/kernels/kernels.hpp"
#include "smokegs/sh/sh.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

namespace smokegs {
namespace {

constexpr int kIn = MediumMLPWeights::kIn;
constexpr int kHidden = MediumMLPWeights::kHidden;
constexpr int kOut = MediumMLPWeights::kOut;

/// float row-major (rows x cols) -> double transposed (cols x rows), the
/// layout the linear kernels consume.
std::vector<double> transpose_to_double(const std::vector<float>& w, int rows, int cols) {
    std::vector<double> out(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out[static_cast<size_t>(c) * rows + r] = w[static_cast<size_t>(r) * cols + c];
        }
    }
    return out;
}

std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace

uint32_t medium_weights_fingerprint(const MediumMLPWeights& weights) {
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto* v : {&weights.w1, &weights.b1, &weights.w2, &weights.b2}) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(v->data()),
                    static_cast<uInt>(v->size() * sizeof(float)));
    }
    return static_cast<uint32_t>(crc);
}

std::vector<double> encode_directions(const std::vector<Vec3>& rays) {
    std::vector<double> features(rays.size() * kIn);
    for (size_t i = 0; i < rays.size(); ++i) {
        const double norm = rays[i].norm();
        if (std::abs(norm - 1.0) > 1e-6) {
            throw invalid_argument_error("ray " + std::to_string(i) + " is not unit length");
        }
        sh_basis(rays[i], 4, features.data() + i * kIn);
    }
    return features;
}

MediumOutputs medium_forward(const MediumMLPWeights& weights, const std::vector<double>& features,
                             int width, int height, int workers) {
    const size_t n = static_cast<size_t>(width) * height;
    if (width <= 0 || height <= 0 || features.size() != n * kIn) {
        throw invalid_argument_error("feature buffer does not match image dimensions");
    }

    MediumOutputs out;
    out.width = width;
    out.height = height;
    out.features = features;
    out.hidden.resize(n * kHidden);
    out.rgb.resize(n * 3);
    out.bs.resize(n * 3);
    out.attn.resize(n * 3);
    out.weights_fingerprint = medium_weights_fingerprint(weights);

    // Layer 1 wants the transposed (in x hidden) layout; layer 2 runs on the
    // stored (out x hidden) rows directly since kOut is too narrow to tile.
    const std::vector<double> w1t = transpose_to_double(weights.w1, kHidden, kIn);
    const std::vector<double> b1 = widen(weights.b1);
    const std::vector<double> w2 = widen(weights.w2);
    const std::vector<double> b2 = widen(weights.b2);

    const auto& kt = kernels::active();
    parallel_chunks(n, resolve_workers(workers), [&](int, size_t begin, size_t end) {
        const size_t batch = end - begin;
        kt.linear_forward(w1t.data(), b1.data(), features.data() + begin * kIn,
                          out.hidden.data() + begin * kHidden, batch, kIn, kHidden);
        kt.sigmoid_inplace(out.hidden.data() + begin * kHidden, batch * kHidden);
        std::vector<double> raw(batch * kOut);
        kt.linear_forward_outmajor(w2.data(), b2.data(), out.hidden.data() + begin * kHidden,
                                   raw.data(), batch, kHidden, kOut);
        for (size_t p = 0; p < batch; ++p) {
            const double* o = raw.data() + p * kOut;
            const size_t px = begin + p;
            for (int c = 0; c < 3; ++c) {
                out.rgb[px * 3 + c] = sigmoid(o[c]);
                out.bs[px * 3 + c] = softplus(o[3 + c]);
                out.attn[px * 3 + c] = softplus(o[6 + c]);
            }
        }
    });

    for (const auto* v : {&out.rgb, &out.bs, &out.attn}) {
        for (double x : *v) {
            if (!std::isfinite(x)) {
                throw numeric_fault("non-finite medium output");
            }
        }
    }
    return out;
}

Image fuse(const Image& i_gs, const MediumOutputs& medium, double weight) {
    if (i_gs.width != medium.width || i_gs.height != medium.height) {
        throw invalid_argument_error("fusion inputs have mismatched shapes");
    }
    Image out(i_gs.width, i_gs.height);
    kernels::active().fuse_add(i_gs.data.data(), medium.rgb.data(), weight, out.data.data(),
                               out.data.size());
    return out;
}

MediumGradients medium_backward(const MediumMLPWeights& weights, const MediumOutputs& outputs,
                                const Image& dL_dfused, double fuse_weight,
                                std::vector<double>* dfeatures, int workers) {
    const size_t n = outputs.pixel_count();
    if (medium_weights_fingerprint(weights) != outputs.weights_fingerprint) {
        throw stale_state_error("medium weights changed since the forward pass");
    }
    if (dL_dfused.width != outputs.width || dL_dfused.height != outputs.height) {
        throw invalid_argument_error("cotangent shape does not match medium outputs");
    }

    const std::vector<double> w1t = transpose_to_double(weights.w1, kHidden, kIn);
    const std::vector<double> w2 = widen(weights.w2);

    const int worker_count = resolve_workers(workers);
    const auto& kt = kernels::active();

    if (dfeatures) {
        dfeatures->assign(n * kIn, 0.0);
    }

    // Per-worker accumulators, merged in worker order. Layer 1 accumulates
    // transposed (matching its kernel layout), layer 2 in the stored layout.
    struct Partial {
        std::vector<double> dw1t, db1, dw2, db2;
        bool used = false;
    };
    std::vector<Partial> partials(static_cast<size_t>(worker_count));

    parallel_chunks(n, worker_count, [&](int worker, size_t begin, size_t end) {
        Partial& part = partials[static_cast<size_t>(worker)];
        part.dw1t.assign(static_cast<size_t>(kIn) * kHidden, 0.0);
        part.db1.assign(kHidden, 0.0);
        part.dw2.assign(static_cast<size_t>(kOut) * kHidden, 0.0);
        part.db2.assign(kOut, 0.0);
        part.used = true;

        const size_t batch = end - begin;
        std::vector<double> dout(batch * kOut, 0.0);
        for (size_t p = 0; p < batch; ++p) {
            const size_t px = begin + p;
            for (int c = 0; c < 3; ++c) {
                const double s = outputs.rgb[px * 3 + c];
                dout[p * kOut + c] = fuse_weight * dL_dfused.data[px * 3 + c] *
                                     sigmoid_grad_from_value(s);
                // bs/attn rows stay exactly zero: fusion never reads them.
            }
        }
        kt.linear_backward_params_outmajor(outputs.hidden.data() + begin * kHidden, dout.data(),
                                           part.dw2.data(), part.db2.data(), batch, kHidden, kOut);
        std::vector<double> dhidden(batch * kHidden);
        kt.linear_backward_input_outmajor(w2.data(), dout.data(), dhidden.data(), batch, kHidden,
                                          kOut);
        for (size_t p = 0; p < batch; ++p) {
            for (int h = 0; h < kHidden; ++h) {
                const double hv = outputs.hidden[(begin + p) * kHidden + h];
                dhidden[p * kHidden + h] *= sigmoid_grad_from_value(hv);
            }
        }
        kt.linear_backward_params(outputs.features.data() + begin * kIn, dhidden.data(),
                                  part.dw1t.data(), part.db1.data(), batch, kIn, kHidden);
        if (dfeatures) {
            kt.linear_backward_input(w1t.data(), dhidden.data(), dfeatures->data() + begin * kIn,
                                     batch, kIn, kHidden);
        }
    });

    MediumGradients grads;
    grads.w1.assign(static_cast<size_t>(kHidden) * kIn, 0.0);
    grads.b1.assign(kHidden, 0.0);
    grads.w2.assign(static_cast<size_t>(kOut) * kHidden, 0.0);
    grads.b2.assign(kOut, 0.0);
    for (const Partial& part : partials) {
        if (!part.used) continue;
        for (int h = 0; h < kHidden; ++h) {
            for (int i = 0; i < kIn; ++i) {
                grads.w1[static_cast<size_t>(h) * kIn + i] +=
                    part.dw1t[static_cast<size_t>(i) * kHidden + h];
            }
            grads.b1[h] += part.db1[h];
        }
        for (size_t i = 0; i < grads.w2.size(); ++i) {
            grads.w2[i] += part.dw2[i];
        }
        for (int o = 0; o < kOut; ++o) {
            grads.b2[o] += part.db2[o];
        }
    }
    return grads;
}

} // namespace smokegs
