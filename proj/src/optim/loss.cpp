// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/optim/loss.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace smokegs {

void LossConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) {
        throw invalid_argument_error("loss lambda must lie in [0, 1]");
    }
    if (ssim_window < 3 || ssim_window % 2 == 0) {
        throw invalid_argument_error("ssim window must be odd and >= 3");
    }
    if (!(ssim_sigma > 0.0) || !(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) {
        throw invalid_argument_error("ssim sigma and stabilizers must be positive");
    }
}

namespace {

void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw invalid_argument_error("images have mismatched shapes");
    }
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> k(size);
    const double c = (size - 1) * 0.5;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) {
        v /= sum;
    }
    return k;
}

/// Weighted window sums of a single channel plane, valid mode: output is
/// (W-win+1) x (H-win+1).
void valid_filter(const std::vector<double>& in, int w, int h, const std::vector<double>& k,
                  std::vector<double>& out) {
    const int win = static_cast<int>(k.size());
    const int wv = w - win + 1;
    const int hv = h - win + 1;
    std::vector<double> tmp(static_cast<size_t>(wv) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < win; ++i) {
                s += k[i] * in[static_cast<size_t>(y) * w + x + i];
            }
            tmp[static_cast<size_t>(y) * wv + x] = s;
        }
    }
    out.assign(static_cast<size_t>(wv) * hv, 0.0);
    for (int y = 0; y < hv; ++y) {
        for (int x = 0; x < wv; ++x) {
            double s = 0.0;
            for (int i = 0; i < win; ++i) {
                s += k[i] * tmp[static_cast<size_t>(y + i) * wv + x];
            }
            out[static_cast<size_t>(y) * wv + x] = s;
        }
    }
}

/// Adjoint of valid_filter: scatters window-level coefficients back onto the
/// W x H plane with the same separable weights.
void valid_filter_adjoint(const std::vector<double>& in, int w, int h,
                          const std::vector<double>& k, std::vector<double>& out) {
    const int win = static_cast<int>(k.size());
    const int wv = w - win + 1;
    const int hv = h - win + 1;
    std::vector<double> tmp(static_cast<size_t>(wv) * h, 0.0);
    for (int wy = 0; wy < hv; ++wy) {
        for (int i = 0; i < win; ++i) {
            const double kv = k[i];
            double* dst = tmp.data() + static_cast<size_t>(wy + i) * wv;
            const double* src = in.data() + static_cast<size_t>(wy) * wv;
            for (int x = 0; x < wv; ++x) {
                dst[x] += kv * src[x];
            }
        }
    }
    out.assign(static_cast<size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        double* dst = out.data() + static_cast<size_t>(y) * w;
        const double* src = tmp.data() + static_cast<size_t>(y) * wv;
        for (int wx = 0; wx < wv; ++wx) {
            const double sv = src[wx];
            for (int i = 0; i < win; ++i) {
                dst[wx + i] += k[i] * sv;
            }
        }
    }
}

void extract_channel(const Image& img, int c, std::vector<double>& plane) {
    const size_t n = static_cast<size_t>(img.width) * img.height;
    plane.resize(n);
    for (size_t i = 0; i < n; ++i) {
        plane[i] = img.data[i * 3 + c];
    }
}

} // namespace

LossResult l1_loss(const Image& pred, const Image& target) {
    require_same_shape(pred, target);
    const size_t n = pred.data.size();
    const auto& kt = kernels::active();
    LossResult r;
    r.value = kt.abs_diff_sum(pred.data.data(), target.data.data(), n) / static_cast<double>(n);
    r.grad = Image(pred.width, pred.height);
    kt.sign_diff(pred.data.data(), target.data.data(), 1.0 / static_cast<double>(n),
                 r.grad.data.data(), n);
    return r;
}

namespace {

LossResult ssim_impl(const Image& pred, const Image& target, const LossConfig& cfg,
                     bool want_grad) {
    cfg.validate();
    require_same_shape(pred, target);
    const int w = pred.width;
    const int h = pred.height;
    const int win = cfg.ssim_window;
    if (w < win || h < win) {
        throw invalid_argument_error("image smaller than the ssim window");
    }
    const std::vector<double> k = gaussian_window(win, cfg.ssim_sigma);
    const int wv = w - win + 1;
    const int hv = h - win + 1;
    const size_t n_windows = static_cast<size_t>(wv) * hv;
    const double inv_total = 1.0 / (3.0 * static_cast<double>(n_windows));

    LossResult r;
    if (want_grad) {
        r.grad = Image(w, h);
    }

    std::vector<double> x, y, xx, yy, xy;
    std::vector<double> mu_x, mu_y, m_xx, m_yy, m_xy;
    std::vector<double> c_mu(n_windows), c_xx(n_windows), c_xy(n_windows);
    std::vector<double> a_mu, a_xx, a_xy;
    std::vector<double> buf(static_cast<size_t>(w) * h);

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        extract_channel(pred, c, x);
        extract_channel(target, c, y);
        const size_t n = x.size();
        xx.resize(n);
        yy.resize(n);
        xy.resize(n);
        for (size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        valid_filter(x, w, h, k, mu_x);
        valid_filter(y, w, h, k, mu_y);
        valid_filter(xx, w, h, k, m_xx);
        valid_filter(yy, w, h, k, m_yy);
        valid_filter(xy, w, h, k, m_xy);

        for (size_t i = 0; i < n_windows; ++i) {
            const double ux = mu_x[i];
            const double uy = mu_y[i];
            const double sxx = m_xx[i] - ux * ux;
            const double syy = m_yy[i] - uy * uy;
            const double sxy = m_xy[i] - ux * uy;
            const double a1 = 2.0 * ux * uy + cfg.ssim_c1;
            const double a2 = 2.0 * sxy + cfg.ssim_c2;
            const double b1 = ux * ux + uy * uy + cfg.ssim_c1;
            const double b2 = sxx + syy + cfg.ssim_c2;
            const double denom = b1 * b2;
            const double s = (a1 * a2) / denom;
            total += s;
            if (want_grad) {
                const double ds_da1 = a2 / denom;
                const double ds_da2 = a1 / denom;
                const double ds_db1 = -s / b1;
                const double ds_db2 = -s / b2;
                // Raw-moment partials: sxx = m_xx - ux^2, sxy = m_xy - ux*uy.
                c_mu[i] = inv_total * (2.0 * uy * ds_da1 - 2.0 * uy * ds_da2 +
                                       2.0 * ux * ds_db1 - 2.0 * ux * ds_db2);
                c_xx[i] = inv_total * ds_db2;
                c_xy[i] = inv_total * 2.0 * ds_da2;
            }
        }
        if (want_grad) {
            valid_filter_adjoint(c_mu, w, h, k, a_mu);
            valid_filter_adjoint(c_xx, w, h, k, a_xx);
            valid_filter_adjoint(c_xy, w, h, k, a_xy);
            for (size_t i = 0; i < n; ++i) {
                buf[i] = a_mu[i] + 2.0 * x[i] * a_xx[i] + y[i] * a_xy[i];
            }
            for (size_t i = 0; i < n; ++i) {
                r.grad.data[i * 3 + c] = buf[i];
            }
        }
    }
    r.value = total * inv_total;
    return r;
}

} // namespace

LossResult ssim(const Image& pred, const Image& target, const LossConfig& cfg) {
    return ssim_impl(pred, target, cfg, true);
}

double ssim_value(const Image& pred, const Image& target, const LossConfig& cfg) {
    return ssim_impl(pred, target, cfg, false).value;
}

LossResult combined_loss(const Image& pred, const Image& target, const LossConfig& cfg) {
    cfg.validate();
    LossResult l1 = l1_loss(pred, target);
    if (cfg.lambda == 0.0) {
        return l1;
    }
    LossResult s = ssim_impl(pred, target, cfg, true);
    LossResult r;
    r.value = (1.0 - cfg.lambda) * l1.value + cfg.lambda * (1.0 - s.value);
    r.grad = Image(pred.width, pred.height);
    for (size_t i = 0; i < r.grad.data.size(); ++i) {
        r.grad.data[i] = (1.0 - cfg.lambda) * l1.grad.data[i] - cfg.lambda * s.grad.data[i];
    }
    return r;
}

double psnr(const Image& pred, const Image& target, double cap) {
    require_same_shape(pred, target);
    const size_t n = pred.data.size();
    double se = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double a = std::clamp(pred.data[i], 0.0, 1.0);
        const double b = std::clamp(target.data[i], 0.0, 1.0);
        se += (a - b) * (a - b);
    }
    const double mse = se / static_cast<double>(n);
    if (mse <= 0.0) {
        return cap;
    }
    return std::min(cap, -10.0 * std::log10(mse));
}

} // namespace smokegs
