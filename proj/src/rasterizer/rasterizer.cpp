// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/rasterizer/rasterizer.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/core/parallel.hpp"
#include "smokegs/sh/sh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace smokegs {
namespace {

void check_config(const RasterizeConfig& config) {
    if (config.tile_size < 1) {
        throw invalid_argument_error("tile_size must be >= 1");
    }
    if (!(config.near_plane > 0.0)) {
        throw invalid_argument_error("near_plane must be positive");
    }
    if (!(config.alpha_clamp > 0.0) || !(config.alpha_clamp < 1.0)) {
        throw invalid_argument_error("alpha_clamp must lie in (0, 1)");
    }
    if (config.cov_floor < 0.0 || config.alpha_min < 0.0 || config.termination_threshold < 0.0) {
        throw invalid_argument_error("rasterizer thresholds must be non-negative");
    }
}

Mat3 covariance3d(const Vec4& unit_q, const Vec3& scale) {
    const Mat3 r = quat_to_rotmat(unit_q);
    Mat3 n = r;
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            n(i, k) *= scale[k];
        }
    }
    return n * n.transposed();
}

/// d R(q) / d q_k for a unit quaternion q = (w, x, y, z), k in {w, x, y, z}.
std::array<Mat3, 4> unit_quat_rotmat_grads(const Vec4& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    std::array<Mat3, 4> d;
    d[0].m = {0, -z, y, z, 0, -x, -y, x, 0};
    d[1].m = {0, y, z, y, -2 * x, -w, z, w, -2 * x};
    d[2].m = {-2 * y, x, w, x, 0, z, -w, z, -2 * y};
    d[3].m = {-2 * z, -w, x, w, -2 * z, y, x, y, 0};
    for (auto& m : d) {
        for (double& v : m.m) {
            v *= 2.0;
        }
    }
    return d;
}

struct TileGrid {
    int tiles_x = 0, tiles_y = 0;
    int tile_size = 16;
    int width = 0, height = 0;

    TileGrid(int w, int h, int t)
        : tiles_x((w + t - 1) / t), tiles_y((h + t - 1) / t), tile_size(t), width(w), height(h) {}

    size_t count() const { return static_cast<size_t>(tiles_x) * tiles_y; }
};

} // namespace

std::vector<ProjectedGaussian> project_gaussians(const ActivatedParams& params, const Camera& cam,
                                                 const RasterizeConfig& config,
                                                 RenderStats* stats) {
    cam.validate();
    check_config(config);
    const Mat4 view = cam.view_matrix();
    const Mat3 w = view.rotation();
    const Vec3 cam_center = cam.pose.translation();
    const size_t m = params.positions.size();
    const double full_radius = std::hypot(cam.width, cam.height);

    std::vector<ProjectedGaussian> out;
    out.reserve(m);
    size_t culled = 0;
    for (size_t j = 0; j < m; ++j) {
        const Vec3 t = view.transform_point(params.positions[j]);
        if (!(t.z > config.near_plane)) {
            ++culled;
            continue;
        }
        const double opacity = params.opacities[j];
        if (config.alpha_min > 0.0 && opacity < config.alpha_min) {
            // Peak alpha already under the skip threshold: contributes nowhere.
            ++culled;
            continue;
        }

        const Mat3 sigma3 = covariance3d(params.rotations[j], params.scales[j]);

        const double inv_z = 1.0 / t.z;
        const double j00 = cam.fx * inv_z;
        const double j02 = -cam.fx * t.x * inv_z * inv_z;
        const double j11 = cam.fy * inv_z;
        const double j12 = -cam.fy * t.y * inv_z * inv_z;
        const Vec3 t0{j00 * w(0, 0) + j02 * w(2, 0), j00 * w(0, 1) + j02 * w(2, 1),
                      j00 * w(0, 2) + j02 * w(2, 2)};
        const Vec3 t1{j11 * w(1, 0) + j12 * w(2, 0), j11 * w(1, 1) + j12 * w(2, 1),
                      j11 * w(1, 2) + j12 * w(2, 2)};

        const Vec3 st0 = sigma3 * t0;
        const Vec3 st1 = sigma3 * t1;
        const double cov_a = t0.dot(st0) + config.cov_floor;
        const double cov_b = t0.dot(st1);
        const double cov_c = t1.dot(st1) + config.cov_floor;
        const double det = cov_a * cov_c - cov_b * cov_b;
        if (!(det > 0.0) || !std::isfinite(det)) {
            ++culled;
            continue;
        }

        ProjectedGaussian pg;
        pg.mean_x = cam.fx * t.x * inv_z + cam.cx;
        pg.mean_y = cam.fy * t.y * inv_z + cam.cy;
        pg.cov_a = cov_a;
        pg.cov_b = cov_b;
        pg.cov_c = cov_c;
        pg.conic_a = cov_c / det;
        pg.conic_b = -cov_b / det;
        pg.conic_c = cov_a / det;
        pg.depth = t.z;
        pg.opacity = opacity;
        pg.index = static_cast<uint32_t>(j);

        if (config.alpha_min > 0.0) {
            const double mid = 0.5 * (cov_a + cov_c);
            const double lambda_max =
                mid + std::sqrt(std::max(mid * mid - det, 0.0));
            const double span = 2.0 * std::max(std::log(opacity / config.alpha_min), 0.0);
            pg.radius = std::sqrt(span * lambda_max);
        } else {
            pg.radius = full_radius;
        }

        const Vec3 dir_raw = params.positions[j] - cam_center;
        const ShColor sc =
            sh_color(params.sh_coeffs + static_cast<size_t>(j) * GaussianScene::kShSlots * 3,
                     params.active_sh_degree, dir_raw.normalized());
        pg.color = sc.rgb;
        out.push_back(pg);
    }
    if (stats) {
        stats->input_count = m;
        stats->culled = culled;
    }
    return out;
}

RenderOutputs rasterize(const GaussianScene& scene, const Camera& cam,
                        const RasterizeConfig& config, int workers) {
    check_config(config);
    RenderOutputs out;
    out.params = activated_params(scene);
    out.projected = project_gaussians(out.params, cam, config, &out.stats);
    std::sort(out.projected.begin(), out.projected.end(),
              [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
                  if (a.depth != b.depth) return a.depth < b.depth;
                  return a.index < b.index;
              });

    const TileGrid grid(cam.width, cam.height, config.tile_size);
    out.tiles_x = grid.tiles_x;
    out.tiles_y = grid.tiles_y;
    out.tile_lists.assign(grid.count(), {});
    for (uint32_t p = 0; p < out.projected.size(); ++p) {
        const ProjectedGaussian& pg = out.projected[p];
        const double ts = config.tile_size;
        const int x0 = std::max(0, static_cast<int>(std::floor((pg.mean_x - pg.radius) / ts)));
        const int x1 = std::min(grid.tiles_x - 1,
                                static_cast<int>(std::floor((pg.mean_x + pg.radius) / ts)));
        const int y0 = std::max(0, static_cast<int>(std::floor((pg.mean_y - pg.radius) / ts)));
        const int y1 = std::min(grid.tiles_y - 1,
                                static_cast<int>(std::floor((pg.mean_y + pg.radius) / ts)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                out.tile_lists[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(p);
            }
        }
    }

    const size_t pixel_count = static_cast<size_t>(cam.width) * cam.height;
    out.image = Image(cam.width, cam.height);
    out.transmittance.assign(pixel_count, 1.0);
    out.contributor_count.assign(pixel_count, 0);
    out.advance.assign(pixel_count, 0);

    parallel_chunks(grid.count(), resolve_workers(workers), [&](int, size_t begin, size_t end) {
        for (size_t tile = begin; tile < end; ++tile) {
            const auto& list = out.tile_lists[tile];
            const int tx = static_cast<int>(tile % grid.tiles_x);
            const int ty = static_cast<int>(tile / grid.tiles_x);
            const int px0 = tx * config.tile_size;
            const int py0 = ty * config.tile_size;
            const int px1 = std::min(px0 + config.tile_size, cam.width);
            const int py1 = std::min(py0 + config.tile_size, cam.height);
            for (int py = py0; py < py1; ++py) {
                for (int px = px0; px < px1; ++px) {
                    const double cxp = px + 0.5;
                    const double cyp = py + 0.5;
                    double t_cur = 1.0;
                    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
                    uint32_t adv = 0;
                    uint32_t contrib = 0;
                    for (uint32_t pos = 0; pos < list.size(); ++pos) {
                        const ProjectedGaussian& pg = out.projected[list[pos]];
                        const double dx = cxp - pg.mean_x;
                        const double dy = cyp - pg.mean_y;
                        const double power = -0.5 * (pg.conic_a * dx * dx + pg.conic_c * dy * dy) -
                                             pg.conic_b * dx * dy;
                        if (power > 0.0) continue;
                        const double alpha_raw = pg.opacity * std::exp(power);
                        if (!std::isfinite(alpha_raw)) {
                            throw numeric_fault("non-finite alpha at gaussian " +
                                                std::to_string(pg.index) + ", pixel (" +
                                                std::to_string(px) + "," + std::to_string(py) +
                                                ")");
                        }
                        if (alpha_raw < config.alpha_min) continue;
                        const double alpha = std::min(alpha_raw, config.alpha_clamp);
                        const double weight = alpha * t_cur;
                        c0 += pg.color.x * weight;
                        c1 += pg.color.y * weight;
                        c2 += pg.color.z * weight;
                        t_cur *= 1.0 - alpha;
                        adv = pos + 1;
                        ++contrib;
                        if (config.early_termination && t_cur < config.termination_threshold) {
                            break;
                        }
                    }
                    const size_t pidx = static_cast<size_t>(py) * cam.width + px;
                    out.image.data[pidx * 3 + 0] = c0;
                    out.image.data[pidx * 3 + 1] = c1;
                    out.image.data[pidx * 3 + 2] = c2;
                    out.transmittance[pidx] = t_cur;
                    out.contributor_count[pidx] = contrib;
                    out.advance[pidx] = adv;
                }
            }
        }
    });

    const uint64_t total_contrib =
        std::accumulate(out.contributor_count.begin(), out.contributor_count.end(), uint64_t{0});
    out.stats.mean_contributors_per_pixel =
        pixel_count > 0 ? static_cast<double>(total_contrib) / static_cast<double>(pixel_count)
                        : 0.0;

    out.config = config;
    out.camera = cam;
    out.scene = &scene;
    out.scene_revision = scene.revision;
    return out;
}

GradientSet rasterize_backward(const RenderOutputs& outputs, const Image& dL_dimage,
                               int workers) {
    if (outputs.scene == nullptr) {
        throw stale_state_error("render outputs carry no scene reference");
    }
    if (outputs.scene->revision != outputs.scene_revision) {
        throw stale_state_error("scene mutated since the forward pass");
    }
    if (!dL_dimage.same_shape(outputs.image)) {
        throw invalid_argument_error("cotangent image shape does not match the render");
    }
    for (double v : dL_dimage.data) {
        if (!std::isfinite(v)) {
            throw invalid_argument_error("cotangent image contains non-finite values");
        }
    }

    const GaussianScene& scene = *outputs.scene;
    GradientSet grads = GradientSet::zeros_like(scene);
    const size_t n = outputs.projected.size();
    if (n == 0) {
        return grads;
    }

    const Camera& cam = outputs.camera;
    const RasterizeConfig& config = outputs.config;
    const TileGrid grid(cam.width, cam.height, config.tile_size);
    const int worker_count = resolve_workers(workers);

    // Stage 1: per-pixel reverse compositing gathers splat-level gradients.
    // Layout per projected gaussian: [0..3) color, [3] activated opacity,
    // [4..7) conic (a, b, c), [7] mean_x, [8] mean_y.
    constexpr size_t kSlots = 9;
    std::vector<std::vector<double>> partials(static_cast<size_t>(worker_count));
    parallel_chunks(grid.count(), worker_count, [&](int worker, size_t begin, size_t end) {
        auto& acc = partials[static_cast<size_t>(worker)];
        acc.assign(n * kSlots, 0.0);
        for (size_t tile = begin; tile < end; ++tile) {
            const auto& list = outputs.tile_lists[tile];
            if (list.empty()) continue;
            const int tx = static_cast<int>(tile % grid.tiles_x);
            const int ty = static_cast<int>(tile / grid.tiles_x);
            const int px0 = tx * config.tile_size;
            const int py0 = ty * config.tile_size;
            const int px1 = std::min(px0 + config.tile_size, cam.width);
            const int py1 = std::min(py0 + config.tile_size, cam.height);
            for (int py = py0; py < py1; ++py) {
                for (int px = px0; px < px1; ++px) {
                    const size_t pidx = static_cast<size_t>(py) * cam.width + px;
                    const uint32_t adv = outputs.advance[pidx];
                    if (adv == 0) continue;
                    const double wr = dL_dimage.data[pidx * 3 + 0];
                    const double wg = dL_dimage.data[pidx * 3 + 1];
                    const double wb = dL_dimage.data[pidx * 3 + 2];
                    if (wr == 0.0 && wg == 0.0 && wb == 0.0) continue;
                    const double cxp = px + 0.5;
                    const double cyp = py + 0.5;
                    double t_cur = outputs.transmittance[pidx];
                    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
                    for (uint32_t pos = adv; pos-- > 0;) {
                        const uint32_t pg_slot = outputs.tile_lists[tile][pos];
                        const ProjectedGaussian& pg = outputs.projected[pg_slot];
                        const double dx = cxp - pg.mean_x;
                        const double dy = cyp - pg.mean_y;
                        const double power =
                            -0.5 * (pg.conic_a * dx * dx + pg.conic_c * dy * dy) -
                            pg.conic_b * dx * dy;
                        if (power > 0.0) continue;
                        const double g = std::exp(power);
                        const double alpha_raw = pg.opacity * g;
                        if (alpha_raw < config.alpha_min) continue;
                        const bool clamped = alpha_raw > config.alpha_clamp;
                        const double alpha = clamped ? config.alpha_clamp : alpha_raw;
                        const double t_before = t_cur / (1.0 - alpha);
                        double* slot = acc.data() + static_cast<size_t>(pg_slot) * kSlots;
                        const double color_w = alpha * t_before;
                        slot[0] += wr * color_w;
                        slot[1] += wg * color_w;
                        slot[2] += wb * color_w;
                        const double dalpha =
                            t_before * (wr * (pg.color.x - b0) + wg * (pg.color.y - b1) +
                                        wb * (pg.color.z - b2));
                        if (!clamped) {
                            slot[3] += dalpha * g;
                            const double dpower = dalpha * pg.opacity * g;
                            slot[4] += dpower * (-0.5 * dx * dx);
                            slot[5] += dpower * (-dx * dy);
                            slot[6] += dpower * (-0.5 * dy * dy);
                            slot[7] += dpower * (pg.conic_a * dx + pg.conic_b * dy);
                            slot[8] += dpower * (pg.conic_b * dx + pg.conic_c * dy);
                        }
                        b0 = alpha * pg.color.x + (1.0 - alpha) * b0;
                        b1 = alpha * pg.color.y + (1.0 - alpha) * b1;
                        b2 = alpha * pg.color.z + (1.0 - alpha) * b2;
                        t_cur = t_before;
                    }
                }
            }
        }
    });

    std::vector<double> acc(n * kSlots, 0.0);
    for (const auto& part : partials) {
        if (part.empty()) continue;
        for (size_t i = 0; i < acc.size(); ++i) {
            acc[i] += part[i];
        }
    }

    // Stage 2: chain splat-level gradients through projection, activation and
    // SH color. Each projected entry owns a distinct scene index, so the
    // writes are disjoint and parallelize cleanly.
    const Mat4 view = cam.view_matrix();
    const Mat3 w3 = view.rotation();
    const Vec3 cam_center = cam.pose.translation();
    const ActivatedParams& params = outputs.params;

    parallel_chunks(n, worker_count, [&](int, size_t begin, size_t end) {
        double basis[25];
        double basis_jac[25 * 3];
        for (size_t p = begin; p < end; ++p) {
            const ProjectedGaussian& pg = outputs.projected[p];
            const size_t j = pg.index;
            const double* slot = acc.data() + p * kSlots;
            const Vec3 dcol{slot[0], slot[1], slot[2]};
            const double d_opacity = slot[3];
            const double g_ca = slot[4], g_cb = slot[5], g_cc = slot[6];
            const double dmx = slot[7], dmy = slot[8];

            // Opacity logit.
            const double o = params.opacities[j];
            grads.opacity_logits[j] += d_opacity * o * (1.0 - o);

            // Color: SH coefficients and the normalized view direction.
            Vec3 dmu{};
            {
                const Vec3 dir_raw = params.positions[j] - cam_center;
                const double rlen = dir_raw.norm();
                const Vec3 dhat = dir_raw / rlen;
                const int degree = params.active_sh_degree;
                const int terms = sh_count(degree);
                sh_basis(dhat, degree, basis);
                sh_basis_jacobian(dhat, degree, basis_jac);
                const float* coeffs =
                    params.sh_coeffs + j * static_cast<size_t>(GaussianScene::kShSlots) * 3;
                Vec3 ddir{};
                for (int c = 0; c < 3; ++c) {
                    double pre = 0.5;
                    for (int k = 0; k < terms; ++k) {
                        pre += static_cast<double>(coeffs[k * 3 + c]) * basis[k];
                    }
                    if (pre < 0.0) continue; // clamped channel: flat region
                    const double dc = dcol[c];
                    if (dc == 0.0) continue;
                    for (int k = 0; k < terms; ++k) {
                        grads.sh_coeffs[(j * GaussianScene::kShSlots + k) * 3 + c] +=
                            dc * basis[k];
                        const double ck = coeffs[k * 3 + c];
                        ddir.x += dc * ck * basis_jac[k * 3 + 0];
                        ddir.y += dc * ck * basis_jac[k * 3 + 1];
                        ddir.z += dc * ck * basis_jac[k * 3 + 2];
                    }
                }
                // Through normalization: (I - dhat dhat^T) / rlen.
                dmu += (ddir - dhat * dhat.dot(ddir)) / rlen;
            }

            // Recompute the forward projection intermediates.
            const Vec3 t = view.transform_point(params.positions[j]);
            const double inv_z = 1.0 / t.z;
            const double j00 = cam.fx * inv_z;
            const double j02 = -cam.fx * t.x * inv_z * inv_z;
            const double j11 = cam.fy * inv_z;
            const double j12 = -cam.fy * t.y * inv_z * inv_z;
            const Vec3 t0{j00 * w3(0, 0) + j02 * w3(2, 0), j00 * w3(0, 1) + j02 * w3(2, 1),
                          j00 * w3(0, 2) + j02 * w3(2, 2)};
            const Vec3 t1{j11 * w3(1, 0) + j12 * w3(2, 0), j11 * w3(1, 1) + j12 * w3(2, 1),
                          j11 * w3(1, 2) + j12 * w3(2, 2)};
            const Vec4 uq = params.rotations[j];
            const Vec3 scale = params.scales[j];
            const Mat3 rot = quat_to_rotmat(uq);
            Mat3 nmat = rot;
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 3; ++k) {
                    nmat(i, k) *= scale[k];
                }
            }
            const Mat3 sigma3 = nmat * nmat.transposed();

            // 2D mean -> view position.
            double dtx = dmx * cam.fx * inv_z;
            double dty = dmy * cam.fy * inv_z;
            double dtz = -dmx * cam.fx * t.x * inv_z * inv_z - dmy * cam.fy * t.y * inv_z * inv_z;

            // Conic -> screen covariance, in the half-encoded matrix form:
            // Gcov = -conic * Gconic * conic.
            const double ca = pg.conic_a, cb = pg.conic_b, cc = pg.conic_c;
            const double q00 = g_ca, q01 = 0.5 * g_cb, q11 = g_cc;
            // X = conic * Gconic
            const double x00 = ca * q00 + cb * q01;
            const double x01 = ca * q01 + cb * q11;
            const double x10 = cb * q00 + cc * q01;
            const double x11 = cb * q01 + cc * q11;
            // Gcov = -X * conic (symmetric)
            const double gc00 = -(x00 * ca + x01 * cb);
            const double gc01 = -(x00 * cb + x01 * cc);
            const double gc11 = -(x10 * cb + x11 * cc);

            // Screen covariance -> T rows (dT = 2 Gcov T Sigma3).
            const Vec3 st0 = sigma3 * t0;
            const Vec3 st1 = sigma3 * t1;
            const Vec3 dT0 = (st0 * gc00 + st1 * gc01) * 2.0;
            const Vec3 dT1 = (st0 * gc01 + st1 * gc11) * 2.0;

            // T = J W: dJ entries against W rows.
            const Vec3 w0{w3(0, 0), w3(0, 1), w3(0, 2)};
            const Vec3 w1{w3(1, 0), w3(1, 1), w3(1, 2)};
            const Vec3 w2{w3(2, 0), w3(2, 1), w3(2, 2)};
            const double dj00 = dT0.dot(w0);
            const double dj02 = dT0.dot(w2);
            const double dj11 = dT1.dot(w1);
            const double dj12 = dT1.dot(w2);

            // J entries against the view-space position.
            const double inv_z2 = inv_z * inv_z;
            const double inv_z3 = inv_z2 * inv_z;
            dtx += dj02 * (-cam.fx * inv_z2);
            dty += dj12 * (-cam.fy * inv_z2);
            dtz += dj00 * (-cam.fx * inv_z2) + dj11 * (-cam.fy * inv_z2) +
                   dj02 * (2.0 * cam.fx * t.x * inv_z3) + dj12 * (2.0 * cam.fy * t.y * inv_z3);

            // View position -> world position.
            dmu += w3.transpose_times({dtx, dty, dtz});
            grads.positions[j * 3 + 0] += dmu.x;
            grads.positions[j * 3 + 1] += dmu.y;
            grads.positions[j * 3 + 2] += dmu.z;

            // Screen covariance -> Sigma3: G3 = T^T Gcov T.
            Mat3 g3;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    g3(r, c) = t0[r] * (gc00 * t0[c] + gc01 * t1[c]) +
                               t1[r] * (gc01 * t0[c] + gc11 * t1[c]);
                }
            }
            // Sigma3 = N N^T: dN = 2 G3 N; N = R diag(scale).
            Mat3 dn;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    dn(r, c) = 2.0 * (g3(r, 0) * nmat(0, c) + g3(r, 1) * nmat(1, c) +
                                      g3(r, 2) * nmat(2, c));
                }
            }
            for (int k = 0; k < 3; ++k) {
                double ds = 0.0;
                for (int i = 0; i < 3; ++i) {
                    ds += rot(i, k) * dn(i, k);
                }
                grads.log_scales[j * 3 + k] += ds * scale[k];
            }
            // dR = dN diag(scale); contract with dR/dq of the unit quaternion,
            // then project through q/|q|.
            const auto dr_dq = unit_quat_rotmat_grads(uq);
            Vec4 dq_hat{0.0, 0.0, 0.0, 0.0};
            double* dq_components[4] = {&dq_hat.w, &dq_hat.x, &dq_hat.y, &dq_hat.z};
            for (int k = 0; k < 4; ++k) {
                double s = 0.0;
                for (int r = 0; r < 3; ++r) {
                    for (int c = 0; c < 3; ++c) {
                        s += dn(r, c) * scale[c] * dr_dq[k](r, c);
                    }
                }
                *dq_components[k] = s;
            }
            const Vec4 q_raw{scene.rotations[j * 4 + 0], scene.rotations[j * 4 + 1],
                             scene.rotations[j * 4 + 2], scene.rotations[j * 4 + 3]};
            const double qn = q_raw.norm();
            const double qdot = uq.dot(dq_hat);
            grads.rotations[j * 4 + 0] += (dq_hat.w - uq.w * qdot) / qn;
            grads.rotations[j * 4 + 1] += (dq_hat.x - uq.x * qdot) / qn;
            grads.rotations[j * 4 + 2] += (dq_hat.y - uq.y * qdot) / qn;
            grads.rotations[j * 4 + 3] += (dq_hat.z - uq.z * qdot) / qn;
        }
    });

    return grads;
}

Image rasterize_reference(const GaussianScene& scene, const Camera& cam,
                          const RasterizeConfig& config) {
    cam.validate();
    check_config(config);
    const ActivatedParams params = activated_params(scene);
    const Mat4 view = cam.view_matrix();
    const Vec3 cam_center = cam.pose.translation();

    struct Splat {
        double mean_x, mean_y;
        double a, b, c, det;
        double depth;
        Vec3 color;
        double opacity;
    };
    std::vector<Splat> splats;
    splats.reserve(params.positions.size());
    for (size_t j = 0; j < params.positions.size(); ++j) {
        const Vec3& mu = params.positions[j];
        double tv[3];
        for (int r = 0; r < 3; ++r) {
            tv[r] = view(r, 0) * mu.x + view(r, 1) * mu.y + view(r, 2) * mu.z + view(r, 3);
        }
        if (!(tv[2] > config.near_plane)) continue;

        // 3D covariance, written out element by element.
        const Mat3 rot = quat_to_rotmat(params.rotations[j]);
        double cov3[3][3];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) {
                    s += rot(r, k) * params.scales[j][k] * params.scales[j][k] * rot(c, k);
                }
                cov3[r][c] = s;
            }
        }
        const double jrow0[3] = {cam.fx / tv[2], 0.0, -cam.fx * tv[0] / (tv[2] * tv[2])};
        const double jrow1[3] = {0.0, cam.fy / tv[2], -cam.fy * tv[1] / (tv[2] * tv[2])};
        double trow0[3], trow1[3];
        for (int c = 0; c < 3; ++c) {
            trow0[c] = jrow0[0] * view(0, c) + jrow0[1] * view(1, c) + jrow0[2] * view(2, c);
            trow1[c] = jrow1[0] * view(0, c) + jrow1[1] * view(1, c) + jrow1[2] * view(2, c);
        }
        double a = config.cov_floor, b = 0.0, c = config.cov_floor;
        for (int r = 0; r < 3; ++r) {
            for (int s = 0; s < 3; ++s) {
                a += trow0[r] * cov3[r][s] * trow0[s];
                b += trow0[r] * cov3[r][s] * trow1[s];
                c += trow1[r] * cov3[r][s] * trow1[s];
            }
        }
        const double det = a * c - b * b;
        if (!(det > 0.0)) continue;
        if (config.alpha_min > 0.0 && params.opacities[j] < config.alpha_min) continue;

        Splat sp;
        sp.mean_x = cam.fx * tv[0] / tv[2] + cam.cx;
        sp.mean_y = cam.fy * tv[1] / tv[2] + cam.cy;
        sp.a = a;
        sp.b = b;
        sp.c = c;
        sp.det = det;
        sp.depth = tv[2];
        sp.opacity = params.opacities[j];
        sp.color = sh_color(params.sh_coeffs + j * GaussianScene::kShSlots * 3,
                            params.active_sh_degree, (mu - cam_center).normalized())
                       .rgb;
        splats.push_back(sp);
    }
    std::stable_sort(splats.begin(), splats.end(),
                     [](const Splat& a, const Splat& b) { return a.depth < b.depth; });

    Image image(cam.width, cam.height);
    for (int py = 0; py < cam.height; ++py) {
        for (int px = 0; px < cam.width; ++px) {
            double t_cur = 1.0;
            double acc[3] = {0.0, 0.0, 0.0};
            for (const Splat& sp : splats) {
                const double dx = px + 0.5 - sp.mean_x;
                const double dy = py + 0.5 - sp.mean_y;
                const double maha = (sp.c * dx * dx - 2.0 * sp.b * dx * dy + sp.a * dy * dy) /
                                    sp.det;
                if (maha < 0.0) continue;
                const double alpha_raw = sp.opacity * std::exp(-0.5 * maha);
                if (alpha_raw < config.alpha_min) continue;
                const double alpha = std::min(alpha_raw, config.alpha_clamp);
                acc[0] += sp.color.x * alpha * t_cur;
                acc[1] += sp.color.y * alpha * t_cur;
                acc[2] += sp.color.z * alpha * t_cur;
                t_cur *= 1.0 - alpha;
            }
            for (int ch = 0; ch < 3; ++ch) {
                image.at(px, py, ch) = acc[ch];
            }
        }
    }
    return image;
}

} // namespace smokegs
