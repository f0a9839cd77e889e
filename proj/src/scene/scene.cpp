// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/scene/scene.hpp"

#include "smokegs/core/binio.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/sh/sh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace smokegs {
namespace {

constexpr double kShDC = 0.28209479177387814;

bool finite_all(const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

bool finite_all(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

MediumMLPWeights MediumMLPWeights::zeros() {
    MediumMLPWeights w;
    w.w1.assign(static_cast<size_t>(kHidden) * kIn, 0.0f);
    w.b1.assign(kHidden, 0.0f);
    w.w2.assign(static_cast<size_t>(kOut) * kHidden, 0.0f);
    w.b2.assign(kOut, 0.0f);
    return w;
}

MediumMLPWeights MediumMLPWeights::init(Rng& rng) {
    MediumMLPWeights w = zeros();
    const double r1 = std::sqrt(1.0 / kIn);
    for (float& v : w.w1) {
        v = static_cast<float>(rng.uniform(-r1, r1));
    }
    const double r2 = std::sqrt(1.0 / kHidden);
    for (float& v : w.w2) {
        v = static_cast<float>(rng.uniform(-r2, r2));
    }
    return w;
}

bool MediumMLPWeights::all_finite() const {
    return finite_all(w1) && finite_all(b1) && finite_all(w2) && finite_all(b2);
}

void GaussianScene::raise_sh_degree(int degree) {
    if (degree < 0 || degree > 3) {
        throw invalid_argument_error("active_sh_degree must stay in [0, 3]");
    }
    if (degree > active_sh_degree) {
        active_sh_degree = degree;
        bump_revision();
    }
}

GradientSet GradientSet::zeros_like(const GaussianScene& scene) {
    GradientSet g;
    g.positions.assign(scene.positions.size(), 0.0);
    g.rotations.assign(scene.rotations.size(), 0.0);
    g.log_scales.assign(scene.log_scales.size(), 0.0);
    g.opacity_logits.assign(scene.opacity_logits.size(), 0.0);
    g.sh_coeffs.assign(scene.sh_coeffs.size(), 0.0);
    g.w1.assign(scene.medium.w1.size(), 0.0);
    g.b1.assign(scene.medium.b1.size(), 0.0);
    g.w2.assign(scene.medium.w2.size(), 0.0);
    g.b2.assign(scene.medium.b2.size(), 0.0);
    return g;
}

void GradientSet::zero() {
    for (auto* v : {&positions, &rotations, &log_scales, &opacity_logits, &sh_coeffs, &w1, &b1,
                    &w2, &b2}) {
        std::fill(v->begin(), v->end(), 0.0);
    }
}

void GradientSet::add(const GradientSet& other) {
    auto add_into = [](std::vector<double>& dst, const std::vector<double>& src) {
        if (dst.size() != src.size()) {
            throw invalid_argument_error("gradient set shape mismatch in merge");
        }
        for (size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    };
    add_into(positions, other.positions);
    add_into(rotations, other.rotations);
    add_into(log_scales, other.log_scales);
    add_into(opacity_logits, other.opacity_logits);
    add_into(sh_coeffs, other.sh_coeffs);
    add_into(w1, other.w1);
    add_into(b1, other.b1);
    add_into(w2, other.w2);
    add_into(b2, other.b2);
}

bool GradientSet::all_finite() const {
    return finite_all(positions) && finite_all(rotations) && finite_all(log_scales) &&
           finite_all(opacity_logits) && finite_all(sh_coeffs) && finite_all(w1) &&
           finite_all(b1) && finite_all(w2) && finite_all(b2);
}

ActivatedParams activated_params(const GaussianScene& scene) {
    const size_t m = scene.count();
    if (m == 0) {
        throw invalid_argument_error("scene has no gaussians");
    }
    ActivatedParams out;
    out.positions.resize(m);
    out.rotations.resize(m);
    out.scales.resize(m);
    out.opacities.resize(m);
    out.sh_coeffs = scene.sh_coeffs.data();
    out.active_sh_degree = scene.active_sh_degree;

    for (size_t j = 0; j < m; ++j) {
        for (int a = 0; a < 3; ++a) {
            const float p = scene.positions[j * 3 + a];
            const float s = scene.log_scales[j * 3 + a];
            if (!std::isfinite(p) || !std::isfinite(s)) {
                throw numeric_fault("non-finite gaussian parameter at index " + std::to_string(j));
            }
            out.positions[j][a] = p;
            out.scales[j][a] = std::exp(static_cast<double>(s));
        }
        const Vec4 q{scene.rotations[j * 4 + 0], scene.rotations[j * 4 + 1],
                     scene.rotations[j * 4 + 2], scene.rotations[j * 4 + 3]};
        const double qn = q.norm();
        if (!std::isfinite(qn) || qn <= 0.0) {
            throw numeric_fault("degenerate quaternion at index " + std::to_string(j));
        }
        out.rotations[j] = {q.w / qn, q.x / qn, q.y / qn, q.z / qn};
        const float logit_val = scene.opacity_logits[j];
        if (!std::isfinite(logit_val)) {
            throw numeric_fault("non-finite opacity logit at index " + std::to_string(j));
        }
        out.opacities[j] = sigmoid(logit_val);
    }
    for (float c : scene.sh_coeffs) {
        if (!std::isfinite(c)) {
            throw numeric_fault("non-finite sh coefficient");
        }
    }
    return out;
}

double mean_nearest_neighbor_spacing(const std::vector<Vec3>& points) {
    const size_t n = points.size();
    if (n < 2) {
        throw invalid_argument_error("nearest-neighbor spacing needs at least 2 points");
    }

    if (n <= 256) {
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const Vec3 d = points[i] - points[j];
                best = std::min(best, d.dot(d));
            }
            sum += std::sqrt(best);
        }
        return sum / static_cast<double>(n);
    }

    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    const Vec3 ext = hi - lo;
    const double volume = std::max(ext.x, 1e-12) * std::max(ext.y, 1e-12) * std::max(ext.z, 1e-12);
    const double cell = std::max(std::cbrt(volume / static_cast<double>(n)), 1e-12);

    auto cell_of = [&](const Vec3& p, int a) {
        return static_cast<int64_t>(std::floor((p[a] - lo[a]) / cell));
    };
    auto key_of = [](int64_t ix, int64_t iy, int64_t iz) {
        return (static_cast<uint64_t>(ix & 0x1fffff) << 42) |
               (static_cast<uint64_t>(iy & 0x1fffff) << 21) |
               static_cast<uint64_t>(iz & 0x1fffff);
    };

    std::unordered_map<uint64_t, std::vector<uint32_t>> grid;
    grid.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        grid[key_of(cell_of(points[i], 0), cell_of(points[i], 1), cell_of(points[i], 2))]
            .push_back(static_cast<uint32_t>(i));
    }

    const int64_t max_shell =
        static_cast<int64_t>(std::ceil(std::max({ext.x, ext.y, ext.z}) / cell)) + 1;

    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Vec3& p = points[i];
        const int64_t cx = cell_of(p, 0), cy = cell_of(p, 1), cz = cell_of(p, 2);
        double best = std::numeric_limits<double>::infinity();
        for (int64_t r = 0; r <= max_shell; ++r) {
            // Scan the Chebyshev shell at radius r.
            for (int64_t dx = -r; dx <= r; ++dx) {
                for (int64_t dy = -r; dy <= r; ++dy) {
                    for (int64_t dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        auto it = grid.find(key_of(cx + dx, cy + dy, cz + dz));
                        if (it == grid.end()) continue;
                        for (uint32_t j : it->second) {
                            if (j == i) continue;
                            const Vec3 d = p - points[j];
                            best = std::min(best, d.dot(d));
                        }
                    }
                }
            }
            // Any point beyond shell r lies at distance > r*cell from p.
            if (best <= static_cast<double>(r) * cell * static_cast<double>(r) * cell) {
                break;
            }
        }
        sum += std::sqrt(best);
    }
    return sum / static_cast<double>(n);
}

namespace {

GaussianScene build_scene(const std::vector<Vec3>& positions, const std::vector<Vec3>& dc_colors,
                          Rng& rng, const SceneInitConfig& config) {
    const size_t m = positions.size();
    GaussianScene scene;
    scene.positions.resize(m * 3);
    scene.rotations.assign(m * 4, 0.0f);
    scene.log_scales.resize(m * 3);
    scene.opacity_logits.resize(m);
    scene.sh_coeffs.assign(m * GaussianScene::kShSlots * 3, 0.0f);

    // A lone gaussian has no neighbor; one scene unit is an arbitrary but
    // stable stand-in.
    const double spacing = m >= 2 ? mean_nearest_neighbor_spacing(positions) : 1.0;
    const double extent = std::max(config.scale_fraction * spacing, 1e-6);
    const float log_scale = static_cast<float>(std::log(extent));
    const float opacity_logit = static_cast<float>(logit(config.init_opacity));

    for (size_t j = 0; j < m; ++j) {
        for (int a = 0; a < 3; ++a) {
            scene.positions[j * 3 + a] = static_cast<float>(positions[j][a]);
            scene.log_scales[j * 3 + a] = log_scale;
        }
        scene.rotations[j * 4 + 0] = 1.0f;
        scene.opacity_logits[j] = opacity_logit;
        for (int c = 0; c < 3; ++c) {
            scene.sh_coeffs[(j * GaussianScene::kShSlots) * 3 + c] =
                static_cast<float>((dc_colors[j][c] - 0.5) / kShDC);
        }
    }
    scene.medium = MediumMLPWeights::init(rng);
    scene.active_sh_degree = 0;
    return scene;
}

} // namespace

GaussianScene init_scene(size_t count, const Bounds& bounds, uint64_t seed,
                         const SceneInitConfig& config) {
    if (count == 0) {
        throw invalid_argument_error("scene must hold at least one gaussian");
    }
    if (!(bounds.volume() > 0.0)) {
        throw invalid_argument_error("scene bounds must have positive volume");
    }
    if (!(config.init_opacity > 0.0) || !(config.init_opacity < 1.0)) {
        throw invalid_argument_error("initial opacity must lie in (0, 1)");
    }
    Rng rng(seed);
    std::vector<Vec3> positions(count);
    for (Vec3& p : positions) {
        p.x = rng.uniform(bounds.min.x, bounds.max.x);
        p.y = rng.uniform(bounds.min.y, bounds.max.y);
        p.z = rng.uniform(bounds.min.z, bounds.max.z);
    }
    std::vector<Vec3> colors(count, Vec3{config.init_gray, config.init_gray, config.init_gray});
    return build_scene(positions, colors, rng, config);
}

GaussianScene init_scene_from_points(const std::vector<Vec3>& points,
                                     const std::vector<Vec3>& colors, uint64_t seed,
                                     const SceneInitConfig& config) {
    if (points.empty()) {
        throw invalid_argument_error("point seed list is empty");
    }
    if (points.size() != colors.size()) {
        throw invalid_argument_error("point and color counts differ");
    }
    Rng rng(seed);
    return build_scene(points, colors, rng, config);
}

namespace {

size_t checked_scene_floats(uint64_t m) {
    // 3 + 4 + 3 + 1 + 48 floats per gaussian.
    if (m == 0) {
        throw shape_mismatch_error("checkpoint declares zero gaussians");
    }
    if (m > (1ull << 32)) {
        throw shape_mismatch_error("checkpoint declares an implausible gaussian count");
    }
    return static_cast<size_t>(m) * 59;
}

} // namespace

void save_checkpoint(const GaussianScene& scene, const std::string& path) {
    const size_t m = scene.count();
    if (m == 0 || scene.positions.size() != m * 3 || scene.rotations.size() != m * 4 ||
        scene.log_scales.size() != m * 3 ||
        scene.sh_coeffs.size() != m * GaussianScene::kShSlots * 3) {
        throw invalid_argument_error("scene arrays are inconsistent; refusing to serialize");
    }

    std::string body;
    body.reserve(m * 59 * sizeof(float) + scene.medium.param_count() * sizeof(float));
    binio::append_f32_array(body, scene.positions);
    binio::append_f32_array(body, scene.rotations);
    binio::append_f32_array(body, scene.log_scales);
    binio::append_f32_array(body, scene.opacity_logits);
    binio::append_f32_array(body, scene.sh_coeffs);
    binio::append_f32_array(body, scene.medium.w1);
    binio::append_f32_array(body, scene.medium.b1);
    binio::append_f32_array(body, scene.medium.w2);
    binio::append_f32_array(body, scene.medium.b2);

    std::string file;
    file.reserve(body.size() + 28);
    file.append("SMGS", 4);
    binio::append_u32(file, kCheckpointVersion);
    binio::append_u64(file, m);
    binio::append_u32(file, GaussianScene::kShSlots);
    binio::append_u32(file, static_cast<uint32_t>(scene.active_sh_degree));
    file += body;
    binio::append_u32(file, binio::crc32_bytes(body.data(), body.size()));

    binio::write_file(path, file);
}

GaussianScene load_checkpoint(const std::string& path) {
    const std::string file = binio::read_file(path);

    binio::Reader r(file.data(), file.size());
    r.magic("SMGS", "scene checkpoint");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw version_mismatch_error("unsupported checkpoint version " + std::to_string(version));
    }
    const uint64_t m64 = r.u64();
    const uint32_t k = r.u32();
    const uint32_t degree = r.u32();
    if (k != GaussianScene::kShSlots) {
        throw shape_mismatch_error("checkpoint declares K=" + std::to_string(k) +
                                   ", expected 16");
    }
    if (degree > 3) {
        throw shape_mismatch_error("checkpoint declares active_sh_degree > 3");
    }
    const size_t scene_floats = checked_scene_floats(m64);
    const size_t m = static_cast<size_t>(m64);

    const size_t body_offset = r.offset();
    GaussianScene scene;
    r.f32_array(scene.positions, m * 3);
    r.f32_array(scene.rotations, m * 4);
    r.f32_array(scene.log_scales, m * 3);
    r.f32_array(scene.opacity_logits, m);
    r.f32_array(scene.sh_coeffs, m * GaussianScene::kShSlots * 3);
    scene.medium = MediumMLPWeights::zeros();
    r.f32_array(scene.medium.w1, scene.medium.w1.size());
    r.f32_array(scene.medium.b1, scene.medium.b1.size());
    r.f32_array(scene.medium.w2, scene.medium.w2.size());
    r.f32_array(scene.medium.b2, scene.medium.b2.size());
    scene.active_sh_degree = static_cast<int>(degree);

    const size_t body_size = scene_floats * sizeof(float) +
                             scene.medium.param_count() * sizeof(float);
    const uint32_t stored_crc = r.u32();
    if (r.remaining() != 0) {
        throw decode_error("checkpoint has trailing bytes");
    }
    const uint32_t actual_crc = binio::crc32_bytes(r.at(body_offset), body_size);
    if (stored_crc != actual_crc) {
        throw crc_mismatch_error("checkpoint body CRC mismatch");
    }
    return scene;
}

} // namespace smokegs
