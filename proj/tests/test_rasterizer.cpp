// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "smokegs/camera/camera.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/core/types.hpp"
#include "smokegs/rasterizer/rasterizer.hpp"
#include "smokegs/scene/scene.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

using namespace smokegs;

namespace {

constexpr double kY00 = 0.28209479177387814;

Camera scene_camera(int width, int height) {
    const double f = 1.1 * width;
    return Camera::look_at({0.0, 0.0, 3.0}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, width, height, f, f,
                           0.5 * width, 0.5 * height);
}

// Anisotropic gaussians with colors kept strictly inside (0, 1) and opacities
// under the clamp, so every configuration below sits on smooth compositing.
GaussianScene random_scene(uint64_t seed, size_t count) {
    GaussianScene scene;
    Rng rng(seed);
    scene.positions.resize(count * 3);
    scene.rotations.resize(count * 4);
    scene.log_scales.resize(count * 3);
    scene.opacity_logits.resize(count);
    scene.sh_coeffs.assign(count * GaussianScene::kShSlots * 3, 0.0f);
    scene.medium = MediumMLPWeights::zeros();
    scene.active_sh_degree = 3;
    for (size_t j = 0; j < count; ++j) {
        for (int a = 0; a < 3; ++a) {
            scene.positions[j * 3 + a] = static_cast<float>(rng.uniform(-0.8, 0.8));
        }
        for (int a = 0; a < 4; ++a) {
            scene.rotations[j * 4 + a] = static_cast<float>(1.3 * rng.normal());
        }
        for (int a = 0; a < 3; ++a) {
            scene.log_scales[j * 3 + a] =
                static_cast<float>(std::log(rng.uniform(0.06, 0.35)));
        }
        scene.opacity_logits[j] = static_cast<float>(rng.uniform(-2.0, 1.8));
        float* sh = scene.sh_coeffs.data() + j * GaussianScene::kShSlots * 3;
        for (int ch = 0; ch < 3; ++ch) {
            sh[ch] = static_cast<float>((rng.uniform(0.3, 0.9) - 0.5) / kY00);
        }
        for (int k = 1; k < GaussianScene::kShSlots; ++k) {
            for (int ch = 0; ch < 3; ++ch) {
                sh[k * 3 + ch] = static_cast<float>(rng.uniform(-0.02, 0.02));
            }
        }
    }
    return scene;
}

// Two-splat scene on the optical axis; `front_first` controls which one sits
// nearer the scene_camera eye at (0, 0, 3).
GaussianScene two_splats(bool front_first) {
    GaussianScene scene;
    scene.positions = {0.0f, 0.0f, 1.0f, 0.0f, 0.0f, -1.0f};
    if (!front_first) {
        std::swap(scene.positions[2], scene.positions[5]);
    }
    scene.rotations = {1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 0.0f};
    const float ls = static_cast<float>(std::log(0.25));
    scene.log_scales = {ls, ls, ls, ls, ls, ls};
    scene.opacity_logits = {static_cast<float>(logit(0.95)), static_cast<float>(logit(0.9))};
    scene.sh_coeffs.assign(2 * GaussianScene::kShSlots * 3, 0.0f);
    // First gaussian red, second green.
    scene.sh_coeffs[0] = static_cast<float>(0.5 / kY00);
    scene.sh_coeffs[1] = static_cast<float>(-0.5 / kY00);
    scene.sh_coeffs[2] = static_cast<float>(-0.5 / kY00);
    const size_t g2 = GaussianScene::kShSlots * 3;
    scene.sh_coeffs[g2 + 0] = static_cast<float>(-0.5 / kY00);
    scene.sh_coeffs[g2 + 1] = static_cast<float>(0.5 / kY00);
    scene.sh_coeffs[g2 + 2] = static_cast<float>(-0.5 / kY00);
    scene.medium = MediumMLPWeights::zeros();
    scene.active_sh_degree = 0;
    return scene;
}

double max_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.data.size() == b.data.size());
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

} // namespace

TEST_CASE("tiled rasterizer matches the brute-force reference") {
    // Shared compositing definition: termination is the one intentional
    // deviation of the tiled path, so it is switched off for the comparison.
    // Tiling, sorting and radius culling stay under test.
    RasterizeConfig cfg;
    cfg.early_termination = false;
    struct Case {
        uint64_t seed;
        size_t count;
        int w, h;
    };
    const Case cases[] = {
        {101, 1, 16, 16}, {102, 7, 16, 16},  {103, 20, 32, 24},
        {104, 35, 24, 32}, {105, 50, 32, 32}, {106, 50, 17, 19},
    };
    for (const Case& c : cases) {
        CAPTURE(c.seed);
        const GaussianScene scene = random_scene(c.seed, c.count);
        const Camera cam = scene_camera(c.w, c.h);
        const RenderOutputs out = rasterize(scene, cam, cfg);
        const Image ref = rasterize_reference(scene, cam, cfg);
        CHECK(max_abs_diff(out.image, ref) < 1e-6);
    }

    SUBCASE("alpha_min zero widens footprints to the whole image") {
        RasterizeConfig wide = cfg;
        wide.alpha_min = 0.0;
        const GaussianScene scene = random_scene(107, 12);
        const Camera cam = scene_camera(24, 24);
        const RenderOutputs out = rasterize(scene, cam, wide);
        const Image ref = rasterize_reference(scene, cam, wide);
        CHECK(max_abs_diff(out.image, ref) < 1e-6);
        for (const ProjectedGaussian& pg : out.projected) {
            CHECK(pg.radius >= std::hypot(cam.width, cam.height));
        }
    }
}

TEST_CASE("early termination changes the image by at most the residual transmittance") {
    const GaussianScene scene = random_scene(41, 40);
    const Camera cam = scene_camera(32, 32);
    RasterizeConfig off;
    off.early_termination = false;
    RasterizeConfig on;
    on.early_termination = true;
    const RenderOutputs full = rasterize(scene, cam, off);
    const RenderOutputs cut = rasterize(scene, cam, on);
    // Everything dropped after the cut carries weight <= threshold, and
    // colors stay within [0, 1] here.
    CHECK(max_abs_diff(full.image, cut.image) <= on.termination_threshold);
}

TEST_CASE("rendering is deterministic and worker-invariant") {
    const GaussianScene scene = random_scene(7, 30);
    const Camera cam = scene_camera(32, 32);
    const RenderOutputs a = rasterize(scene, cam, {}, 1);
    const RenderOutputs b = rasterize(scene, cam, {}, 4);
    const RenderOutputs c = rasterize(scene, cam, {}, 4);
    CHECK(std::memcmp(a.image.data.data(), b.image.data.data(),
                      a.image.data.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(b.image.data.data(), c.image.data.data(),
                      b.image.data.size() * sizeof(double)) == 0);
    CHECK(a.transmittance == b.transmittance);
    CHECK(a.contributor_count == b.contributor_count);

    Image weights(cam.width, cam.height);
    Rng rng(99);
    for (double& w : weights.data) {
        w = rng.uniform(-1.0, 1.0);
    }
    const GradientSet g4a = rasterize_backward(b, weights, 4);
    const GradientSet g4b = rasterize_backward(c, weights, 4);
    CHECK(g4a.positions == g4b.positions);
    CHECK(g4a.sh_coeffs == g4b.sh_coeffs);

    // Across worker counts the merge order differs; agreement is toleranced.
    const GradientSet g1 = rasterize_backward(a, weights, 1);
    for (size_t i = 0; i < g1.positions.size(); ++i) {
        CHECK(g1.positions[i] == doctest::Approx(g4a.positions[i]).epsilon(1e-10));
    }
    for (size_t i = 0; i < g1.opacity_logits.size(); ++i) {
        CHECK(g1.opacity_logits[i] == doctest::Approx(g4a.opacity_logits[i]).epsilon(1e-10));
    }
}

TEST_CASE("front-to-back ordering follows depth") {
    const Camera cam = scene_camera(32, 32);
    const RenderOutputs red_front = rasterize(two_splats(true), cam, {});
    const RenderOutputs green_front = rasterize(two_splats(false), cam, {});
    const int px = cam.width / 2;
    const int py = cam.height / 2;
    CHECK(red_front.image.at(px, py, 0) > 0.8);
    CHECK(red_front.image.at(px, py, 1) < 0.12);
    CHECK(green_front.image.at(px, py, 1) > 0.8);
    CHECK(green_front.image.at(px, py, 0) < 0.12);
    // The occluded splat still leaks through 1 - 0.95 of the light.
    CHECK(red_front.image.at(px, py, 1) > 0.0);
}

TEST_CASE("projection culls behind the near plane and under the alpha floor") {
    GaussianScene scene = two_splats(true);
    // Push the second gaussian behind the camera eye at z = 3.
    scene.positions[5] = 5.0f;
    RenderStats stats;
    const Camera cam = scene_camera(16, 16);
    const auto projected = project_gaussians(activated_params(scene), cam, {}, &stats);
    CHECK(projected.size() == 1);
    CHECK(stats.input_count == 2);
    CHECK(stats.culled == 1);

    // Peak alpha below alpha_min: dropped at projection time.
    GaussianScene faint = two_splats(true);
    faint.opacity_logits[0] = static_cast<float>(logit(1.0 / 1024.0));
    RenderStats faint_stats;
    const auto faint_proj = project_gaussians(activated_params(faint), cam, {}, &faint_stats);
    CHECK(faint_proj.size() == 1);
    CHECK(faint_stats.culled == 1);

    SUBCASE("empty scene is rejected up front") {
        GaussianScene empty;
        empty.medium = MediumMLPWeights::zeros();
        CHECK_THROWS_AS((void)rasterize(empty, cam, {}), invalid_argument_error);
    }
}

TEST_CASE("transmittance and contributor counts are consistent") {
    const GaussianScene scene = random_scene(23, 25);
    const Camera cam = scene_camera(24, 24);
    RasterizeConfig cfg;
    cfg.early_termination = false;
    const RenderOutputs out = rasterize(scene, cam, cfg);
    REQUIRE(out.transmittance.size() == static_cast<size_t>(cam.width * cam.height));
    double contrib_sum = 0.0;
    for (size_t p = 0; p < out.transmittance.size(); ++p) {
        CHECK(out.transmittance[p] >= 0.0);
        CHECK(out.transmittance[p] <= 1.0);
        contrib_sum += out.contributor_count[p];
    }
    CHECK(out.stats.mean_contributors_per_pixel ==
          doctest::Approx(contrib_sum / out.transmittance.size()));
}

TEST_CASE("backward refuses stale forward state") {
    GaussianScene scene = random_scene(3, 5);
    const Camera cam = scene_camera(16, 16);
    const RenderOutputs out = rasterize(scene, cam, {});
    Image weights(cam.width, cam.height);
    weights.data.assign(weights.data.size(), 1.0);
    scene.bump_revision();
    CHECK_THROWS_AS((void)rasterize_backward(out, weights), stale_state_error);
}

TEST_CASE("analytic gradients match central finite differences") {
    // Smooth configuration: no alpha floor, no termination, opacities kept
    // under the clamp and colors away from the [0, 1] clip. All remaining
    // compositing math is differentiable, so central differences converge.
    RasterizeConfig cfg;
    cfg.alpha_min = 0.0;
    cfg.early_termination = false;
    const Camera cam = scene_camera(8, 8);

    for (uint64_t seed : {501u, 502u}) {
        CAPTURE(seed);
        GaussianScene scene = random_scene(seed, 3);
        Image weights(cam.width, cam.height);
        Rng wrng(seed + 1000);
        for (double& w : weights.data) {
            w = wrng.uniform(-1.0, 1.0);
        }
        const auto loss = [&]() {
            const RenderOutputs out = rasterize(scene, cam, cfg);
            double acc = 0.0;
            for (size_t i = 0; i < out.image.data.size(); ++i) {
                acc += weights.data[i] * out.image.data[i];
            }
            return acc;
        };

        const RenderOutputs out = rasterize(scene, cam, cfg);
        const GradientSet grads = rasterize_backward(out, weights);

        struct Field {
            const char* name;
            float* data;
            const double* grad;
            size_t n;
        };
        const Field fields[] = {
            {"positions", scene.positions.data(), grads.positions.data(),
             scene.positions.size()},
            {"rotations", scene.rotations.data(), grads.rotations.data(),
             scene.rotations.size()},
            {"log_scales", scene.log_scales.data(), grads.log_scales.data(),
             scene.log_scales.size()},
            {"opacity_logits", scene.opacity_logits.data(), grads.opacity_logits.data(),
             scene.opacity_logits.size()},
            {"sh_coeffs", scene.sh_coeffs.data(), grads.sh_coeffs.data(),
             scene.sh_coeffs.size()},
        };
        for (const Field& f : fields) {
            CAPTURE(f.name);
            for (size_t i = 0; i < f.n; ++i) {
                const float saved = f.data[i];
                const double h = 1e-4 * std::max(1.0, std::abs(static_cast<double>(saved)));
                f.data[i] = static_cast<float>(saved + h);
                const double stepped_up = f.data[i];
                const double lp = loss();
                f.data[i] = static_cast<float>(saved - h);
                const double stepped_down = f.data[i];
                const double lm = loss();
                f.data[i] = saved;
                // Divide by the realized float32 step, not the requested one.
                const double fd = (lp - lm) / (stepped_up - stepped_down);
                const double an = f.grad[i];
                CAPTURE(i);
                CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(an), std::abs(fd)) + 1e-9);
            }
        }
    }
}

TEST_CASE("gradients vanish for parameters of culled gaussians") {
    GaussianScene scene = two_splats(true);
    scene.positions[5] = 5.0f; // second gaussian behind the camera
    const Camera cam = scene_camera(16, 16);
    const RenderOutputs out = rasterize(scene, cam, {});
    Image weights(cam.width, cam.height);
    weights.data.assign(weights.data.size(), 1.0);
    const GradientSet grads = rasterize_backward(out, weights);
    for (int a = 0; a < 3; ++a) {
        CHECK(grads.positions[3 + a] == 0.0);
        CHECK(grads.log_scales[3 + a] == 0.0);
    }
    for (int a = 0; a < 4; ++a) {
        CHECK(grads.rotations[4 + a] == 0.0);
    }
    CHECK(grads.opacity_logits[1] == 0.0);
    // Medium fields are not touched by the rasterizer.
    for (double g : grads.w1) {
        CHECK(g == 0.0);
    }
}
