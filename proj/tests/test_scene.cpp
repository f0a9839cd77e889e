// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "smokegs/core/binio.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/scene/scene.hpp"
#include "smokegs/sh/sh.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

using namespace smokegs;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

GaussianScene small_scene(uint64_t seed = 5) {
    Bounds b;
    b.min = {-1.0, -1.0, -1.0};
    b.max = {1.0, 1.0, 1.0};
    return init_scene(12, b, seed);
}

} // namespace

TEST_CASE("init_scene is deterministic and shaped correctly") {
    const GaussianScene a = small_scene(9);
    const GaussianScene b = small_scene(9);
    const GaussianScene c = small_scene(10);

    CHECK(a.count() == 12);
    CHECK(a.positions.size() == 36);
    CHECK(a.rotations.size() == 48);
    CHECK(a.log_scales.size() == 36);
    CHECK(a.sh_coeffs.size() == 12 * 16 * 3);
    CHECK(a.medium.w1.size() == 128 * 25);
    CHECK(a.medium.w2.size() == 9 * 128);
    CHECK(a.active_sh_degree == 0);

    CHECK(a.positions == b.positions);
    CHECK(a.rotations == b.rotations);
    CHECK(a.sh_coeffs == b.sh_coeffs);
    CHECK(a.medium.w1 == b.medium.w1);
    CHECK(a.positions != c.positions);
    CHECK(a.medium.w1 != c.medium.w1);

    // identity rotations, opacity logit of 0.1, gray via the DC coefficient
    CHECK(a.rotations[0] == 1.0f);
    CHECK(a.rotations[1] == 0.0f);
    CHECK(sigmoid(a.opacity_logits[0]) == doctest::Approx(0.1).epsilon(1e-6));
    const double y00 = 0.28209479177387814;
    const ShColor col = sh_color(a.sh_coeffs.data(), 0, Vec3{0.0, 0.0, 1.0});
    CHECK(col.rgb.x == doctest::Approx(0.5).epsilon(1e-6));

    Bounds bounds;
    for (const float p : a.positions) {
        CHECK(p >= -1.0f);
        CHECK(p <= 1.0f);
    }
    (void)bounds;
    (void)y00;
}

TEST_CASE("init_scene rejects degenerate requests") {
    Bounds b;
    CHECK_THROWS_AS(init_scene(0, b, 1), invalid_argument_error);
    Bounds flat;
    flat.min = {0.0, 0.0, 0.0};
    flat.max = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(init_scene(4, flat, 1), invalid_argument_error);
    SceneInitConfig cfg;
    cfg.init_opacity = 1.0;
    CHECK_THROWS_AS(init_scene(4, b, 1, cfg), invalid_argument_error);
}

TEST_CASE("init_scene_from_points seeds positions and colors") {
    const std::vector<Vec3> pts = {{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}};
    const std::vector<Vec3> cols = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.25, 0.25, 0.75}};
    const GaussianScene s = init_scene_from_points(pts, cols, 3);
    CHECK(s.count() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(s.positions[i * 3 + 0] == doctest::Approx(pts[i].x));
        CHECK(s.positions[i * 3 + 1] == doctest::Approx(pts[i].y));
        const ShColor c = sh_color(s.sh_coeffs.data() + i * 16 * 3, 0, Vec3{0.0, 0.0, 1.0});
        CHECK(c.rgb.x == doctest::Approx(cols[i].x).epsilon(1e-6));
        CHECK(c.rgb.z == doctest::Approx(cols[i].z).epsilon(1e-6));
    }
    CHECK_THROWS_AS(init_scene_from_points({}, {}, 1), invalid_argument_error);
    CHECK_THROWS_AS(init_scene_from_points(pts, {cols[0]}, 1), invalid_argument_error);
}

TEST_CASE("nearest neighbor spacing matches brute force") {
    Rng rng(41);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) {
        pts.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, 3.0)});
    }
    double brute = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, (pts[i] - pts[j]).norm());
        }
        brute += best;
    }
    brute /= static_cast<double>(pts.size());
    CHECK(mean_nearest_neighbor_spacing(pts) == doctest::Approx(brute).epsilon(1e-12));

    CHECK_THROWS_AS(mean_nearest_neighbor_spacing({Vec3{0, 0, 0}}), invalid_argument_error);

    // coincident points have zero spacing, not a crash
    const std::vector<Vec3> dup = {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}, {2.0, 1.0, 1.0}};
    CHECK(mean_nearest_neighbor_spacing(dup) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("activated_params applies the documented activations") {
    GaussianScene s = small_scene();
    s.rotations[0] = 3.0f; // unnormalized storage
    s.rotations[1] = 4.0f;
    s.rotations[2] = 0.0f;
    s.rotations[3] = 0.0f;
    s.log_scales[0] = -0.7f;
    s.opacity_logits[0] = 0.0f;

    const ActivatedParams p = activated_params(s);
    CHECK(p.positions.size() == s.count());
    CHECK(p.rotations[0].norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.rotations[0].w == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(p.rotations[0].x == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(p.scales[0].x == doctest::Approx(std::exp(-0.7f)).epsilon(1e-7));
    CHECK(p.opacities[0] == 0.5);
    CHECK(p.sh_coeffs == s.sh_coeffs.data());

    s.positions[4] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(activated_params(s), numeric_fault);
    s = small_scene();
    s.rotations[0] = 0.0f;
    s.rotations[1] = 0.0f;
    s.rotations[2] = 0.0f;
    s.rotations[3] = 0.0f;
    CHECK_THROWS_AS(activated_params(s), numeric_fault);
}

TEST_CASE("raise_sh_degree never lowers and bounds the degree") {
    GaussianScene s = small_scene();
    CHECK(s.active_sh_degree == 0);
    s.raise_sh_degree(2);
    CHECK(s.active_sh_degree == 2);
    s.raise_sh_degree(1);
    CHECK(s.active_sh_degree == 2);
    s.raise_sh_degree(3);
    CHECK(s.active_sh_degree == 3);
    CHECK_THROWS_AS(s.raise_sh_degree(4), invalid_argument_error);
    CHECK_THROWS_AS(s.raise_sh_degree(-1), invalid_argument_error);
}

TEST_CASE("gradient set mirrors scene shapes") {
    const GaussianScene s = small_scene();
    GradientSet g = GradientSet::zeros_like(s);
    CHECK(g.positions.size() == s.positions.size());
    CHECK(g.w2.size() == s.medium.w2.size());
    CHECK(g.all_finite());

    GradientSet h = GradientSet::zeros_like(s);
    g.positions[0] = 2.0;
    h.positions[0] = 0.5;
    g.add(h);
    CHECK(g.positions[0] == 2.5);

    g.w1[3] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(g.all_finite());
    g.zero();
    CHECK(g.positions[0] == 0.0);
    CHECK(g.all_finite());
}

TEST_CASE("checkpoint round trip is bit exact") {
    GaussianScene s = small_scene(77);
    s.raise_sh_degree(2);
    const std::string path = temp_path("smokegs_scene_rt.smgs");
    save_checkpoint(s, path);
    const GaussianScene r = load_checkpoint(path);
    CHECK(r.positions == s.positions);
    CHECK(r.rotations == s.rotations);
    CHECK(r.log_scales == s.log_scales);
    CHECK(r.opacity_logits == s.opacity_logits);
    CHECK(r.sh_coeffs == s.sh_coeffs);
    CHECK(r.medium.w1 == s.medium.w1);
    CHECK(r.medium.b1 == s.medium.b1);
    CHECK(r.medium.w2 == s.medium.w2);
    CHECK(r.medium.b2 == s.medium.b2);
    CHECK(r.active_sh_degree == 2);

    // a second save of the loaded scene produces identical bytes
    const std::string path2 = temp_path("smokegs_scene_rt2.smgs");
    save_checkpoint(r, path2);
    CHECK(binio::read_file(path) == binio::read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint loader rejects every corruption class") {
    const GaussianScene s = small_scene(78);
    const std::string path = temp_path("smokegs_scene_bad.smgs");
    save_checkpoint(s, path);
    const std::string good = binio::read_file(path);

    auto write_and_load = [&](const std::string& bytes) {
        binio::write_file(path, bytes);
        return load_checkpoint(path);
    };

    // magic
    std::string bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(write_and_load(bad), decode_error);

    // version
    bad = good;
    bad[4] = 9;
    CHECK_THROWS_AS(write_and_load(bad), version_mismatch_error);

    // declared gaussian count of zero
    bad = good;
    for (int i = 8; i < 16; ++i) bad[static_cast<size_t>(i)] = 0;
    CHECK_THROWS_AS(write_and_load(bad), shape_mismatch_error);

    // truncated body
    bad = good.substr(0, good.size() / 2);
    CHECK_THROWS_AS(write_and_load(bad), truncated_file_error);

    // flipped body byte fails the CRC
    bad = good;
    bad[good.size() / 2] = static_cast<char>(bad[good.size() / 2] ^ 0x40);
    CHECK_THROWS_AS(write_and_load(bad), crc_mismatch_error);

    // trailing junk
    bad = good + "zz";
    CHECK_THROWS_AS(write_and_load(bad), decode_error);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint(path), io_error);

    // the happy path still works after all that
    binio::write_file(path, good);
    CHECK_NOTHROW(load_checkpoint(path));
    std::remove(path.c_str());
}

TEST_CASE("revision bumps on demand") {
    GaussianScene s = small_scene();
    const uint64_t r0 = s.revision;
    s.bump_revision();
    CHECK(s.revision == r0 + 1);
}
