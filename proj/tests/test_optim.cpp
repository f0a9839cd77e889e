// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "smokegs/core/binio.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/optim/optim.hpp"
#include "smokegs/scene/scene.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

using namespace smokegs;
using namespace smokegs::binio;

namespace {

GaussianScene tiny_scene(uint64_t seed, size_t count = 4) {
    return init_scene(count, Bounds{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}}, seed);
}

GradientSet unit_grads(const GaussianScene& scene, double fill) {
    GradientSet g = GradientSet::zeros_like(scene);
    auto set = [&](std::vector<double>& v) {
        for (double& x : v) {
            x = fill;
        }
    };
    set(g.positions);
    set(g.rotations);
    set(g.log_scales);
    set(g.opacity_logits);
    set(g.sh_coeffs);
    set(g.w1);
    set(g.b1);
    set(g.w2);
    set(g.b2);
    return g;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("first adam update is lr * sign(grad) per group") {
    // With zero moments, one update moves each parameter by exactly
    // lr * g / (|g| + eps * sqrt(1 - beta2)) in the direction of -g,
    // which for |g| >> eps is lr * sign(g) to float precision.
    GaussianScene scene = tiny_scene(1);
    const GaussianScene before = scene;
    OptimState state = OptimState::zeros_like(scene);
    OptimConfig cfg;
    const GradientSet g = unit_grads(scene, 0.5);
    adam_step(state, scene, g, cfg);
    CHECK(state.step == 1);
    CHECK(scene.revision == before.revision + 1);

    auto moved = [&](const std::vector<float>& now, const std::vector<float>& was,
                     double lr) {
        for (size_t i = 0; i < now.size(); ++i) {
            const double delta = static_cast<double>(now[i]) - static_cast<double>(was[i]);
            // Slack covers float32 parameter storage rounding.
            CHECK(delta == doctest::Approx(-lr).epsilon(5e-3));
        }
    };
    moved(scene.positions, before.positions, cfg.rates.positions);
    moved(scene.rotations, before.rotations, cfg.rates.rotations);
    moved(scene.log_scales, before.log_scales, cfg.rates.scales);
    moved(scene.opacity_logits, before.opacity_logits, cfg.rates.opacities);
    moved(scene.sh_coeffs, before.sh_coeffs, cfg.rates.sh);
    moved(scene.medium.w1, before.medium.w1, cfg.rates.mlp);
    moved(scene.medium.b2, before.medium.b2, cfg.rates.mlp);
}

TEST_CASE("zero gradients leave parameters fixed") {
    GaussianScene scene = tiny_scene(2);
    const GaussianScene before = scene;
    OptimState state = OptimState::zeros_like(scene);
    adam_step(state, scene, GradientSet::zeros_like(scene), OptimConfig{});
    CHECK(scene.positions == before.positions);
    CHECK(scene.sh_coeffs == before.sh_coeffs);
    CHECK(scene.medium.w2 == before.medium.w2);
    CHECK(state.step == 1);
}

TEST_CASE("faulty input leaves optimizer and scene untouched") {
    GaussianScene scene = tiny_scene(3);
    const GaussianScene before = scene;
    OptimState state = OptimState::zeros_like(scene);
    const OptimState state_before = state;

    GradientSet bad = unit_grads(scene, 0.1);
    bad.log_scales[2] = std::nan("");
    CHECK_THROWS_AS(adam_step(state, scene, bad, OptimConfig{}), numeric_fault);
    CHECK(scene.positions == before.positions);
    CHECK(scene.log_scales == before.log_scales);
    CHECK(scene.revision == before.revision);
    CHECK(state.step == state_before.step);
    CHECK(state.m_log_scales == state_before.m_log_scales);

    GradientSet wrong = unit_grads(scene, 0.1);
    wrong.positions.pop_back();
    CHECK_THROWS_AS(adam_step(state, scene, wrong, OptimConfig{}), invalid_argument_error);
    CHECK(state.step == 0);

    OptimState mismatched = OptimState::zeros_like(tiny_scene(3, 6));
    CHECK(!mismatched.matches(scene));
    GradientSet fine = unit_grads(scene, 0.1);
    CHECK_THROWS_AS(adam_step(mismatched, scene, fine, OptimConfig{}),
                    invalid_argument_error);
}

TEST_CASE("gradient clipping rescales the global norm") {
    GaussianScene scene = tiny_scene(4, 2);
    OptimState s1 = OptimState::zeros_like(scene);
    OptimState s2 = OptimState::zeros_like(scene);
    GaussianScene a = scene;
    GaussianScene b = scene;

    // Same direction, 100x magnitude; with clip both updates coincide.
    GradientSet big = unit_grads(scene, 100.0);
    GradientSet unit = unit_grads(scene, 1.0);
    double norm = 0.0;
    for (double v : unit.positions) {
        norm += v * v;
    }
    // Global norm over every array; compute it the dumb way.
    norm = 0.0;
    for (const auto* vec :
         {&unit.positions, &unit.rotations, &unit.log_scales, &unit.opacity_logits,
          &unit.sh_coeffs, &unit.w1, &unit.b1, &unit.w2, &unit.b2}) {
        for (double v : *vec) {
            norm += v * v;
        }
    }
    norm = std::sqrt(norm);
    const double clip = 0.25 * norm; // both gradients exceed the clip

    OptimConfig cfg;
    cfg.grad_clip = clip;
    adam_step(s1, a, big, cfg);
    adam_step(s2, b, unit, cfg);
    for (size_t i = 0; i < a.positions.size(); ++i) {
        CHECK(a.positions[i] == doctest::Approx(b.positions[i]).epsilon(1e-6));
    }

    // Under the clip nothing changes.
    GaussianScene c = scene;
    GaussianScene d = scene;
    OptimState s3 = OptimState::zeros_like(scene);
    OptimState s4 = OptimState::zeros_like(scene);
    OptimConfig loose;
    loose.grad_clip = 10.0 * norm;
    OptimConfig off;
    adam_step(s3, c, unit, loose);
    adam_step(s4, d, unit, off);
    CHECK(c.positions == d.positions);
    CHECK(c.sh_coeffs == d.sh_coeffs);
}

TEST_CASE("position learning rate decays exponentially with the step") {
    GaussianScene scene = tiny_scene(5, 2);
    OptimConfig cfg;
    cfg.position_lr_decay = 0.5;

    // Two scenes, same gradient stream; after the first step the position
    // update of the decayed run shrinks by exp(-decay) relative to a fresh
    // zero-decay step at the same moments.
    OptimState state = OptimState::zeros_like(scene);
    GaussianScene run = scene;
    const GradientSet g = unit_grads(scene, 1.0);
    adam_step(state, run, g, cfg); // step 0 -> factor exp(0) = 1
    const float after_one = run.positions[0];
    adam_step(state, run, g, cfg); // step 1 -> factor exp(-0.5)

    OptimConfig flat;
    OptimState fstate = OptimState::zeros_like(scene);
    GaussianScene frun = scene;
    adam_step(fstate, frun, g, flat);
    CHECK(after_one == frun.positions[0]);
    adam_step(fstate, frun, g, flat);

    const double decayed = static_cast<double>(run.positions[0]) - after_one;
    const double full = static_cast<double>(frun.positions[0]) - after_one;
    CHECK(decayed == doctest::Approx(full * std::exp(-0.5)).epsilon(5e-3));
    // Non-position groups are unaffected by the decay.
    CHECK(run.opacity_logits[0] == frun.opacity_logits[0]);
}

TEST_CASE("optimizer state round-trips bit-exactly") {
    GaussianScene scene = tiny_scene(6);
    OptimState state = OptimState::zeros_like(scene);
    Rng rng(19);
    for (auto* vec : {&state.m_positions, &state.v_positions, &state.m_sh, &state.v_sh,
                      &state.m_w1, &state.v_w1, &state.m_b2, &state.v_b2}) {
        for (float& v : *vec) {
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        }
    }
    state.step = 12345;

    const std::string path = temp_path("smokegs_adam_roundtrip.bin");
    save_adam_state(state, path);
    const OptimState loaded = load_adam_state(path);
    CHECK(loaded.step == state.step);
    CHECK(loaded.m_positions == state.m_positions);
    CHECK(loaded.v_positions == state.v_positions);
    CHECK(loaded.m_sh == state.m_sh);
    CHECK(loaded.v_w1 == state.v_w1);
    CHECK(loaded.m_b2 == state.m_b2);
    CHECK(loaded.matches(scene));

    SUBCASE("corrupted state files are rejected by kind") {
        auto bytes = read_file(path);
        auto write_variant = [&](const std::string& data) {
            const std::string p = temp_path("smokegs_adam_bad.bin");
            write_file(p, data);
            return p;
        };

        auto magic = bytes;
        magic[0] = 'X';
        CHECK_THROWS_AS((void)load_adam_state(write_variant(magic)), decode_error);

        auto version = bytes;
        version[4] = 0x7f;
        CHECK_THROWS_AS((void)load_adam_state(write_variant(version)),
                        version_mismatch_error);

        auto truncated = bytes;
        truncated.resize(bytes.size() / 2);
        CHECK_THROWS_AS((void)load_adam_state(write_variant(truncated)),
                        truncated_file_error);

        auto flipped = bytes;
        flipped[bytes.size() / 2] ^= 0x40;
        CHECK_THROWS_AS((void)load_adam_state(write_variant(flipped)), crc_mismatch_error);

        CHECK_THROWS_AS((void)load_adam_state(temp_path("smokegs_no_such_state.bin")),
                        io_error);
    }
    std::remove(path.c_str());
}

TEST_CASE("sh warmup schedule") {
    CHECK(sh_warmup(0, 1000) == 0);
    CHECK(sh_warmup(999, 1000) == 0);
    CHECK(sh_warmup(1000, 1000) == 1);
    CHECK(sh_warmup(2500, 1000) == 2);
    CHECK(sh_warmup(3000, 1000) == 3);
    CHECK(sh_warmup(1000000, 1000) == 3);
    CHECK_THROWS_AS((void)sh_warmup(5, 0), invalid_argument_error);
}

TEST_CASE("optim config validation") {
    OptimConfig cfg;
    cfg.validate();
    OptimConfig bad = cfg;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
    bad = cfg;
    bad.eps = 0.0;
    CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
    bad = cfg;
    bad.grad_clip = -1.0;
    CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
    bad = cfg;
    bad.rates.sh = 0.0;
    CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
}
