// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/core/types.hpp"
#include "smokegs/optim/loss.hpp"

#include <cmath>
#include <vector>

using namespace smokegs;

namespace {

Image random_image(Rng& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
    Image img(w, h);
    for (double& v : img.data) {
        v = rng.uniform(lo, hi);
    }
    return img;
}

} // namespace

TEST_CASE("l1 loss value and gradient") {
    Image pred(2, 2);
    Image target(2, 2);
    pred.data = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.1, 0.9, 0.5, 0.5, 0.5, 0.5};
    target.data.assign(12, 0.5);
    const LossResult r = l1_loss(pred, target);
    CHECK(r.value == doctest::Approx((0.4 + 0.4) / 12.0).epsilon(1e-15));
    CHECK(r.grad.data[6] == doctest::Approx(-1.0 / 12.0).epsilon(1e-15));
    CHECK(r.grad.data[7] == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
    CHECK(r.grad.data[0] == 0.0); // sign(0) = 0
    CHECK(l1_loss(target, target).value == 0.0);
}

TEST_CASE("ssim equals one only on identical images") {
    Rng rng(3);
    const Image a = random_image(rng, 16, 13);
    CHECK(ssim(a, a).value == doctest::Approx(1.0).epsilon(1e-12));
    for (double g : ssim(a, a).grad.data) {
        CHECK(std::abs(g) < 1e-12);
    }

    const Image b = random_image(rng, 16, 13);
    const double sab = ssim_value(a, b);
    CHECK(sab < 1.0);
    CHECK(ssim_value(b, a) == doctest::Approx(sab).epsilon(1e-9));

    // Anticorrelated images score negative.
    Image inv = a;
    for (double& v : inv.data) {
        v = 1.0 - v;
    }
    CHECK(ssim_value(a, inv) < 0.0);

    // Noise monotonicity: more noise, lower SSIM.
    Image n1 = a;
    Image n2 = a;
    Rng noise(17);
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double e = noise.normal();
        n1.data[i] += 0.02 * e;
        n2.data[i] += 0.10 * e;
    }
    CHECK(ssim_value(a, n1) > ssim_value(a, n2));
}

TEST_CASE("ssim gradient matches central finite differences") {
    Rng rng(29);
    Image pred = random_image(rng, 13, 12, 0.1, 0.9);
    const Image target = random_image(rng, 13, 12, 0.1, 0.9);
    const LossResult r = ssim(pred, target);
    // Probe a deterministic spread of pixels; full sweep is redundant.
    for (size_t i = 0; i < pred.data.size(); i += 7) {
        const double saved = pred.data[i];
        const double h = 1e-5;
        pred.data[i] = saved + h;
        const double lp = ssim_value(pred, target);
        pred.data[i] = saved - h;
        const double lm = ssim_value(pred, target);
        pred.data[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = r.grad.data[i];
        CAPTURE(i);
        CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(an), std::abs(fd)) + 1e-9);
    }
}

TEST_CASE("combined loss mixes l1 and ssim with lambda") {
    Rng rng(41);
    const Image pred = random_image(rng, 14, 14);
    const Image target = random_image(rng, 14, 14);
    LossConfig cfg;
    const LossResult l1 = l1_loss(pred, target);
    const LossResult ss = ssim(pred, target, cfg);
    const LossResult both = combined_loss(pred, target, cfg);
    CHECK(both.value ==
          doctest::Approx((1.0 - cfg.lambda) * l1.value + cfg.lambda * (1.0 - ss.value))
              .epsilon(1e-12));
    for (size_t i = 0; i < both.grad.data.size(); ++i) {
        const double expect =
            (1.0 - cfg.lambda) * l1.grad.data[i] - cfg.lambda * ss.grad.data[i];
        CHECK(both.grad.data[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    // Spot value: L1 = 0.1 and SSIM = 0.9 must combine to exactly 0.10.
    CHECK((1.0 - cfg.lambda) * 0.1 + cfg.lambda * (1.0 - 0.9) ==
          doctest::Approx(0.10).epsilon(1e-15));

    SUBCASE("config validation") {
        LossConfig bad = cfg;
        bad.ssim_window = 4;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
        bad = cfg;
        bad.lambda = 1.5;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
        bad = cfg;
        bad.ssim_sigma = 0.0;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
    }
}

TEST_CASE("psnr reference points") {
    Image a(5, 5);
    Image b(5, 5);
    a.data.assign(a.data.size(), 0.5);
    b.data.assign(b.data.size(), 0.5);
    CHECK(psnr(a, a) == 99.0);

    // Uniform offset of 0.1 gives MSE 0.01, hence exactly 20 dB.
    for (double& v : b.data) {
        v = 0.6;
    }
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

    // Values outside [0, 1] are clamped before comparison.
    Image over = a;
    over.data[0] = 1.7;
    Image one = a;
    one.data[0] = 1.0;
    CHECK(psnr(over, b) == doctest::Approx(psnr(one, b)).epsilon(1e-15));

    // The cap also bounds near-identical pairs.
    Image tiny = a;
    tiny.data[0] += 1e-9;
    CHECK(psnr(tiny, a, 30.0) == 30.0);
}

TEST_CASE("loss inputs must share dimensions") {
    Image a(4, 4);
    Image b(4, 5);
    CHECK_THROWS_AS((void)l1_loss(a, b), invalid_argument_error);
    CHECK_THROWS_AS((void)ssim(a, b), invalid_argument_error);
    CHECK_THROWS_AS((void)psnr(a, b), invalid_argument_error);
    // SSIM needs at least one full window.
    Image small(8, 8);
    CHECK_THROWS_AS((void)ssim(small, small), invalid_argument_error);
}
