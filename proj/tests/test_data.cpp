// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "smokegs/core/binio.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/core/types.hpp"
#include "smokegs/data/data.hpp"
#include "smokegs/scene/scene.hpp"
#include "smokegs/sh/sh.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace smokegs;
using namespace smokegs::binio;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    REQUIRE(os.good());
    os << text;
}

json identity_pose() {
    return json::array({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
}

json valid_frame(const std::string& id, const std::string& image) {
    json f;
    f["id"] = id;
    if (!image.empty()) {
        f["image"] = image;
    }
    f["fx"] = 40.0;
    f["fy"] = 40.0;
    f["cx"] = 16.0;
    f["cy"] = 12.0;
    f["pose"] = identity_pose();
    return f;
}

json valid_manifest() {
    json m;
    m["width"] = 32;
    m["height"] = 24;
    m["frames"] = json::array({valid_frame("a", "a.png")});
    return m;
}

Image checker(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = ((x + y) % 2 == 0) ? 0.25 : 0.75;
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = v;
            }
        }
    }
    return img;
}

} // namespace

TEST_CASE("png round-trip quantizes round-half-up") {
    const fs::path dir = fresh_dir("smokegs_png");
    Image img(3, 2);
    img.data.assign(img.data.size(), 0.0);
    img.at(0, 0, 0) = 0.5;          // 127.5 rounds up to 128
    img.at(1, 0, 1) = 1.0 / 255.0;  // exact byte 1
    img.at(2, 0, 2) = 1.7;          // clamps to 255
    img.at(0, 1, 0) = -0.3;         // clamps to 0
    img.at(1, 1, 1) = 0.2;          // 51 exactly
    const std::string path = (dir / "probe.png").string();
    write_image(img, path);
    const Image back = read_image(path);
    REQUIRE(back.width == 3);
    REQUIRE(back.height == 2);
    CHECK(back.at(0, 0, 0) == 128.0 / 255.0);
    CHECK(back.at(1, 0, 1) == 1.0 / 255.0);
    CHECK(back.at(2, 0, 2) == 1.0);
    CHECK(back.at(0, 1, 0) == 0.0);
    CHECK(back.at(1, 1, 1) == 51.0 / 255.0);

    SUBCASE("random image survives within half a quantum") {
        Rng rng(4);
        Image noisy(17, 9);
        for (double& v : noisy.data) {
            v = rng.uniform(0.0, 1.0);
        }
        const std::string p2 = (dir / "noise.png").string();
        write_image(noisy, p2);
        const Image b2 = read_image(p2);
        for (size_t i = 0; i < noisy.data.size(); ++i) {
            CHECK(std::abs(b2.data[i] - noisy.data[i]) <= 0.5 / 255.0 + 1e-12);
        }
    }

    SUBCASE("missing and malformed files raise distinct errors") {
        CHECK_THROWS_AS((void)read_image((dir / "absent.png").string()), io_error);
        write_text(dir / "fake.png", "definitely not a png");
        CHECK_THROWS_AS((void)read_image((dir / "fake.png").string()), decode_error);
    }
}

TEST_CASE("downscale averages full blocks") {
    Image img(4, 2);
    double v = 0.0;
    for (double& x : img.data) {
        x = v;
        v += 0.01;
    }
    const Image half = downscale_image(img, 2);
    REQUIRE(half.width == 2);
    REQUIRE(half.height == 1);
    for (int c = 0; c < 3; ++c) {
        const double expect =
            0.25 * (img.at(0, 0, c) + img.at(1, 0, c) + img.at(0, 1, c) + img.at(1, 1, c));
        CHECK(half.at(0, 0, c) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK_THROWS_AS((void)downscale_image(img, 3), invalid_argument_error);
    const Image same = downscale_image(img, 1);
    CHECK(same.data == img.data);
}

TEST_CASE("dataset loading enforces the manifest contract") {
    const fs::path dir = fresh_dir("smokegs_manifest");
    write_image(checker(32, 24), (dir / "a.png").string());

    SUBCASE("happy path with splits, bounds and render-only poses") {
        json m = valid_manifest();
        m["scene_bounds"]["min"] = {-1.0, -2.0, -3.0};
        m["scene_bounds"]["max"] = {1.0, 2.0, 3.0};
        m["frames"][0]["split"] = "train";
        json pose_only = valid_frame("b", "");
        pose_only["split"] = "holdout";
        m["frames"].push_back(pose_only);
        write_text(dir / "manifest.json", m.dump());

        const Dataset ds = load_dataset(dir.string());
        REQUIRE(ds.frames.size() == 2);
        CHECK(ds.width == 32);
        CHECK(ds.height == 24);
        REQUIRE(ds.bounds.has_value());
        CHECK(ds.bounds->min.y == -2.0);
        CHECK(ds.bounds->max.z == 3.0);
        CHECK(ds.frames[0].split == "train");
        CHECK(ds.frames[1].split == "holdout");
        CHECK(ds.frames[0].has_image());
        CHECK(!ds.frames[1].has_image());
        CHECK(ds.images[0].width == 32);
        CHECK(ds.images[1].width == 0);
        CHECK(ds.frames[0].camera.fx == 40.0);

        // Downscale by 2: pixels and intrinsics shrink together.
        const Dataset small = load_dataset(dir.string(), 2);
        CHECK(small.width == 16);
        CHECK(small.images[0].width == 16);
        CHECK(small.frames[0].camera.fx == 20.0);
        CHECK(small.frames[0].camera.cx == 8.0);
        // A 2x2 checker block averages to the midpoint.
        CHECK(small.images[0].at(3, 3, 1) == doctest::Approx(0.5).epsilon(1e-3));

        CHECK_THROWS_AS((void)load_dataset(dir.string(), 5), invalid_argument_error);
        CHECK_THROWS_AS((void)load_dataset(dir.string(), 0), invalid_argument_error);
    }

    SUBCASE("missing manifest") {
        CHECK_THROWS_AS((void)load_dataset((dir / "nowhere").string()), io_error);
    }

    SUBCASE("malformed json") {
        write_text(dir / "manifest.json", "{ not json");
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);
    }

    SUBCASE("schema violations and bad cameras") {
        json m = valid_manifest();
        m.erase("width");
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);

        m = valid_manifest();
        m["frames"] = json::array();
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);

        m = valid_manifest();
        m["frames"][0].erase("fx");
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);

        m = valid_manifest();
        m["frames"][0]["split"] = "test";
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);

        m = valid_manifest();
        m["pose_convention"] = "row_major_w2c";
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), decode_error);

        // Scaled rotation fails camera validation, surfacing as data_error.
        m = valid_manifest();
        m["frames"][0]["pose"][0][0] = 2.0;
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), data_error);
    }

    SUBCASE("image resolution must match the manifest") {
        json m = valid_manifest();
        m["width"] = 16;
        m["height"] = 24;
        m["frames"][0]["cx"] = 8.0;
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), shape_mismatch_error);
    }

    SUBCASE("referenced image missing") {
        json m = valid_manifest();
        m["frames"][0]["image"] = "gone.png";
        write_text(dir / "manifest.json", m.dump());
        CHECK_THROWS_AS((void)load_dataset(dir.string()), io_error);
    }
}

TEST_CASE("transforms conversion produces a loadable manifest") {
    const fs::path dir = fresh_dir("smokegs_transforms");
    const int w = 20, h = 16;
    write_image(checker(w, h), (dir / "r_0.png").string());
    write_image(checker(w, h), (dir / "r_1.png").string());

    json t;
    t["camera_angle_x"] = 0.8;
    json f0;
    f0["file_path"] = "./r_0"; // extension and prefix get normalized
    f0["transform_matrix"] = identity_pose();
    json f1;
    f1["file_path"] = "r_1.png";
    f1["transform_matrix"] = identity_pose();
    t["frames"] = json::array({f0, f1});
    write_text(dir / "transforms.json", t.dump());

    convert_transforms((dir / "transforms.json").string(), (dir / "manifest.json").string(),
                       w, h);

    const Dataset ds = load_dataset(dir.string());
    REQUIRE(ds.frames.size() == 2);
    const double fx_expect = 0.5 * w / std::tan(0.4);
    CHECK(ds.frames[0].camera.fx == doctest::Approx(fx_expect).epsilon(1e-12));
    CHECK(ds.frames[0].camera.fy == doctest::Approx(fx_expect).epsilon(1e-12));
    CHECK(ds.frames[0].camera.cx == 10.0);
    CHECK(ds.frames[0].id == "frame_0");
    CHECK(ds.frames[1].id == "frame_1");
    CHECK(ds.images[1].width == w);

    SUBCASE("transforms errors") {
        CHECK_THROWS_AS(convert_transforms((dir / "absent.json").string(),
                                           (dir / "m2.json").string(), w, h),
                        io_error);
        write_text(dir / "empty.json", "{}");
        CHECK_THROWS_AS(convert_transforms((dir / "empty.json").string(),
                                           (dir / "m2.json").string(), w, h),
                        decode_error);
        CHECK_THROWS_AS(convert_transforms((dir / "transforms.json").string(),
                                           (dir / "m2.json").string(), 0, h),
                        invalid_argument_error);
    }
}

TEST_CASE("synthetic scenes are deterministic and follow the haze model") {
    SyntheticSceneSpec spec;
    spec.gaussian_count = 40;
    spec.camera_count = 6;
    spec.holdout_count = 2;
    spec.width = 32;
    spec.height = 32;
    spec.bounds = Bounds{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};

    const fs::path dir = fresh_dir("smokegs_synth_a");
    const SyntheticResult res = generate_synthetic(spec, 77, dir.string());

    for (const char* name : {"manifest.json", "manifest_clean.json", "truth.json",
                             "scene_gt.smgs"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir / name));
    }
    CHECK(fs::exists(dir / "clean" / "frame_0000.png"));
    CHECK(fs::exists(dir / "hazy" / "frame_0005.png"));

    CHECK(res.scene.count() == 40);
    REQUIRE(res.dataset.frames.size() == 6);
    size_t holdouts = 0;
    for (const DatasetFrame& f : res.dataset.frames) {
        holdouts += f.split == "holdout" ? 1 : 0;
    }
    CHECK(holdouts == 2);

    // Truth round-trips through its json file; DC tint stays zero.
    const SyntheticTruth truth = load_truth((dir / "truth.json").string());
    CHECK(truth.haze_beta == res.truth.haze_beta);
    CHECK(truth.tint_degree == res.truth.tint_degree);
    REQUIRE(truth.tint_coeffs.size() == res.truth.tint_coeffs.size());
    for (size_t i = 0; i < truth.tint_coeffs.size(); ++i) {
        CHECK(truth.tint_coeffs[i] == res.truth.tint_coeffs[i]);
    }
    CHECK(truth.tint_coeffs[0] == 0.0);
    CHECK(truth.tint_coeffs[1] == 0.0);
    CHECK(truth.tint_coeffs[2] == 0.0);
    for (size_t i = 3; i < truth.tint_coeffs.size(); ++i) {
        CHECK(std::abs(truth.tint_coeffs[i]) <= spec.tint_amplitude);
    }

    // Ground-truth scene file loads back with the requested population.
    const GaussianScene gt = load_checkpoint((dir / "scene_gt.smgs").string());
    CHECK(gt.count() == 40);

    SUBCASE("tint evaluation matches the basis expansion") {
        const Vec3 d = Vec3{0.3, -0.5, 0.81}.normalized();
        double basis[sh_count(4)];
        sh_basis(d, truth.tint_degree, basis);
        const Vec3 tint = evaluate_tint(truth, d);
        double expect[3] = {0.0, 0.0, 0.0};
        for (int i = 0; i < sh_count(truth.tint_degree); ++i) {
            for (int c = 0; c < 3; ++c) {
                expect[c] += truth.tint_coeffs[static_cast<size_t>(i) * 3 + c] * basis[i];
            }
        }
        CHECK(tint.x == doctest::Approx(expect[0]).epsilon(1e-12));
        CHECK(tint.y == doctest::Approx(expect[1]).epsilon(1e-12));
        CHECK(tint.z == doctest::Approx(expect[2]).epsilon(1e-12));
    }

    SUBCASE("hazy images follow the blend up to png quantization") {
        const Image clean = read_image((dir / "clean" / "frame_0002.png").string());
        const Image hazy = read_image((dir / "hazy" / "frame_0002.png").string());
        const Camera& cam = res.dataset.frames[2].camera;
        const auto rays = ray_direction_field(cam);
        const double beta = truth.haze_beta;
        size_t checked = 0;
        for (size_t p = 0; p < rays.size(); ++p) {
            const Vec3 tint = evaluate_tint(truth, rays[p]);
            const double air[3] = {truth.airlight.x, truth.airlight.y, truth.airlight.z};
            const double tint_c[3] = {tint.x, tint.y, tint.z};
            for (int c = 0; c < 3; ++c) {
                const double expect =
                    (1.0 - beta) * clean.data[p * 3 + c] + beta * air[c] + tint_c[c];
                if (expect < 0.02 || expect > 0.98) {
                    continue; // clamped on write, skip
                }
                ++checked;
                CHECK(std::abs(hazy.data[p * 3 + c] - expect) < 1.5 / 255.0);
            }
        }
        CHECK(checked > 100); // the scene must actually exercise the model
    }

    SUBCASE("same seed reproduces byte-identical outputs") {
        const fs::path dir_b = fresh_dir("smokegs_synth_b");
        (void)generate_synthetic(spec, 77, dir_b.string());
        CHECK(read_file((dir / "hazy" / "frame_0000.png").string()) ==
              read_file((dir_b / "hazy" / "frame_0000.png").string()));
        CHECK(read_file((dir / "truth.json").string()) ==
              read_file((dir_b / "truth.json").string()));
        CHECK(read_file((dir / "scene_gt.smgs").string()) ==
              read_file((dir_b / "scene_gt.smgs").string()));
    }

    SUBCASE("zero haze and zero tint reduce to the clean render") {
        SyntheticSceneSpec clean_spec = spec;
        clean_spec.haze_beta = 0.0;
        clean_spec.tint_amplitude = 0.0;
        const fs::path dir_c = fresh_dir("smokegs_synth_c");
        (void)generate_synthetic(clean_spec, 5, dir_c.string());
        CHECK(read_file((dir_c / "hazy" / "frame_0001.png").string()) ==
              read_file((dir_c / "clean" / "frame_0001.png").string()));
    }

    SUBCASE("spec validation") {
        SyntheticSceneSpec bad = spec;
        bad.holdout_count = 6;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
        bad = spec;
        bad.gaussian_count = 0;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
        bad = spec;
        bad.haze_beta = 1.5;
        CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
    }
}
