// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/data/data.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/math.hpp"
#include "smokegs/core/rng.hpp"
#include "smokegs/rasterizer/rasterizer.hpp"
#include "smokegs/sh/sh.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace smokegs {

namespace fs = std::filesystem;

void SyntheticSceneSpec::validate() const {
    if (gaussian_count < 1) {
        throw invalid_argument_error("synthetic scene needs at least one gaussian");
    }
    if (camera_count < 2) {
        throw invalid_argument_error("synthetic scene needs at least two cameras");
    }
    if (holdout_count < 0 || holdout_count >= camera_count) {
        throw invalid_argument_error("holdout count must leave at least one training view");
    }
    if (haze_beta < 0.0 || haze_beta > 1.0) {
        throw invalid_argument_error("haze blend must lie in [0, 1]");
    }
    if (tint_amplitude < 0.0) {
        throw invalid_argument_error("tint amplitude must be >= 0");
    }
    if (tint_degree < 0 || tint_degree > kShMaxDegree) {
        throw invalid_argument_error("tint degree must lie in [0, 4]");
    }
    if (width < 8 || height < 8) {
        throw invalid_argument_error("synthetic images must be at least 8x8");
    }
    if (!(fov_deg > 1.0 && fov_deg < 179.0) || !(ring_radius > 0.0)) {
        throw invalid_argument_error("camera ring parameters out of range");
    }
    if (!(bounds.volume() > 0.0)) {
        throw invalid_argument_error("scene bounds must have positive volume");
    }
}

Vec3 evaluate_tint(const SyntheticTruth& truth, const Vec3& world_dir) {
    const int n = sh_count(truth.tint_degree);
    if (truth.tint_coeffs.size() != static_cast<size_t>(n) * 3) {
        throw invalid_argument_error("tint coefficient count does not match its degree");
    }
    double basis[25];
    sh_basis(world_dir, truth.tint_degree, basis);
    Vec3 t{0.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            t[c] += truth.tint_coeffs[static_cast<size_t>(i) * 3 + c] * basis[i];
        }
    }
    return t;
}

namespace {

/// Bright, high-coverage ground truth: wide scales, strong opacities and a
/// colorful palette so trained scenes have clear PSNR headroom over the
/// gray low-opacity init.
GaussianScene make_ground_truth(const SyntheticSceneSpec& spec, Rng& rng) {
    const size_t m = static_cast<size_t>(spec.gaussian_count);
    std::vector<Vec3> points(m);
    for (Vec3& p : points) {
        p.x = rng.uniform(spec.bounds.min.x, spec.bounds.max.x);
        p.y = rng.uniform(spec.bounds.min.y, spec.bounds.max.y);
        p.z = rng.uniform(spec.bounds.min.z, spec.bounds.max.z);
    }
    const double spacing = m >= 2 ? mean_nearest_neighbor_spacing(points) : 1.0;
    const double base_log_scale = std::log(std::max(0.9 * spacing, 1e-6));

    GaussianScene scene;
    scene.positions.resize(m * 3);
    scene.rotations.resize(m * 4);
    scene.log_scales.resize(m * 3);
    scene.opacity_logits.resize(m);
    scene.sh_coeffs.assign(m * GaussianScene::kShSlots * 3, 0.0f);
    for (size_t j = 0; j < m; ++j) {
        scene.positions[j * 3 + 0] = static_cast<float>(points[j].x);
        scene.positions[j * 3 + 1] = static_cast<float>(points[j].y);
        scene.positions[j * 3 + 2] = static_cast<float>(points[j].z);
        Vec4 q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double qn = q.norm() > 1e-9 ? q.norm() : 1.0;
        scene.rotations[j * 4 + 0] = static_cast<float>(q.w / qn);
        scene.rotations[j * 4 + 1] = static_cast<float>(q.x / qn);
        scene.rotations[j * 4 + 2] = static_cast<float>(q.y / qn);
        scene.rotations[j * 4 + 3] = static_cast<float>(q.z / qn);
        for (int a = 0; a < 3; ++a) {
            scene.log_scales[j * 3 + a] =
                static_cast<float>(base_log_scale + rng.uniform(-0.3, 0.3));
        }
        scene.opacity_logits[j] = static_cast<float>(logit(rng.uniform(0.7, 0.98)));
        constexpr double kShDC = 0.28209479177387814;
        for (int c = 0; c < 3; ++c) {
            const double color = rng.uniform(0.35, 1.0);
            scene.sh_coeffs[(j * GaussianScene::kShSlots) * 3 + c] =
                static_cast<float>((color - 0.5) / kShDC);
        }
    }
    scene.medium = MediumMLPWeights::zeros();
    scene.active_sh_degree = 0;
    return scene;
}

bool is_holdout(int i, int count, int holdout) {
    // Spreads `holdout` marks evenly across [0, count).
    return (static_cast<long>(i + 1) * holdout) / count >
           (static_cast<long>(i) * holdout) / count;
}

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d", i);
    return buf;
}

nlohmann::ordered_json manifest_json(const SyntheticSceneSpec& spec,
                                     const std::vector<Camera>& cams, const char* image_dir) {
    nlohmann::ordered_json out;
    out["width"] = spec.width;
    out["height"] = spec.height;
    out["pose_convention"] = "opengl_c2w";
    out["scene_bounds"] = {
        {"min", {spec.bounds.min.x, spec.bounds.min.y, spec.bounds.min.z}},
        {"max", {spec.bounds.max.x, spec.bounds.max.y, spec.bounds.max.z}},
    };
    out["frames"] = nlohmann::ordered_json::array();
    for (int i = 0; i < spec.camera_count; ++i) {
        nlohmann::ordered_json f;
        f["id"] = frame_name(i);
        f["image"] = std::string(image_dir) + "/" + frame_name(i) + ".png";
        f["fx"] = cams[i].fx;
        f["fy"] = cams[i].fy;
        f["cx"] = cams[i].cx;
        f["cy"] = cams[i].cy;
        auto pose = nlohmann::ordered_json::array();
        for (int r = 0; r < 4; ++r) {
            auto row = nlohmann::ordered_json::array();
            for (int c = 0; c < 4; ++c) {
                row.push_back(cams[i].pose(r, c));
            }
            pose.push_back(std::move(row));
        }
        f["pose"] = std::move(pose);
        f["split"] = is_holdout(i, spec.camera_count, spec.holdout_count) ? "holdout" : "train";
        out["frames"].push_back(std::move(f));
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) {
        throw io_error("cannot write: " + path.string());
    }
    os << text;
}

} // namespace

SyntheticResult generate_synthetic(const SyntheticSceneSpec& spec, uint64_t seed,
                                   const std::string& out_dir) {
    spec.validate();
    const fs::path root(out_dir);
    fs::create_directories(root / "clean");
    fs::create_directories(root / "hazy");

    Rng rng(seed);
    SyntheticResult result;
    result.scene = make_ground_truth(spec, rng);

    result.truth.haze_beta = spec.haze_beta;
    result.truth.airlight = spec.airlight;
    result.truth.tint_degree = spec.tint_degree;
    const int tint_n = sh_count(spec.tint_degree);
    result.truth.tint_coeffs.assign(static_cast<size_t>(tint_n) * 3, 0.0);
    for (int i = 1; i < tint_n; ++i) { // DC stays zero: tint is purely directional
        for (int c = 0; c < 3; ++c) {
            result.truth.tint_coeffs[static_cast<size_t>(i) * 3 + c] =
                rng.uniform(-spec.tint_amplitude, spec.tint_amplitude);
        }
    }

    const Vec3 center = spec.bounds.center();
    const double f = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * M_PI / 180.0);
    std::vector<Camera> cams;
    cams.reserve(spec.camera_count);
    for (int i = 0; i < spec.camera_count; ++i) {
        const double theta = 2.0 * M_PI * i / spec.camera_count;
        const Vec3 eye{center.x + spec.ring_radius * std::cos(theta),
                       center.y + spec.ring_height,
                       center.z + spec.ring_radius * std::sin(theta)};
        Camera cam = Camera::look_at(eye, center, Vec3{0.0, 1.0, 0.0}, spec.width, spec.height,
                                     f, f, spec.width * 0.5, spec.height * 0.5);
        cam.id = frame_name(i);
        cams.push_back(cam);
    }

    const RasterizeConfig rcfg;
    for (int i = 0; i < spec.camera_count; ++i) {
        // Single worker keeps the generator deterministic byte for byte.
        RenderOutputs out = rasterize(result.scene, cams[i], rcfg, 1);
        const std::vector<Vec3> rays = ray_direction_field(cams[i]);
        Image hazy(spec.width, spec.height);
        for (size_t p = 0; p < rays.size(); ++p) {
            const Vec3 tint = evaluate_tint(result.truth, rays[p]);
            for (int c = 0; c < 3; ++c) {
                hazy.data[p * 3 + c] = (1.0 - spec.haze_beta) * out.image.data[p * 3 + c] +
                                       spec.haze_beta * spec.airlight[c] + tint[c];
            }
        }
        write_image(out.image, (root / "clean" / (frame_name(i) + ".png")).string());
        write_image(hazy, (root / "hazy" / (frame_name(i) + ".png")).string());
    }

    write_text(root / "manifest.json", manifest_json(spec, cams, "hazy").dump(2) + "\n");
    write_text(root / "manifest_clean.json", manifest_json(spec, cams, "clean").dump(2) + "\n");

    nlohmann::ordered_json truth;
    truth["haze_beta"] = result.truth.haze_beta;
    truth["airlight"] = {result.truth.airlight.x, result.truth.airlight.y,
                         result.truth.airlight.z};
    truth["tint_degree"] = result.truth.tint_degree;
    truth["tint_coeffs"] = result.truth.tint_coeffs;
    write_text(root / "truth.json", truth.dump(2) + "\n");

    save_checkpoint(result.scene, (root / "scene_gt.smgs").string());

    result.dataset = load_dataset(out_dir);
    return result;
}

SyntheticTruth load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("truth file not found: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw decode_error(std::string("malformed truth file: ") + e.what());
    }
    SyntheticTruth t;
    t.haze_beta = j.at("haze_beta").get<double>();
    const auto& a = j.at("airlight");
    t.airlight = Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
    t.tint_degree = j.at("tint_degree").get<int>();
    t.tint_coeffs = j.at("tint_coeffs").get<std::vector<double>>();
    if (t.tint_coeffs.size() != static_cast<size_t>(sh_count(t.tint_degree)) * 3) {
        throw decode_error("truth file tint coefficients do not match the declared degree");
    }
    return t;
}

} // namespace smokegs
