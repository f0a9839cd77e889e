// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/camera/camera.hpp"
#include "smokegs/core/types.hpp"
#include "smokegs/scene/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace smokegs {

/// 8-bit RGB PNG I/O. Values are treated as linear (v/255); writes clamp to
/// [0, 1] and quantize round-half-up, so 0.5 stores as byte 128.
void write_image(const Image& img, const std::string& path);
Image read_image(const std::string& path, bool srgb_decode = false);

/// Area-average downscale by an integer factor that divides both dimensions.
Image downscale_image(const Image& img, int factor);

struct DatasetFrame {
    std::string id;
    std::string image_path; // empty = render-only pose
    Camera camera;
    std::string split; // "", "train" or "holdout"

    bool has_image() const { return !image_path.empty(); }
};

struct Dataset {
    int width = 0;
    int height = 0;
    std::optional<Bounds> bounds;
    std::vector<DatasetFrame> frames;
    std::vector<Image> images; // parallel to frames; 0x0 when render-only
};

/// Reads <root>/manifest.json, decodes referenced images and applies the
/// downscale factor to both pixels and intrinsics. Distinct errors for a
/// missing manifest, unreadable images, non-rigid poses and resolution
/// mismatches.
Dataset load_dataset(const std::string& root, int downscale = 1);

/// Converts a transforms-style JSON file (camera_angle_x + per-frame
/// transform_matrix) into a manifest.json next to the images.
void convert_transforms(const std::string& transforms_path, const std::string& out_manifest,
                        int width, int height);

struct SyntheticSceneSpec {
    int gaussian_count = 500;
    Bounds bounds;
    int camera_count = 24;
    int holdout_count = 4;
    double ring_radius = 3.5;
    double ring_height = 1.0;
    int width = 128;
    int height = 128;
    double fov_deg = 50.0;
    double haze_beta = 0.2;       // global blend toward the airlight color
    double tint_amplitude = 0.15; // per-coefficient bound of the SH tint field
    int tint_degree = 2;
    Vec3 airlight{0.82, 0.87, 0.95};

    void validate() const;
};

/// Ground truth the generator records so tests can reconstruct the exact
/// degradation: I_hazy = (1 - beta) * I_clean + beta * A + tint(ray).
struct SyntheticTruth {
    double haze_beta = 0.0;
    Vec3 airlight;
    int tint_degree = 0;
    std::vector<double> tint_coeffs; // (deg+1)^2 x 3, basis-major, DC forced 0
};

Vec3 evaluate_tint(const SyntheticTruth& truth, const Vec3& world_dir);

/// Writes clean/, hazy/, manifest.json (hazy), manifest_clean.json,
/// truth.json and scene_gt.smgs under out_dir. Single-threaded and
/// deterministic by seed.
struct SyntheticResult {
    GaussianScene scene;
    Dataset dataset; // hazy manifest view, images loaded
    SyntheticTruth truth;
};

SyntheticResult generate_synthetic(const SyntheticSceneSpec& spec, uint64_t seed,
                                   const std::string& out_dir);

SyntheticTruth load_truth(const std::string& path);

} // namespace smokegs
