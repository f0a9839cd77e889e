// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/data/data.hpp"

#include "smokegs/core/errors.hpp"
#include "smokegs/core/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace smokegs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw io_error(std::string(what) + " not found: " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw decode_error(std::string("malformed ") + what + " " + path + ": " + e.what());
    }
}

double number_field(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number()) {
        throw decode_error("manifest frame " + ctx + " is missing numeric field '" + key + "'");
    }
    return j[key].get<double>();
}

Mat4 pose_from_json(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 4) {
        throw decode_error("manifest frame " + ctx + " pose must be a 4x4 array");
    }
    Mat4 p;
    for (int r = 0; r < 4; ++r) {
        const json& row = j[r];
        if (!row.is_array() || row.size() != 4) {
            throw decode_error("manifest frame " + ctx + " pose must be a 4x4 array");
        }
        for (int c = 0; c < 4; ++c) {
            if (!row[c].is_number()) {
                throw decode_error("manifest frame " + ctx + " pose has a non-numeric entry");
            }
            p(r, c) = row[c].get<double>();
        }
    }
    return p;
}

Vec3 vec3_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) {
        throw decode_error(std::string("manifest field '") + what + "' must be a 3-vector");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

Dataset load_dataset(const std::string& root, int downscale) {
    if (downscale < 1) {
        throw invalid_argument_error("downscale factor must be >= 1");
    }
    const fs::path root_path(root);
    const json manifest = parse_json_file((root_path / "manifest.json").string(), "manifest");

    Dataset ds;
    if (!manifest.contains("width") || !manifest.contains("height")) {
        throw decode_error("manifest must declare global width and height");
    }
    const int full_w = manifest["width"].get<int>();
    const int full_h = manifest["height"].get<int>();
    if (full_w < 1 || full_h < 1 || full_w % downscale != 0 || full_h % downscale != 0) {
        throw invalid_argument_error("downscale factor must divide the dataset resolution");
    }
    ds.width = full_w / downscale;
    ds.height = full_h / downscale;
    if (manifest.contains("pose_convention") &&
        manifest["pose_convention"].get<std::string>() != "opengl_c2w") {
        throw decode_error("unsupported pose_convention; expected opengl_c2w");
    }
    if (manifest.contains("scene_bounds")) {
        const json& b = manifest["scene_bounds"];
        Bounds bounds;
        bounds.min = vec3_from_json(b.at("min"), "scene_bounds.min");
        bounds.max = vec3_from_json(b.at("max"), "scene_bounds.max");
        ds.bounds = bounds;
    }
    if (!manifest.contains("frames") || !manifest["frames"].is_array() ||
        manifest["frames"].empty()) {
        throw decode_error("manifest has no frames");
    }

    for (const json& f : manifest["frames"]) {
        DatasetFrame frame;
        frame.id = f.contains("id") ? f["id"].get<std::string>()
                                    : "frame_" + std::to_string(ds.frames.size());
        if (f.contains("image") && !f["image"].is_null()) {
            frame.image_path = (root_path / f["image"].get<std::string>()).string();
        }
        if (f.contains("split")) {
            frame.split = f["split"].get<std::string>();
            if (frame.split != "train" && frame.split != "holdout") {
                throw decode_error("frame " + frame.id + " has unknown split '" + frame.split +
                                   "'");
            }
        }
        Camera cam;
        cam.id = frame.id;
        cam.width = full_w;
        cam.height = full_h;
        cam.fx = number_field(f, "fx", frame.id);
        cam.fy = number_field(f, "fy", frame.id);
        cam.cx = number_field(f, "cx", frame.id);
        cam.cy = number_field(f, "cy", frame.id);
        if (!f.contains("pose")) {
            throw decode_error("manifest frame " + frame.id + " is missing its pose");
        }
        cam.pose = pose_from_json(f["pose"], frame.id);
        try {
            cam.validate();
        } catch (const invalid_argument_error& e) {
            throw data_error("frame " + frame.id + " has an invalid camera: " + e.what());
        }
        frame.camera = downscale > 1 ? cam.downscaled(downscale) : cam;
        ds.frames.push_back(std::move(frame));
    }

    ds.images.assign(ds.frames.size(), Image());
    parallel_chunks(ds.frames.size(), resolve_workers(0), [&](int, size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const DatasetFrame& frame = ds.frames[i];
            if (!frame.has_image()) {
                continue;
            }
            Image img = read_image(frame.image_path);
            if (img.width != full_w || img.height != full_h) {
                throw shape_mismatch_error(
                    "frame " + frame.id + " is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ", manifest says " + std::to_string(full_w) +
                    "x" + std::to_string(full_h));
            }
            ds.images[i] = downscale > 1 ? downscale_image(img, downscale) : std::move(img);
        }
    });
    return ds;
}

void convert_transforms(const std::string& transforms_path, const std::string& out_manifest,
                        int width, int height) {
    if (width < 1 || height < 1) {
        throw invalid_argument_error("converter needs the true image resolution");
    }
    const json t = parse_json_file(transforms_path, "transforms file");
    if (!t.contains("camera_angle_x") || !t.contains("frames")) {
        throw decode_error("transforms file lacks camera_angle_x or frames");
    }
    const double angle_x = t["camera_angle_x"].get<double>();
    const double fx = 0.5 * width / std::tan(0.5 * angle_x);

    nlohmann::ordered_json out;
    out["width"] = width;
    out["height"] = height;
    out["pose_convention"] = "opengl_c2w";
    out["frames"] = json::array();
    int index = 0;
    for (const json& f : t["frames"]) {
        nlohmann::ordered_json frame;
        std::string file = f.at("file_path").get<std::string>();
        if (file.rfind("./", 0) == 0) {
            file = file.substr(2);
        }
        if (file.size() < 4 || file.compare(file.size() - 4, 4, ".png") != 0) {
            file += ".png";
        }
        frame["id"] = "frame_" + std::to_string(index++);
        frame["image"] = file;
        frame["fx"] = fx;
        frame["fy"] = fx;
        frame["cx"] = width * 0.5;
        frame["cy"] = height * 0.5;
        frame["pose"] = f.at("transform_matrix");
        out["frames"].push_back(std::move(frame));
    }
    std::ofstream os(out_manifest);
    if (!os) {
        throw io_error("cannot write manifest: " + out_manifest);
    }
    os << out.dump(2) << "\n";
}

} // namespace smokegs
