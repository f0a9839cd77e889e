// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/data/data.hpp"

#include "smokegs/core/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

namespace smokegs {

namespace {

struct FileCloser {
    std::FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) {
            std::fclose(fp);
        }
    }
};

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() {
        if (png) {
            png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        }
    }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() {
        if (png) {
            png_destroy_write_struct(&png, info ? &info : nullptr);
        }
    }
};

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

} // namespace

void write_image(const Image& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 ||
        img.data.size() != static_cast<size_t>(img.width) * img.height * 3) {
        throw invalid_argument_error("cannot write a malformed image");
    }
    FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.fp) {
        throw io_error("cannot open for writing: " + path);
    }
    PngWriteGuard g;
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!g.png) {
        throw io_error("png writer allocation failed");
    }
    g.info = png_create_info_struct(g.png);
    if (!g.info) {
        throw io_error("png writer allocation failed");
    }
    if (setjmp(png_jmpbuf(g.png))) {
        throw io_error("png write failed: " + path);
    }
    png_init_io(g.png, file.fp);
    // Pinned so output bytes do not depend on the libpng default of the day.
    png_set_compression_level(g.png, 6);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);

    std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = img.data[(static_cast<size_t>(y) * img.width + x) * 3 + c];
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                const double q = std::floor(v * 255.0 + 0.5); // round half up
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<png_byte>(q > 255.0 ? 255.0 : q);
            }
        }
        png_write_row(g.png, row.data());
    }
    png_write_end(g.png, nullptr);
}

Image read_image(const std::string& path, bool srgb_decode) {
    FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.fp) {
        throw io_error("cannot open image: " + path);
    }
    PngReadGuard g;
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!g.png) {
        throw io_error("png reader allocation failed");
    }
    g.info = png_create_info_struct(g.png);
    if (!g.info) {
        throw io_error("png reader allocation failed");
    }
    std::vector<png_byte> rows;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(g.png))) {
        throw decode_error("failed to decode PNG: " + path);
    }
    png_init_io(g.png, file.fp);
    png_read_info(g.png, g.info);

    const png_uint_32 w = png_get_image_width(g.png, g.info);
    const png_uint_32 h = png_get_image_height(g.png, g.info);
    const int bit_depth = png_get_bit_depth(g.png, g.info);
    const int color_type = png_get_color_type(g.png, g.info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(g.png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(g.png);
    }
    if (png_get_valid(g.png, g.info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(g.png);
    }
    if (bit_depth == 16) {
        png_set_strip_16(g.png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(g.png);
    }
    png_set_strip_alpha(g.png);
    png_read_update_info(g.png, g.info);

    const size_t rowbytes = png_get_rowbytes(g.png, g.info);
    if (rowbytes != static_cast<size_t>(w) * 3) {
        throw decode_error("unsupported PNG layout: " + path);
    }
    rows.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        row_ptrs[y] = rows.data() + static_cast<size_t>(y) * rowbytes;
    }
    png_read_image(g.png, row_ptrs.data());
    png_read_end(g.png, nullptr);

    Image img(static_cast<int>(w), static_cast<int>(h));
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = rows[i] / 255.0;
        img.data[i] = srgb_decode ? srgb_to_linear(v) : v;
    }
    return img;
}

Image downscale_image(const Image& img, int factor) {
    if (factor < 1) {
        throw invalid_argument_error("downscale factor must be >= 1");
    }
    if (factor == 1) {
        return img;
    }
    if (img.width % factor != 0 || img.height % factor != 0) {
        throw invalid_argument_error("downscale factor must divide both image dimensions");
    }
    const int w = img.width / factor;
    const int h = img.height / factor;
    Image out(w, h);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    for (int dx = 0; dx < factor; ++dx) {
                        s += img.at(x * factor + dx, y * factor + dy, c);
                    }
                }
                out.at(x, y, c) = s * inv;
            }
        }
    }
    return out;
}

} // namespace smokegs
