#include "drf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "drf/error.hpp"
#include "drf/io.hpp"

namespace drf {

std::uint8_t quantize8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0) throw Error("image: empty image for " + path);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("image: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("image: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("image: libpng write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                row[static_cast<std::size_t>(c) * 3 + ch] = quantize8(img.at(r, c, ch));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error("image: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("image: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("image: not a readable PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit RGB.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    Image img(w, h);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = row[static_cast<std::size_t>(c) * 3 + ch] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_image_dump(const std::string& path, const Image& img) {
    Container c;
    c.header["version"] = 1;
    c.header["kind"] = "image";
    c.header["width"] = img.width;
    c.header["height"] = img.height;
    c.arrays["rgb"] = img.data;
    write_container(path, c);
}

Image read_image_dump(const std::string& path) {
    Container c = read_container(path);
    if (c.header.value("kind", std::string()) != "image")
        throw Error("image: " + path + " is not an image dump");
    Image img(c.header.at("width").get<int>(), c.header.at("height").get<int>());
    img.data = c.arrays.at("rgb");
    if (img.data.size() != img.pixels() * 3)
        throw Error("image: dump size mismatch in " + path);
    return img;
}

}  // namespace drf
