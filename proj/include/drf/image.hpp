#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace drf {

/// RGB image, row-major, doubles in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // height * width * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    double& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    double at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

/// 8-bit PNG round trip. Values are clamped to [0,1] and quantized with
/// round(v * 255) on write.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Lossless float dump in the DRF container format, for exact comparisons.
void write_image_dump(const std::string& path, const Image& img);
Image read_image_dump(const std::string& path);

std::uint8_t quantize8(double v);

}  // namespace drf
