#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nrf {

// Row-major, top-down, interleaved channels; values are linear scalars.
struct ImageF {
    int width = 0, height = 0, channels = 0;
    std::vector<float> data;

    ImageF() = default;
    ImageF(int w, int h, int c) : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

    float* px(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
    const float* px(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    float& at(int x, int y, int c) { return px(x, y)[c]; }
    float at(int x, int y, int c) const { return px(x, y)[c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

using MaskImage = std::vector<std::uint8_t>;  // width*height, values 0/1

// PFM, little-endian, rows stored bottom-to-top ("PF" for 3 channels, "Pf"
// for 1). Throws std::runtime_error with the offending path on any format or
// I/O problem.
void write_pfm(const std::string& path, const ImageF& img);
ImageF read_pfm(const std::string& path);

// 8-bit PNG. Masks are written as 0/255 grayscale.
void write_png_gray(const std::string& path, const std::uint8_t* data, int width, int height);
void write_png_rgb8(const std::string& path, const std::uint8_t* data, int width, int height);
std::vector<std::uint8_t> read_png_gray(const std::string& path, int& width, int& height);

void write_mask_png(const std::string& path, const MaskImage& mask, int width, int height);
MaskImage read_mask_png(const std::string& path, int& width, int& height);

// Linear [0,1] -> sRGB 8-bit image file (3-channel input).
void write_png_srgb(const std::string& path, const ImageF& linear_rgb);

float linear_to_srgb(float v);

}  // namespace nrf
