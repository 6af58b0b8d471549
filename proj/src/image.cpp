#include "nrf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace nrf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

bool host_is_little_endian() {
    const std::uint16_t v = 1;
    std::uint8_t b;
    std::memcpy(&b, &v, 1);
    return b == 1;
}

}  // namespace

void write_pfm(const std::string& path, const ImageF& img) {
    if (img.channels != 1 && img.channels != 3)
        fail(path, "PFM supports 1 or 3 channels");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");
    std::fprintf(f.get(), "%s\n%d %d\n-1.0\n", img.channels == 3 ? "PF" : "Pf", img.width, img.height);
    // PFM scanlines run bottom-to-top.
    const std::size_t row_elems = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = img.height - 1; y >= 0; --y) {
        const float* row = img.data.data() + static_cast<std::size_t>(y) * row_elems;
        if (std::fwrite(row, sizeof(float), row_elems, f.get()) != row_elems)
            fail(path, "short write");
    }
}

ImageF read_pfm(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open");
    char magic[3] = {0, 0, 0};
    if (std::fscanf(f.get(), "%2s", magic) != 1) fail(path, "missing PFM magic");
    int channels;
    if (std::strcmp(magic, "PF") == 0) channels = 3;
    else if (std::strcmp(magic, "Pf") == 0) channels = 1;
    else fail(path, "not a PFM file");
    int w, h;
    double scale;
    if (std::fscanf(f.get(), "%d %d %lf", &w, &h, &scale) != 3) fail(path, "bad PFM header");
    if (w <= 0 || h <= 0) fail(path, "bad PFM dimensions");
    if (std::fgetc(f.get()) != '\n') fail(path, "bad PFM header terminator");
    const bool file_little = scale < 0;
    if (file_little != host_is_little_endian())
        fail(path, "PFM endianness does not match host");
    ImageF img(w, h, channels);
    const std::size_t row_elems = static_cast<std::size_t>(w) * channels;
    for (int y = h - 1; y >= 0; --y) {
        float* row = img.data.data() + static_cast<std::size_t>(y) * row_elems;
        if (std::fread(row, sizeof(float), row_elems, f.get()) != row_elems)
            fail(path, "truncated PFM data");
    }
    return img;
}

namespace {

void write_png(const std::string& path, const std::uint8_t* data, int width, int height,
               int color_type, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng error while writing");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const std::uint8_t* data, int width, int height) {
    write_png(path, data, width, height, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_rgb8(const std::string& path, const std::uint8_t* data, int width, int height) {
    write_png(path, data, width, height, PNG_COLOR_TYPE_RGB, 3);
}

std::vector<std::uint8_t> read_png_gray(const std::string& path, int& width, int& height) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng error while reading");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    // Normalize anything to 8-bit grayscale.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = out.data() + static_cast<std::size_t>(y) * width;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_mask_png(const std::string& path, const MaskImage& mask, int width, int height) {
    std::vector<std::uint8_t> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
    write_png_gray(path, bytes.data(), width, height);
}

MaskImage read_mask_png(const std::string& path, int& width, int& height) {
    auto bytes = read_png_gray(path, width, height);
    MaskImage mask(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) mask[i] = bytes[i] >= 128 ? 1 : 0;
    return mask;
}

float linear_to_srgb(float v) {
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return v <= 0.0031308f ? 12.92f * v : 1.055f * std::pow(v, 1.0f / 2.4f) - 0.055f;
}

void write_png_srgb(const std::string& path, const ImageF& linear_rgb) {
    if (linear_rgb.channels != 3) fail(path, "write_png_srgb expects 3 channels");
    std::vector<std::uint8_t> bytes(linear_rgb.data.size());
    for (std::size_t i = 0; i < linear_rgb.data.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(linear_to_srgb(linear_rgb.data[i]) * 255.0f));
    write_png_rgb8(path, bytes.data(), linear_rgb.width, linear_rgb.height);
}

}  // namespace nrf
