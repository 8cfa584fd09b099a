#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brushtrace/labels.h"

namespace brushtrace {

// Grayscale canvas, row-major, intensities in [0,1] (1 = white).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;
    std::string painting_id;
    Author author = Author::Human;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 1.0f);

    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// 8-bit RGB raster for heatmaps.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
};

// Decodes PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary/ASCII
// PGM/PPM (P2, P3, P5, P6). Color is reduced with 0.299R + 0.587G + 0.114B and
// intensities are rescaled to [0,1]. Throws IoError for unreadable files and
// FormatError for unsupported encodings.
GrayImage load_image(const std::filesystem::path& path);

// Pixel dimensions without decoding the payload.
std::pair<int, int> image_dimensions(const std::filesystem::path& path);

// 8-bit grayscale PNG; intensities are clamped to [0,1] and rounded.
void save_gray_png(const std::filesystem::path& path, const GrayImage& image);
// Single-channel 8-bit PNG of raw byte values (used for label masks).
void save_byte_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> load_byte_png(const std::filesystem::path& path, int& width, int& height);
void save_rgb_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace brushtrace
