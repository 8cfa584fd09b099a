#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brushtrace/image.h"
#include "brushtrace/labels.h"

namespace brushtrace {

inline constexpr int kDefaultPatchSize = 300;
inline constexpr int kDefaultStride = 150;
// A pixel is white when its normalized intensity reaches this value.
inline constexpr float kWhitePixelThreshold = 0.98f;
// A patch is Blank when at least this fraction of its pixels are white.
inline constexpr double kBlankFraction = 0.95;

struct PatchCoord {
    int x = 0;
    int y = 0;

    friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

struct PatchRecord {
    std::string painting_id;
    int x = 0;
    int y = 0;
    int size = kDefaultPatchSize;
    std::optional<ClassLabel> label;
    std::vector<float> pixels;  // size * size, row-major
};

// Top-left offsets of every whole tile, row-major (y outer, x inner).
// Incomplete border tiles are dropped.
std::vector<PatchCoord> patch_grid(int width, int height, int size = kDefaultPatchSize, int stride = kDefaultStride);

// Tiles `image` on patch_grid(). Labels are left unset.
std::vector<PatchRecord> extract_patches(const GrayImage& image, int size = kDefaultPatchSize, int stride = kDefaultStride);

double white_fraction(std::span<const float> pixels);

// Blank when white_fraction >= 0.95, otherwise the painting's author.
// Hybrid authors are rejected with UsageError.
ClassLabel label_patch(const PatchRecord& patch, Author painting_author);
void label_patches(std::vector<PatchRecord>& patches, Author painting_author);

// Area-average resampling of a square raster (box filter with fractional
// pixel coverage). Identity when src_size == dst_size.
std::vector<float> resize_area(std::span<const float> src, int src_size, int dst_size);

}  // namespace brushtrace
