#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "brushtrace/rng.h"

namespace brushtrace {

struct AugmentationConfig {
    double rotation_deg = 15.0;  // max |angle|
    bool flip_h = true;
    bool flip_v = true;
    double rrc_scale_min = 0.8;  // random-resized-crop area fraction interval
    double rrc_scale_max = 1.0;
    int blur_kernel = 3;
    double blur_sigma = 0.8;
    int crop_pad = 10;
    double apply_prob = 0.5;  // per transform
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-patch stream seed derived from (seed, painting_id, x, y).
std::uint64_t patch_stream_seed(std::uint64_t seed, std::string_view painting_id, int x, int y);

// Applies, in order and each independently with probability apply_prob:
// rotation, horizontal flip, vertical flip, random resized crop, Gaussian
// blur, padded random crop. Output has the input's dimensions and stays in
// [0,1]; exposed regions are filled with white.
std::vector<float> augment(std::span<const float> patch, int size, const AugmentationConfig& config, Rng& rng);

// Individual transforms over a size x size raster.

// Positive angles rotate counterclockwise as displayed (y axis down), about
// the raster center ((size-1)/2, (size-1)/2). Bilinear; corners fill white.
std::vector<float> rotate(std::span<const float> patch, int size, double degrees);
std::vector<float> flip_horizontal(std::span<const float> patch, int size);
std::vector<float> flip_vertical(std::span<const float> patch, int size);
// Crops the side x side square at (x0, y0) and rescales it bilinearly to size.
std::vector<float> resized_crop(std::span<const float> patch, int size, int x0, int y0, int side);
// Separable Gaussian, edge-replicated borders.
std::vector<float> gaussian_blur(std::span<const float> patch, int size, int kernel, double sigma);
// Pads every border by `pad` white pixels and crops back at offset (dx, dy),
// with dx, dy in [0, 2*pad].
std::vector<float> pad_crop(std::span<const float> patch, int size, int pad, int dx, int dy);

}  // namespace brushtrace
