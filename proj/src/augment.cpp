#include "brushtrace/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "brushtrace/errors.h"

namespace brushtrace {

void AugmentationConfig::validate() const {
    if (!(rrc_scale_min > 0.0 && rrc_scale_min <= rrc_scale_max && rrc_scale_max <= 1.0)) {
        throw ConfigError("augmentation: rrc_scale must be an interval inside (0, 1]");
    }
    if (blur_kernel < 1 || blur_kernel % 2 == 0) throw ConfigError("augmentation: blur_kernel must be odd and >= 1");
    if (!(apply_prob >= 0.0 && apply_prob <= 1.0)) throw ConfigError("augmentation: apply_prob must lie in [0, 1]");
    if (rotation_deg < 0.0 || crop_pad < 0 || blur_sigma <= 0.0) throw ConfigError("augmentation: negative parameter");
}

std::uint64_t patch_stream_seed(std::uint64_t seed, std::string_view painting_id, int x, int y) {
    return mix_seed(mix_seed(seed, hash_string(painting_id)), static_cast<std::uint64_t>(x),
                    static_cast<std::uint64_t>(y));
}

namespace {

void check_square(std::span<const float> patch, int size) {
    if (size < 1 || patch.size() != static_cast<std::size_t>(size) * size) throw ShapeError("augment: patch is not size x size");
}

// Bilinear sample; samples outside the raster read as `fill`.
float sample_fill(std::span<const float> p, int size, double sx, double sy, float fill) {
    const double fx = std::floor(sx), fy = std::floor(sy);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const double ax = sx - fx, ay = sy - fy;
    auto px = [&](int x, int y) -> double {
        if (x < 0 || y < 0 || x >= size || y >= size) return fill;
        return p[static_cast<std::size_t>(y) * size + x];
    };
    const double top = px(x0, y0) * (1 - ax) + px(x0 + 1, y0) * ax;
    const double bot = px(x0, y0 + 1) * (1 - ax) + px(x0 + 1, y0 + 1) * ax;
    return static_cast<float>(top * (1 - ay) + bot * ay);
}

}  // namespace

std::vector<float> rotate(std::span<const float> patch, int size, double degrees) {
    check_square(patch, size);
    const double th = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double mid = (size - 1) / 2.0;
    std::vector<float> out(patch.size());
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double ox = x - mid, oy = y - mid;
            const double sx = ox * c - oy * s + mid;
            const double sy = ox * s + oy * c + mid;
            out[static_cast<std::size_t>(y) * size + x] = std::clamp(sample_fill(patch, size, sx, sy, 1.0f), 0.0f, 1.0f);
        }
    }
    return out;
}

std::vector<float> flip_horizontal(std::span<const float> patch, int size) {
    check_square(patch, size);
    std::vector<float> out(patch.size());
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) out[static_cast<std::size_t>(y) * size + x] = patch[static_cast<std::size_t>(y) * size + (size - 1 - x)];
    }
    return out;
}

std::vector<float> flip_vertical(std::span<const float> patch, int size) {
    check_square(patch, size);
    std::vector<float> out(patch.size());
    for (int y = 0; y < size; ++y) {
        std::copy_n(patch.begin() + static_cast<std::ptrdiff_t>(size - 1 - y) * size, size,
                    out.begin() + static_cast<std::ptrdiff_t>(y) * size);
    }
    return out;
}

std::vector<float> resized_crop(std::span<const float> patch, int size, int x0, int y0, int side) {
    check_square(patch, size);
    if (side < 1 || x0 < 0 || y0 < 0 || x0 + side > size || y0 + side > size) throw UsageError("resized_crop: crop outside patch");
    std::vector<float> out(patch.size());
    const double scale = static_cast<double>(side) / size;
    for (int y = 0; y < size; ++y) {
        const double sy = std::clamp(y0 + (y + 0.5) * scale - 0.5, static_cast<double>(y0), static_cast<double>(y0 + side - 1));
        for (int x = 0; x < size; ++x) {
            const double sx = std::clamp(x0 + (x + 0.5) * scale - 0.5, static_cast<double>(x0), static_cast<double>(x0 + side - 1));
            out[static_cast<std::size_t>(y) * size + x] = std::clamp(sample_fill(patch, size, sx, sy, 1.0f), 0.0f, 1.0f);
        }
    }
    return out;
}

std::vector<float> gaussian_blur(std::span<const float> patch, int size, int kernel, double sigma) {
    check_square(patch, size);
    if (kernel < 1 || kernel % 2 == 0) throw UsageError("gaussian_blur: kernel must be odd");
    if (kernel == 1) return {patch.begin(), patch.end()};
    const int r = kernel / 2;
    std::vector<double> taps(static_cast<std::size_t>(kernel));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += taps[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    for (double& t : taps) t /= sum;

    std::vector<double> tmp(patch.size());
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * patch[static_cast<std::size_t>(y) * size + std::clamp(x + i, 0, size - 1)];
            tmp[static_cast<std::size_t>(y) * size + x] = acc;
        }
    }
    std::vector<float> out(patch.size());
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += taps[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, size - 1)) * size + x];
            out[static_cast<std::size_t>(y) * size + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
    return out;
}

std::vector<float> pad_crop(std::span<const float> patch, int size, int pad, int dx, int dy) {
    check_square(patch, size);
    if (dx < 0 || dy < 0 || dx > 2 * pad || dy > 2 * pad) throw UsageError("pad_crop: offset outside padded raster");
    std::vector<float> out(patch.size(), 1.0f);
    for (int y = 0; y < size; ++y) {
        const int sy = y + dy - pad;
        if (sy < 0 || sy >= size) continue;
        for (int x = 0; x < size; ++x) {
            const int sx = x + dx - pad;
            if (sx >= 0 && sx < size) out[static_cast<std::size_t>(y) * size + x] = patch[static_cast<std::size_t>(sy) * size + sx];
        }
    }
    return out;
}

std::vector<float> augment(std::span<const float> patch, int size, const AugmentationConfig& config, Rng& rng) {
    config.validate();
    check_square(patch, size);
    std::vector<float> cur(patch.begin(), patch.end());
    if (rng.bernoulli(config.apply_prob) && config.rotation_deg > 0.0) {
        cur = rotate(cur, size, rng.uniform(-config.rotation_deg, config.rotation_deg));
    }
    if (config.flip_h && rng.bernoulli(config.apply_prob)) cur = flip_horizontal(cur, size);
    if (config.flip_v && rng.bernoulli(config.apply_prob)) cur = flip_vertical(cur, size);
    if (rng.bernoulli(config.apply_prob)) {
        const double area = rng.uniform(config.rrc_scale_min, config.rrc_scale_max);
        const int side = std::clamp(static_cast<int>(std::lround(size * std::sqrt(area))), 1, size);
        const int x0 = static_cast<int>(rng.below(static_cast<std::size_t>(size - side + 1)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::size_t>(size - side + 1)));
        cur = resized_crop(cur, size, x0, y0, side);
    }
    if (config.blur_kernel > 1 && rng.bernoulli(config.apply_prob)) {
        cur = gaussian_blur(cur, size, config.blur_kernel, config.blur_sigma);
    }
    if (config.crop_pad > 0 && rng.bernoulli(config.apply_prob)) {
        const int dx = static_cast<int>(rng.below(static_cast<std::size_t>(2 * config.crop_pad + 1)));
        const int dy = static_cast<int>(rng.below(static_cast<std::size_t>(2 * config.crop_pad + 1)));
        cur = pad_crop(cur, size, config.crop_pad, dx, dy);
    }
    return cur;
}

}  // namespace brushtrace
