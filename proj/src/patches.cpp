#include "brushtrace/patches.h"

#include <algorithm>
#include <cmath>

#include "brushtrace/errors.h"

namespace brushtrace {

std::vector<PatchCoord> patch_grid(int width, int height, int size, int stride) {
    if (size < 1) throw UsageError("patch size must be at least 1");
    if (stride < 1 || stride > size) throw UsageError("stride must lie in [1, patch size]");
    std::vector<PatchCoord> grid;
    for (int y = 0; y + size <= height; y += stride) {
        for (int x = 0; x + size <= width; x += stride) grid.push_back({x, y});
    }
    return grid;
}

std::vector<PatchRecord> extract_patches(const GrayImage& image, int size, int stride) {
    std::vector<PatchRecord> out;
    for (const PatchCoord& c : patch_grid(image.width, image.height, size, stride)) {
        PatchRecord rec;
        rec.painting_id = image.painting_id;
        rec.x = c.x;
        rec.y = c.y;
        rec.size = size;
        rec.pixels.resize(static_cast<std::size_t>(size) * size);
        for (int row = 0; row < size; ++row) {
            const float* src = image.pixels.data() + static_cast<std::size_t>(c.y + row) * image.width + c.x;
            std::copy(src, src + size, rec.pixels.begin() + static_cast<std::ptrdiff_t>(row) * size);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

double white_fraction(std::span<const float> pixels) {
    if (pixels.empty()) return 0.0;
    const auto white = std::count_if(pixels.begin(), pixels.end(), [](float v) { return v >= kWhitePixelThreshold; });
    return static_cast<double>(white) / static_cast<double>(pixels.size());
}

ClassLabel label_patch(const PatchRecord& patch, Author painting_author) {
    const auto author = author_class(painting_author);
    if (!author) throw UsageError("hybrid paintings are not auto-labeled (patch of " + patch.painting_id + ")");
    return white_fraction(patch.pixels) >= kBlankFraction ? ClassLabel::Blank : *author;
}

void label_patches(std::vector<PatchRecord>& patches, Author painting_author) {
    for (PatchRecord& p : patches) p.label = label_patch(p, painting_author);
}

namespace {

// weights[o] lists (source index, coverage weight) pairs for output cell o.
std::vector<std::vector<std::pair<int, double>>> area_weights(int src, int dst) {
    std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int o = 0; o < dst; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (int i = static_cast<int>(std::floor(lo)); i < std::min(src, static_cast<int>(std::ceil(hi))); ++i) {
            const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (cover > 0.0) w[static_cast<std::size_t>(o)].emplace_back(i, cover / scale);
        }
    }
    return w;
}

}  // namespace

std::vector<float> resize_area(std::span<const float> src, int src_size, int dst_size) {
    if (src.size() != static_cast<std::size_t>(src_size) * src_size) throw ShapeError("resize_area: raster is not square");
    if (dst_size < 1) throw UsageError("resize_area: target size must be positive");
    if (src_size == dst_size) return {src.begin(), src.end()};

    const auto w = area_weights(src_size, dst_size);
    // Rows first, then columns.
    std::vector<double> tmp(static_cast<std::size_t>(src_size) * dst_size, 0.0);
    for (int y = 0; y < src_size; ++y) {
        const float* row = src.data() + static_cast<std::size_t>(y) * src_size;
        for (int ox = 0; ox < dst_size; ++ox) {
            double acc = 0.0;
            for (const auto& [i, wt] : w[static_cast<std::size_t>(ox)]) acc += wt * row[i];
            tmp[static_cast<std::size_t>(y) * dst_size + ox] = acc;
        }
    }
    std::vector<float> out(static_cast<std::size_t>(dst_size) * dst_size);
    for (int oy = 0; oy < dst_size; ++oy) {
        for (int ox = 0; ox < dst_size; ++ox) {
            double acc = 0.0;
            for (const auto& [i, wt] : w[static_cast<std::size_t>(oy)]) acc += wt * tmp[static_cast<std::size_t>(i) * dst_size + ox];
            out[static_cast<std::size_t>(oy) * dst_size + ox] = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace brushtrace
