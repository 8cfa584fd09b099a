#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brushtrace/dataset.h"
#include "brushtrace/image.h"

namespace brushtrace {

enum class StrokeStyle : std::uint8_t { HumanLike, RobotLike };

// Procedural stroke model. Human-like strokes are long polylines whose heading
// drifts with a constant curvature plus per-step angular noise, and whose
// width tapers toward both ends. Robot-like strokes are short straight
// segments anchored on a jittered grid with near-constant width.
struct StyleParams {
    StrokeStyle style = StrokeStyle::HumanLike;
    int stroke_count_min = 0;
    int stroke_count_max = 0;
    double length_min = 0.0;  // pixels
    double length_max = 0.0;
    double step = 4.0;           // polyline step, pixels
    double turn_sigma = 0.0;     // per-step heading noise, radians
    double curvature_max = 0.0;  // |constant curvature|, radians per pixel
    double width_min = 0.0;      // pixels, at the widest point
    double width_max = 0.0;
    double taper = 0.0;         // width at the ends = (1 - taper) * peak
    double width_jitter = 0.0;  // relative per-stroke width noise
    double grid_spacing = 0.0;  // robot anchors; 0 = free placement
    double grid_jitter = 0.0;
    double angle_step = 0.0;  // headings snap to multiples of this, radians; 0 = free
    double angle_jitter = 0.0;  // noise added after snapping, radians
    double intensity_min = 0.15;
    double intensity_max = 0.6;
    bool blank_corner = true;  // keep one corner unpainted

    static StyleParams human();
    static StyleParams robot();

    Author author() const { return style == StrokeStyle::HumanLike ? Author::Human : Author::Robot; }
    // Variance of the heading change per unit length.
    double curvature_variance() const;
    // Variance of the width profile relative to the peak width.
    double width_variance() const;
    void validate() const;
};

struct SyntheticPainting {
    GrayImage image;
    std::vector<std::uint8_t> mask;     // 0 blank, 1 human, 2 robot (last author wins)
    std::vector<std::uint8_t> touched;  // bit 0 human, bit 1 robot, over the whole render
    std::uint64_t seed = 0;
    std::string provenance;

    double painted_fraction() const;
    // Fraction of pixels touched by both authors.
    double overlap_fraction() const;
};

// Throws ConfigError when size is below the patch size.
SyntheticPainting generate_pure(const StyleParams& style, int size, std::uint64_t seed);
// mix in (0,1) is style_a's share of the stroke budget; otherwise UsageError.
SyntheticPainting generate_hybrid(const StyleParams& style_a, const StyleParams& style_b, int size, std::uint64_t seed,
                                  double mix = 0.5);

// Bounding rectangles of connected groups of grid windows in which both
// authors cover at least `min_fraction` of the window.
std::vector<AnnotationRegion> annotate_mixed_regions(const std::vector<std::uint8_t>& mask, int width, int height,
                                                     const std::string& painting_id, int window = kDefaultPatchSize,
                                                     int stride = kDefaultStride, double min_fraction = 0.1);

struct CorpusInfo {
    std::filesystem::path manifest;
    std::filesystem::path annotations;
    std::vector<ManifestEntry> entries;
    std::vector<AnnotationRegion> regions;
};

// Writes <id>.png, <id>_mask.png, manifest.jsonl and annotations.jsonl.
// Painting IDs are human_NN, robot_NN, hybrid_NN.
CorpusInfo emit_corpus(int n_human, int n_robot, int n_hybrid, int size, std::uint64_t base_seed,
                       const std::filesystem::path& out_dir);

}  // namespace brushtrace
