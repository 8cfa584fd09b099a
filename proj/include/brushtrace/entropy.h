#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "brushtrace/dataset.h"
#include "brushtrace/patches.h"

namespace brushtrace {

inline constexpr double kDefaultTau = 0.2;

// Entropy in bits of the human/robot posterior renormalized without the blank
// class. Returns nullopt when p_human + p_robot <= tau. Throws UsageError when
// the posterior has an entry outside [0,1] or does not sum to 1 within 1e-6.
std::optional<double> conditional_entropy(const std::array<double, 3>& posterior, double tau = kDefaultTau);

struct EntropyRecord {
    std::string painting_id;
    int x = 0;
    int y = 0;
    bool included = false;
    double h = 0.0;  // meaningful only when included
};

struct EntropyStats {
    std::size_t n_patches = 0;
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    double q25 = 0.0;
    double q75 = 0.0;
    std::array<double, 3> tail_fractions{};  // fraction with H > 0.5, 0.7, 0.9
    std::vector<std::pair<std::string, double>> painting_medians;  // sorted by painting id
    double mean_of_medians = 0.0;
    double std_of_medians = 0.0;
};

inline constexpr std::array<double, 3> kTailThresholds{0.5, 0.7, 0.9};

// Linear interpolation between order statistics of sorted data, q in [0,1].
double percentile(std::span<const double> sorted, double q);
double median_of(std::vector<double> values);

// Pooled statistics over included records plus per-painting medians.
// Throws UsageError when no record is included.
EntropyStats summarize(std::span<const EntropyRecord> records);

// Grid patches whose overlap with the union of `regions` (filtered to
// `painting_id`) covers at least half the patch area. Regions must satisfy
// 0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height; otherwise ValidationError.
std::vector<PatchCoord> select_annotated_patches(int width, int height, const std::string& painting_id,
                                                 std::span<const AnnotationRegion> regions,
                                                 int size = kDefaultPatchSize, int stride = kDefaultStride);

// Area of the union of axis-aligned rectangles clipped to [x0,x1) x [y0,y1).
std::int64_t union_area_within(std::span<const AnnotationRegion> regions, int x0, int y0, int x1, int y1);

struct MannWhitneyResult {
    double u = 0.0;        // min(U_a, U_b)
    double p = 1.0;        // exact when n_a + n_b <= 12, otherwise normal approximation
    bool exact = false;
    double p_exact = 1.0;  // always by enumeration
    double p_normal = 1.0;
};

inline constexpr std::size_t kExactEnumerationLimit = 12;

// Two-sided test with midranks for ties. Throws UsageError on empty input.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);
// Exact two-sided p: fraction of the C(n_a+n_b, n_a) relabelings of the pooled
// values whose min-U is at most the observed one.
double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b);
// Normal approximation with tie and continuity corrections.
double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b);

nlohmann::json to_json(const EntropyStats& s);
nlohmann::json to_json(const MannWhitneyResult& r);

}  // namespace brushtrace
