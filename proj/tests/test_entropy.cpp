#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "brushtrace/entropy.h"
#include "brushtrace/errors.h"
#include "brushtrace/rng.h"

using namespace brushtrace;

namespace {

std::array<double, 3> random_posterior(Rng& rng) {
    std::array<double, 3> p{};
    // Exponential spacings give a uniform draw from the simplex; occasional
    // exact zeros exercise the 0 log 0 convention.
    for (double& v : p) v = rng.bernoulli(0.05) ? 0.0 : -std::log(1.0 - rng.uniform());
    double s = p[0] + p[1] + p[2];
    if (s == 0.0) {
        p[0] = 1.0;
        s = 1.0;
    }
    for (double& v : p) v /= s;
    return p;
}

EntropyRecord rec(const std::string& id, double h, bool included = true) {
    EntropyRecord r;
    r.painting_id = id;
    r.included = included;
    r.h = h;
    return r;
}

// Mann-Whitney U by direct pair counting (ties count one half).
double pair_u(const std::vector<double>& a, const std::vector<double>& b) {
    double u = 0.0;
    for (double x : a)
        for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    return std::min(u, static_cast<double>(a.size() * b.size()) - u);
}

// Permutation-test p: every split of the pooled values into groups of the
// original sizes, counted by bitmask.
double permutation_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const double observed = pair_u(a, b);
    const unsigned n = static_cast<unsigned>(pooled.size());
    std::size_t hits = 0, total = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
        std::vector<double> ga, gb;
        for (unsigned i = 0; i < n; ++i) (mask >> i & 1u ? ga : gb).push_back(pooled[i]);
        ++total;
        hits += pair_u(ga, gb) <= observed;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST(ConditionalEntropy, WorkedExamples) {
    EXPECT_EQ(conditional_entropy({0.1, 0.45, 0.45}).value(), 1.0);
    EXPECT_EQ(conditional_entropy({0.2, 0.8, 0.0}).value(), 0.0);
    EXPECT_FALSE(conditional_entropy({0.9, 0.05, 0.05}).has_value());
    EXPECT_NEAR(conditional_entropy({0.0, 0.75, 0.25}).value(), 0.8113, 5e-5);
    EXPECT_DOUBLE_EQ(conditional_entropy({0.0, 0.75, 0.25}).value(), -0.75 * std::log2(0.75) - 0.25 * std::log2(0.25));
}

TEST(ConditionalEntropy, GateIsStrict) {
    EXPECT_FALSE(conditional_entropy({0.8, 0.1, 0.1}).has_value());
    EXPECT_TRUE(conditional_entropy({0.79, 0.11, 0.1}).has_value());
    EXPECT_FALSE(conditional_entropy({0.5, 0.25, 0.25}, 0.5).has_value());
}

TEST(ConditionalEntropy, RejectsInvalidPosteriors) {
    EXPECT_THROW(conditional_entropy({0.2, 0.5, 0.5}), UsageError);
    EXPECT_THROW(conditional_entropy({-0.1, 0.6, 0.5}), UsageError);
    EXPECT_THROW(conditional_entropy({0.0, 1.5, -0.5}), UsageError);
}

TEST(ConditionalEntropy, BoundedSymmetricAndMaximalOnlyAtBalance) {
    Rng rng(77);
    for (int i = 0; i < 10000; ++i) {
        const auto p = random_posterior(rng);
        const auto h = conditional_entropy(p);
        EXPECT_EQ(h.has_value(), p[1] + p[2] > kDefaultTau);
        if (!h) continue;
        EXPECT_GE(*h, 0.0);
        EXPECT_LE(*h, 1.0);
        const auto swapped = conditional_entropy({p[0], p[2], p[1]});
        ASSERT_TRUE(swapped.has_value());
        EXPECT_NEAR(*swapped, *h, 1e-12);
        const double ph = p[1] / (p[1] + p[2]);
        if (std::abs(ph - 0.5) > 1e-3) {
            EXPECT_LT(*h, 1.0);
        }
    }
}

TEST(ConditionalEntropy, RaisingTauNeverAddsPatches) {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto p = random_posterior(rng);
        const double lo = rng.uniform(0.0, 0.9);
        const double hi = rng.uniform(lo, 1.0);
        if (conditional_entropy(p, hi)) {
            EXPECT_TRUE(conditional_entropy(p, lo).has_value());
        }
    }
}

TEST(Percentile, LinearInterpolation) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(percentile(v, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(percentile(v, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(median_of({5.0, 1.0, 3.0}), 3.0);
}

TEST(Summarize, ConstantDistribution) {
    const std::vector<EntropyRecord> r{rec("a", 0.5), rec("a", 0.5), rec("b", 0.5)};
    const EntropyStats s = summarize(r);
    EXPECT_EQ(s.n_patches, 3u);
    EXPECT_EQ(s.median, 0.5);
    EXPECT_EQ(s.mean, 0.5);
    EXPECT_EQ(s.std, 0.0);
    EXPECT_EQ(s.q25, 0.5);
    EXPECT_EQ(s.q75, 0.5);
}

TEST(Summarize, TwoPoints) {
    const std::vector<EntropyRecord> r{rec("a", 0.0), rec("a", 1.0), rec("a", 0.3, false)};
    const EntropyStats s = summarize(r);
    EXPECT_EQ(s.n_patches, 2u);
    EXPECT_EQ(s.median, 0.5);
    EXPECT_EQ(s.tail_fractions[0], 0.5);
    EXPECT_EQ(s.tail_fractions[2], 0.5);
}

TEST(Summarize, PerPaintingMedians) {
    const std::vector<EntropyRecord> r{rec("z", 0.9), rec("a", 0.1), rec("a", 0.3), rec("z", 0.7), rec("m", 0.2, false)};
    const EntropyStats s = summarize(r);
    ASSERT_EQ(s.painting_medians.size(), 2u);
    EXPECT_EQ(s.painting_medians[0].first, "a");
    EXPECT_DOUBLE_EQ(s.painting_medians[0].second, 0.2);
    EXPECT_DOUBLE_EQ(s.painting_medians[1].second, 0.8);
    EXPECT_DOUBLE_EQ(s.mean_of_medians, 0.5);
    EXPECT_DOUBLE_EQ(s.std_of_medians, std::sqrt(0.18));
}

TEST(Summarize, AllExcludedIsUsageError) {
    const std::vector<EntropyRecord> r{rec("a", 0.0, false)};
    EXPECT_THROW(summarize(r), UsageError);
    EXPECT_THROW(summarize(std::vector<EntropyRecord>{}), UsageError);
}

TEST(Annotations, RegionEqualToPatchIsSelected) {
    const std::vector<AnnotationRegion> r{{"p", 300, 300, 600, 600}};
    const auto tiled = select_annotated_patches(900, 900, "p", r, 300, 300);
    ASSERT_EQ(tiled.size(), 1u);
    EXPECT_EQ(tiled[0].x, 300);
    EXPECT_EQ(tiled[0].y, 300);
    const auto dense = select_annotated_patches(900, 900, "p", r);
    EXPECT_TRUE(std::any_of(dense.begin(), dense.end(), [](const PatchCoord& c) { return c.x == 300 && c.y == 300; }));
}

TEST(Annotations, FortyNinePercentIsNotEnough) {
    const std::vector<AnnotationRegion> r{{"p", 0, 0, 147, 300}};
    EXPECT_TRUE(select_annotated_patches(900, 900, "p", r).empty());
}

TEST(Annotations, OverlappingRegionsCountOnce) {
    const std::vector<AnnotationRegion> sixty{{"p", 0, 0, 120, 300}, {"p", 60, 0, 180, 300}};
    const auto sel = select_annotated_patches(900, 900, "p", sixty);
    ASSERT_EQ(sel.size(), 1u);
    EXPECT_EQ(sel[0].x, 0);
    EXPECT_EQ(sel[0].y, 0);
    // Summed areas reach 66% but the union is 33%.
    const std::vector<AnnotationRegion> stacked{{"p", 0, 0, 100, 300}, {"p", 0, 0, 100, 300}};
    EXPECT_TRUE(select_annotated_patches(900, 900, "p", stacked).empty());
}

TEST(Annotations, OtherPaintingsAreIgnored) {
    const std::vector<AnnotationRegion> r{{"q", 0, 0, 300, 300}};
    EXPECT_TRUE(select_annotated_patches(900, 900, "p", r).empty());
}

TEST(Annotations, OutOfBoundsRegionIsRejected) {
    EXPECT_THROW(select_annotated_patches(900, 900, "p", std::vector<AnnotationRegion>{{"p", 0, 0, 901, 10}}),
                 ValidationError);
    EXPECT_THROW(select_annotated_patches(900, 900, "p", std::vector<AnnotationRegion>{{"p", 10, 0, 10, 10}}),
                 ValidationError);
    EXPECT_THROW(select_annotated_patches(900, 900, "p", std::vector<AnnotationRegion>{{"p", -1, 0, 10, 10}}),
                 ValidationError);
}

TEST(Annotations, UnionAreaMatchesPixelCount) {
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        std::vector<AnnotationRegion> regions;
        const int k = rng.range(1, 5);
        for (int i = 0; i < k; ++i) {
            const int x0 = rng.range(0, 38), y0 = rng.range(0, 38);
            regions.push_back({"p", x0, y0, rng.range(x0 + 1, 40), rng.range(y0 + 1, 40)});
        }
        const int cx0 = rng.range(0, 30), cy0 = rng.range(0, 30);
        const int cx1 = rng.range(cx0 + 1, 40), cy1 = rng.range(cy0 + 1, 40);
        std::int64_t count = 0;
        for (int y = cy0; y < cy1; ++y)
            for (int x = cx0; x < cx1; ++x)
                count += std::any_of(regions.begin(), regions.end(), [&](const AnnotationRegion& r) {
                    return x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
                });
        EXPECT_EQ(union_area_within(regions, cx0, cy0, cx1, cy1), count);
    }
}

TEST(MannWhitney, SeparatedTriples) {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    const MannWhitneyResult r = mann_whitney_u(a, b);
    EXPECT_EQ(r.u, 0.0);
    EXPECT_TRUE(r.exact);
    EXPECT_NEAR(r.p, 0.1, 1e-12);
    EXPECT_NEAR(r.p_exact, 0.1, 1e-12);
}

TEST(MannWhitney, FullTies) {
    const std::vector<double> a{1, 2}, b{1, 2};
    const MannWhitneyResult r = mann_whitney_u(a, b);
    EXPECT_EQ(r.u, 2.0);
    EXPECT_EQ(r.p, 1.0);
}

TEST(MannWhitney, TenVersusFiveSeparated) {
    std::vector<double> pure, hybrid;
    for (int i = 0; i < 10; ++i) pure.push_back(0.01 * i);
    for (int i = 0; i < 5; ++i) hybrid.push_back(0.5 + 0.1 * i);
    const MannWhitneyResult r = mann_whitney_u(pure, hybrid);
    EXPECT_EQ(r.u, 0.0);
    EXPECT_FALSE(r.exact);
    EXPECT_EQ(r.p, r.p_normal);
    // Two of C(15,5) = 3003 splits are fully separated.
    EXPECT_NEAR(r.p_exact, 2.0 / 3003.0, 1e-12);
    EXPECT_GT(r.p_normal, 0.0);
    EXPECT_LT(r.p_normal, 0.01);
}

TEST(MannWhitney, MatchesPermutationOracle) {
    Rng rng(404);
    for (std::size_t na = 1; na <= 7; ++na) {
        for (std::size_t nb = 1; na + nb <= 8; ++nb) {
            for (int rep = 0; rep < 5; ++rep) {
                std::vector<double> a, b;
                // Distinct values: a random permutation of 0..n-1 split in two.
                std::vector<double> pool(na + nb);
                for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<double>(i);
                for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
                a.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(na));
                b.assign(pool.begin() + static_cast<std::ptrdiff_t>(na), pool.end());
                const MannWhitneyResult r = mann_whitney_u(a, b);
                EXPECT_EQ(r.u, pair_u(a, b));
                EXPECT_NEAR(r.p_exact, permutation_p(a, b), 1e-12) << "na=" << na << " nb=" << nb;
                EXPECT_EQ(r.p, r.p_exact);
            }
        }
    }
}

TEST(MannWhitney, SymmetricInArguments) {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(1 + rng.below(8)), b(1 + rng.below(12));
        for (double& v : a) v = static_cast<double>(rng.below(6));
        for (double& v : b) v = static_cast<double>(rng.below(6));
        const MannWhitneyResult ab = mann_whitney_u(a, b);
        const MannWhitneyResult ba = mann_whitney_u(b, a);
        EXPECT_EQ(ab.u, ba.u);
        EXPECT_NEAR(ab.p, ba.p, 1e-12);
        EXPECT_GT(ab.p, 0.0);
        EXPECT_LE(ab.p, 1.0);
    }
}

TEST(MannWhitney, EmptyInputIsUsageError) {
    EXPECT_THROW(mann_whitney_u(std::vector<double>{}, std::vector<double>{1.0}), UsageError);
}
