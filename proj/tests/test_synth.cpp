#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "brushtrace/dataset.h"
#include "brushtrace/errors.h"
#include "brushtrace/evaluation.h"
#include "brushtrace/image.h"
#include "brushtrace/synth.h"
#include "brushtrace/training.h"
#include "tempdir.h"

using namespace brushtrace;
using brushtrace::testing::TempDir;

namespace {

std::vector<PatchRecord> labeled_patches(const SyntheticPainting& p, Author author, const std::string& id) {
    GrayImage img = p.image;
    std::vector<PatchRecord> patches = extract_patches(img);
    for (PatchRecord& r : patches) r.painting_id = id;
    label_patches(patches, author);
    return patches;
}

double mean_intensity(const PatchRecord& p) {
    double s = 0.0;
    for (float v : p.pixels) s += v;
    return s / static_cast<double>(p.pixels.size());
}

}  // namespace

TEST(Styles, DefaultsDifferInCurvatureAndWidthVariance) {
    const StyleParams h = StyleParams::human();
    const StyleParams r = StyleParams::robot();
    EXPECT_NO_THROW(h.validate());
    EXPECT_NO_THROW(r.validate());
    EXPECT_GE(h.curvature_variance(), 4.0 * r.curvature_variance());
    EXPECT_GE(h.width_variance(), 4.0 * r.width_variance());
    EXPECT_EQ(h.author(), Author::Human);
    EXPECT_EQ(r.author(), Author::Robot);
}

TEST(Styles, ValidationRejectsBadRanges) {
    StyleParams s = StyleParams::human();
    s.stroke_count_max = s.stroke_count_min - 1;
    EXPECT_THROW(s.validate(), ConfigError);
    s = StyleParams::human();
    s.taper = 1.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = StyleParams::robot();
    s.intensity_max = 0.95;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(GeneratePure, Deterministic) {
    const SyntheticPainting a = generate_pure(StyleParams::robot(), 300, 8);
    const SyntheticPainting b = generate_pure(StyleParams::robot(), 300, 8);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_NE(a.image.pixels, generate_pure(StyleParams::robot(), 300, 9).image.pixels);
}

TEST(GeneratePure, NoStrokesGiveBlankCanvas) {
    StyleParams s = StyleParams::human();
    s.stroke_count_min = 0;
    s.stroke_count_max = 0;
    const SyntheticPainting p = generate_pure(s, 300, 1);
    EXPECT_TRUE(std::all_of(p.mask.begin(), p.mask.end(), [](std::uint8_t m) { return m == 0; }));
    EXPECT_TRUE(std::all_of(p.image.pixels.begin(), p.image.pixels.end(),
                            [](float v) { return v >= kWhitePixelThreshold; }));
    EXPECT_EQ(p.painted_fraction(), 0.0);
}

TEST(GeneratePure, TooSmallIsConfigError) {
    EXPECT_THROW(generate_pure(StyleParams::human(), 299, 1), ConfigError);
}

TEST(GeneratePure, CoverageAndMaskInvariants) {
    for (const StyleParams& style : {StyleParams::human(), StyleParams::robot()}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const SyntheticPainting p = generate_pure(style, 900, seed);
            EXPECT_GE(p.painted_fraction(), 0.2);
            EXPECT_LE(p.painted_fraction(), 0.7);
            const std::uint8_t own = style.author() == Author::Human ? 1 : 2;
            for (std::size_t i = 0; i < p.mask.size(); ++i) {
                ASSERT_TRUE(p.mask[i] == 0 || p.mask[i] == own);
                ASSERT_EQ(p.mask[i] == 0, p.image.pixels[i] >= kWhitePixelThreshold) << "pixel " << i;
            }
            EXPECT_EQ(p.overlap_fraction(), 0.0);
        }
    }
}

TEST(GeneratePure, PatchLabelsAgreeWithMask) {
    for (const StyleParams& style : {StyleParams::human(), StyleParams::robot()}) {
        const SyntheticPainting p = generate_pure(style, 900, 5);
        const std::vector<PatchRecord> patches = labeled_patches(p, style.author(), "x");
        bool saw_blank = false;
        for (const PatchRecord& r : patches) {
            std::array<std::size_t, 3> tally{};
            for (int y = r.y; y < r.y + r.size; ++y)
                for (int x = r.x; x < r.x + r.size; ++x) ++tally[p.mask[static_cast<std::size_t>(y) * 900 + x]];
            const double blank = static_cast<double>(tally[0]) / static_cast<double>(r.size * r.size);
            if (blank >= 0.95) {
                EXPECT_EQ(*r.label, ClassLabel::Blank);
                saw_blank = true;
            } else {
                const ClassLabel majority = tally[1] >= tally[2] ? ClassLabel::Human : ClassLabel::Robot;
                EXPECT_EQ(*r.label, majority);
            }
        }
        EXPECT_TRUE(saw_blank);
    }
}

TEST(GenerateHybrid, BothAuthorsAndOverlap) {
    const SyntheticPainting a = generate_hybrid(StyleParams::human(), StyleParams::robot(), 900, 3);
    const SyntheticPainting b = generate_hybrid(StyleParams::human(), StyleParams::robot(), 900, 3);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_TRUE(std::find(a.mask.begin(), a.mask.end(), 1) != a.mask.end());
    EXPECT_TRUE(std::find(a.mask.begin(), a.mask.end(), 2) != a.mask.end());
    EXPECT_GT(a.overlap_fraction(), 0.0);
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        if (a.mask[i] != 0) {
            ASSERT_NE(a.touched[i] & (1u << (a.mask[i] - 1)), 0u);
        }
    }
}

TEST(GenerateHybrid, DegenerateMixIsUsageError) {
    EXPECT_THROW(generate_hybrid(StyleParams::human(), StyleParams::robot(), 900, 3, 0.0), UsageError);
    EXPECT_THROW(generate_hybrid(StyleParams::human(), StyleParams::robot(), 900, 3, 1.0), UsageError);
}

TEST(AnnotateMixed, FindsBlockWithBothAuthors) {
    const int w = 900, h = 900;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h, 0);
    // Human left, robot right inside the top-left 300x300 block.
    for (int y = 0; y < 300; ++y)
        for (int x = 0; x < 300; ++x) mask[static_cast<std::size_t>(y) * w + x] = x < 150 ? 1 : 2;
    // A human-only block elsewhere is never annotated.
    for (int y = 600; y < 900; ++y)
        for (int x = 600; x < 900; ++x) mask[static_cast<std::size_t>(y) * w + x] = 1;
    // Windows at (0,0) and (0,150) each hold a 25% share of both authors;
    // every other window sees at most one author.
    const auto regions = annotate_mixed_regions(mask, w, h, "hy");
    ASSERT_EQ(regions.size(), 1u);
    EXPECT_EQ(regions[0], (AnnotationRegion{"hy", 0, 0, 300, 450}));
    EXPECT_TRUE(annotate_mixed_regions(std::vector<std::uint8_t>(mask.size(), 1), w, h, "hy").empty());
}

TEST(EmitCorpus, WritesManifestImagesAndAnnotations) {
    TempDir dir("corpus");
    const CorpusInfo info = emit_corpus(2, 2, 1, 600, 42, dir.path());
    ASSERT_EQ(info.entries.size(), 5u);
    EXPECT_EQ(read_manifest(info.manifest).size(), 5u);
    EXPECT_EQ(info.entries[4].author, Author::Hybrid);
    EXPECT_EQ(info.entries[4].painting_id, "hybrid_01");
    EXPECT_EQ(info.entries[0].painting_id, "human_01");
    EXPECT_EQ(read_annotations(info.annotations), info.regions);
    ASSERT_FALSE(info.regions.empty());
    for (const AnnotationRegion& r : info.regions) {
        EXPECT_EQ(r.painting_id, "hybrid_01");
        EXPECT_GE(r.x0, 0);
        EXPECT_GE(r.y0, 0);
        EXPECT_LE(r.x1, 600);
        EXPECT_LE(r.y1, 600);
        EXPECT_LT(r.x0, r.x1);
        EXPECT_LT(r.y0, r.y1);
        int w = 0, h = 0;
        const auto mask = load_byte_png(dir / "hybrid_01_mask.png", w, h);
        bool human = false, robot = false;
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) {
                human = human || mask[static_cast<std::size_t>(y) * w + x] == 1;
                robot = robot || mask[static_cast<std::size_t>(y) * w + x] == 2;
            }
        EXPECT_TRUE(human && robot);
    }
    for (const ManifestEntry& e : info.entries) {
        const GrayImage img = load_image(e.path);
        EXPECT_EQ(img.width, 600);
        EXPECT_TRUE(std::filesystem::exists(dir / (e.painting_id + "_mask.png")));
    }
}

TEST(EmitCorpus, FifteenEntriesWithHybridsFlagged) {
    TempDir dir("corpus15");
    const CorpusInfo info = emit_corpus(6, 6, 3, 300, 42, dir.path());
    ASSERT_EQ(info.entries.size(), 15u);
    EXPECT_EQ(std::count_if(info.entries.begin(), info.entries.end(),
                            [](const ManifestEntry& e) { return e.author == Author::Hybrid; }),
              3);
}

TEST(EmitCorpus, EmptyRequestWritesNoImages) {
    TempDir dir("corpus0");
    const CorpusInfo info = emit_corpus(0, 0, 0, 600, 42, dir.path());
    EXPECT_TRUE(info.entries.empty());
    EXPECT_TRUE(read_manifest(info.manifest).empty());
    for (const auto& f : std::filesystem::directory_iterator(dir.path())) EXPECT_NE(f.path().extension(), ".png");
}

TEST(EmitCorpus, UnwritableDirectoryIsIoError) {
    TempDir dir("corpus_ro");
    std::ofstream(dir / "file") << "x";
    EXPECT_THROW(emit_corpus(1, 1, 0, 300, 1, dir / "file" / "sub"), IoError);
}

TEST(Corpus, NoIntensityThresholdSeparatesStyles) {
    std::vector<std::pair<double, bool>> samples;  // mean intensity, is human
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        for (const StyleParams& style : {StyleParams::human(), StyleParams::robot()}) {
            for (const PatchRecord& p : labeled_patches(generate_pure(style, 900, 100 + seed), style.author(), "x")) {
                if (*p.label != ClassLabel::Blank) samples.emplace_back(mean_intensity(p), *p.label == ClassLabel::Human);
            }
        }
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    std::size_t humans = 0;
    for (const auto& s : samples) humans += s.second;
    // Best accuracy over every cut position and both orientations.
    double best = 0.0;
    std::size_t humans_below = 0;
    for (std::size_t cut = 0; cut <= n; ++cut) {
        if (cut > 0) humans_below += samples[cut - 1].second;
        const std::size_t robots_above = (n - cut) - (humans - humans_below);
        const double acc = static_cast<double>(humans_below + robots_above) / static_cast<double>(n);
        best = std::max({best, acc, 1.0 - acc});
    }
    EXPECT_LE(best, 0.70) << "over " << n << " patches";
}

TEST(Corpus, TinyNetworkSeparatesHeldOutPaintings) {
    std::vector<PatchRecord> train, held;
    for (int k = 0; k < 3; ++k) {
        for (const StyleParams& style : {StyleParams::human(), StyleParams::robot()}) {
            const std::string id = std::string(to_string(style.author())) + std::to_string(k);
            auto patches = labeled_patches(generate_pure(style, 900, 500 + k), style.author(), id);
            auto& dst = k < 2 ? train : held;
            dst.insert(dst.end(), patches.begin(), patches.end());
        }
    }
    TrainConfig c;
    c.lr = 0.01;
    c.batch_size = 16;
    c.epochs = 20;
    c.seed = 1;
    const TrainResult r = train_fold(train, held, ModelConfig::tiny(), c);
    Network net = network_from_checkpoint(ModelConfig::tiny(), r.final_state);
    const auto post = predict_posteriors(net, held);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < held.size(); ++i) ok += argmax_class(post[i]) == *held[i].label;
    EXPECT_GE(static_cast<double>(ok) / static_cast<double>(held.size()), 0.85);
}
