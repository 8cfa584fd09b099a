#include "brushtrace/synth.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include "brushtrace/errors.h"
#include "brushtrace/patches.h"
#include "brushtrace/rng.h"

namespace brushtrace {

StyleParams StyleParams::human() {
    StyleParams s;
    s.style = StrokeStyle::HumanLike;
    s.stroke_count_min = 55;
    s.stroke_count_max = 95;
    s.length_min = 300.0;
    s.length_max = 700.0;
    s.turn_sigma = 0.06;
    s.curvature_max = 0.006;
    s.width_min = 10.0;
    s.width_max = 22.0;
    s.taper = 0.65;
    s.width_jitter = 0.1;
    return s;
}

StyleParams StyleParams::robot() {
    StyleParams s;
    s.style = StrokeStyle::RobotLike;
    s.stroke_count_min = 300;
    s.stroke_count_max = 520;
    s.length_min = 40.0;
    s.length_max = 90.0;
    s.turn_sigma = 0.01;
    s.curvature_max = 0.0;
    s.width_min = 9.0;
    s.width_max = 16.0;
    s.taper = 0.0;
    s.width_jitter = 0.03;
    s.grid_spacing = 30.0;
    s.grid_jitter = 4.0;
    s.angle_step = std::numbers::pi / 4.0;
    s.angle_jitter = 0.04;
    return s;
}

double StyleParams::curvature_variance() const {
    return turn_sigma * turn_sigma + step * step * curvature_max * curvature_max / 3.0;
}

double StyleParams::width_variance() const {
    // Var[sin(pi t)] for t ~ U(0,1) is 1/2 - 4/pi^2.
    const double profile = 0.5 - 4.0 / (std::numbers::pi * std::numbers::pi);
    return taper * taper * profile + width_jitter * width_jitter;
}

void StyleParams::validate() const {
    if (stroke_count_min < 0 || stroke_count_max < stroke_count_min) throw ConfigError("style: bad stroke count range");
    if (!(length_min > 0.0 && length_max >= length_min)) throw ConfigError("style: bad length range");
    if (!(step > 0.0)) throw ConfigError("style: step must be positive");
    if (!(width_min > 0.0 && width_max >= width_min)) throw ConfigError("style: bad width range");
    if (!(taper >= 0.0 && taper < 1.0)) throw ConfigError("style: taper must lie in [0,1)");
    if (!(intensity_min >= 0.0 && intensity_max >= intensity_min && intensity_max < 0.9)) {
        throw ConfigError("style: bad intensity range");
    }
    if (turn_sigma < 0.0 || curvature_max < 0.0 || width_jitter < 0.0 || grid_spacing < 0.0 || grid_jitter < 0.0 ||
        angle_step < 0.0 || angle_jitter < 0.0) {
        throw ConfigError("style: negative spread parameter");
    }
}

double SyntheticPainting::painted_fraction() const {
    const auto painted = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
    return static_cast<double>(painted) / static_cast<double>(mask.size());
}

double SyntheticPainting::overlap_fraction() const {
    const auto both = std::count(touched.begin(), touched.end(), std::uint8_t{3});
    return static_cast<double>(both) / static_cast<double>(touched.size());
}

namespace {

constexpr double kCanvasGrain = 0.015;
constexpr double kPaintGrain = 0.03;
constexpr int kBlankZone = 330;

struct Rect {
    double x0, y0, x1, y1;
};

struct Stroke {
    std::vector<double> xs, ys, radii;
    double intensity = 0.5;
    std::uint8_t author = 1;
};

struct Canvas {
    int size = 0;
    std::vector<double> value;
    std::vector<double> grain;
    std::vector<std::uint8_t> last;
    std::vector<std::uint8_t> touched;
};

Canvas blank_canvas(int size, Rng& rng) {
    Canvas c;
    c.size = size;
    const std::size_t n = static_cast<std::size_t>(size) * size;
    c.value.resize(n);
    c.grain.resize(n);
    for (double& v : c.value) v = 1.0 - kCanvasGrain * rng.uniform();
    for (double& g : c.grain) g = kPaintGrain * rng.normal();
    c.last.assign(n, 0);
    c.touched.assign(n, 0);
    return c;
}

double dist_to_rect(double x, double y, const Rect& r) {
    const double dx = std::max({r.x0 - x, 0.0, x - r.x1});
    const double dy = std::max({r.y0 - y, 0.0, y - r.y1});
    return std::hypot(dx, dy);
}

bool intrudes(const Stroke& s, const std::optional<Rect>& zone) {
    if (!zone) return false;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (dist_to_rect(s.xs[i], s.ys[i], *zone) < s.radii[i] + 2.0) return true;
    }
    return false;
}

Stroke make_stroke(const StyleParams& p, const Rect& region, Rng& rng) {
    Stroke s;
    s.intensity = rng.uniform(p.intensity_min, p.intensity_max);
    s.author = p.style == StrokeStyle::HumanLike ? 1 : 2;
    double x = rng.uniform(region.x0, region.x1);
    double y = rng.uniform(region.y0, region.y1);
    if (p.grid_spacing > 0.0) {
        x = std::round(x / p.grid_spacing) * p.grid_spacing + rng.normal(0.0, p.grid_jitter);
        y = std::round(y / p.grid_spacing) * p.grid_spacing + rng.normal(0.0, p.grid_jitter);
    }
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (p.angle_step > 0.0) heading = std::round(heading / p.angle_step) * p.angle_step + rng.normal(0.0, p.angle_jitter);
    const double curvature = rng.uniform(-p.curvature_max, p.curvature_max);
    const double length = rng.uniform(p.length_min, p.length_max);
    const double peak = rng.uniform(p.width_min, p.width_max) * std::max(0.2, 1.0 + rng.normal(0.0, p.width_jitter));
    const int steps = std::max(1, static_cast<int>(std::lround(length / p.step)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const double w = peak * ((1.0 - p.taper) + p.taper * std::sin(std::numbers::pi * t));
        s.xs.push_back(x);
        s.ys.push_back(y);
        s.radii.push_back(w / 2.0);
        heading += curvature * p.step + rng.normal(0.0, p.turn_sigma);
        x += p.step * std::cos(heading);
        y += p.step * std::sin(heading);
    }
    return s;
}

// Anti-aliased union of capsules along the polyline, composited once.
void render(Canvas& c, const Stroke& s) {
    double bx0 = 1e18, by0 = 1e18, bx1 = -1e18, by1 = -1e18;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        bx0 = std::min(bx0, s.xs[i] - s.radii[i] - 1);
        by0 = std::min(by0, s.ys[i] - s.radii[i] - 1);
        bx1 = std::max(bx1, s.xs[i] + s.radii[i] + 1);
        by1 = std::max(by1, s.ys[i] + s.radii[i] + 1);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(bx0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(by0)));
    const int x1 = std::min(c.size, static_cast<int>(std::ceil(bx1)) + 1);
    const int y1 = std::min(c.size, static_cast<int>(std::ceil(by1)) + 1);
    if (x0 >= x1 || y0 >= y1) return;
    const int w = x1 - x0;
    std::vector<double> alpha(static_cast<std::size_t>(w) * (y1 - y0), 0.0);

    const std::size_t segs = s.xs.size() > 1 ? s.xs.size() - 1 : 1;
    for (std::size_t k = 0; k < segs; ++k) {
        const std::size_t k1 = std::min(k + 1, s.xs.size() - 1);
        const double ax = s.xs[k], ay = s.ys[k], bx = s.xs[k1], by = s.ys[k1];
        const double ra = s.radii[k], rb = s.radii[k1];
        const double rmax = std::max(ra, rb) + 1.0;
        const int sx0 = std::max(x0, static_cast<int>(std::floor(std::min(ax, bx) - rmax)));
        const int sy0 = std::max(y0, static_cast<int>(std::floor(std::min(ay, by) - rmax)));
        const int sx1 = std::min(x1, static_cast<int>(std::ceil(std::max(ax, bx) + rmax)) + 1);
        const int sy1 = std::min(y1, static_cast<int>(std::ceil(std::max(ay, by) + rmax)) + 1);
        const double dx = bx - ax, dy = by - ay;
        const double len2 = dx * dx + dy * dy;
        for (int py = sy0; py < sy1; ++py) {
            for (int px = sx0; px < sx1; ++px) {
                const double cx = px + 0.5, cy = py + 0.5;
                double t = len2 > 0.0 ? ((cx - ax) * dx + (cy - ay) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double d = std::hypot(cx - (ax + t * dx), cy - (ay + t * dy));
                const double r = ra + t * (rb - ra);
                const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
                double& slot = alpha[static_cast<std::size_t>(py - y0) * w + (px - x0)];
                slot = std::max(slot, a);
            }
        }
    }
    for (int py = y0; py < y1; ++py) {
        for (int px = x0; px < x1; ++px) {
            const double a = alpha[static_cast<std::size_t>(py - y0) * w + (px - x0)];
            if (a <= 0.0) continue;
            const std::size_t i = static_cast<std::size_t>(py) * c.size + px;
            const double paint = std::clamp(s.intensity + c.grain[i], 0.0, 1.0);
            c.value[i] = c.value[i] * (1.0 - a) + paint * a;
            c.last[i] = s.author;
            c.touched[i] |= s.author;
        }
    }
}

std::optional<Rect> pick_blank_zone(bool enabled, int size, Rng& rng) {
    if (!enabled || size < 2 * kBlankZone) return std::nullopt;
    const int corner = static_cast<int>(rng.below(4));
    const double z = kBlankZone;
    const double x0 = (corner & 1) ? size - z : 0.0;
    const double y0 = (corner & 2) ? size - z : 0.0;
    return Rect{x0, y0, x0 + z, y0 + z};
}

void add_strokes(std::vector<Stroke>& out, const StyleParams& p, int count, const Rect& region,
                 const std::optional<Rect>& zone, Rng& rng) {
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            Stroke s = make_stroke(p, region, rng);
            if (!intrudes(s, zone)) {
                out.push_back(std::move(s));
                break;
            }
        }
    }
}

SyntheticPainting finish(Canvas& c, std::vector<Stroke>& strokes, std::uint64_t seed, std::string provenance) {
    // Darkest strokes land last; ties keep generation order.
    std::stable_sort(strokes.begin(), strokes.end(),
                     [](const Stroke& a, const Stroke& b) { return a.intensity > b.intensity; });
    for (const Stroke& s : strokes) render(c, s);

    SyntheticPainting out;
    out.image = GrayImage(c.size, c.size);
    out.mask.assign(c.value.size(), 0);
    for (std::size_t i = 0; i < c.value.size(); ++i) {
        // Quantize to the 8-bit levels a saved PNG holds, so the mask agrees
        // with the image after a round trip.
        const float v = static_cast<float>(std::round(std::clamp(c.value[i], 0.0, 1.0) * 255.0) / 255.0);
        out.image.pixels[i] = v;
        out.mask[i] = v < kWhitePixelThreshold ? c.last[i] : 0;
    }
    out.touched = std::move(c.touched);
    out.seed = seed;
    out.provenance = std::move(provenance);
    return out;
}

int draw_count(const StyleParams& p, Rng& rng) {
    return p.stroke_count_min + static_cast<int>(rng.below(static_cast<std::size_t>(p.stroke_count_max - p.stroke_count_min) + 1));
}

std::string style_name(const StyleParams& p) { return p.style == StrokeStyle::HumanLike ? "human-like" : "robot-like"; }

}  // namespace

SyntheticPainting generate_pure(const StyleParams& style, int size, std::uint64_t seed) {
    style.validate();
    if (size < kDefaultPatchSize) {
        throw ConfigError("synthetic canvas size " + std::to_string(size) + " is below the patch size " +
                          std::to_string(kDefaultPatchSize));
    }
    Rng rng(mix_seed(seed, 0x9a1));
    Canvas c = blank_canvas(size, rng);
    const auto zone = pick_blank_zone(style.blank_corner, size, rng);
    std::vector<Stroke> strokes;
    add_strokes(strokes, style, draw_count(style, rng), Rect{0, 0, double(size), double(size)}, zone, rng);
    return finish(c, strokes, seed, "pure " + style_name(style));
}

SyntheticPainting generate_hybrid(const StyleParams& style_a, const StyleParams& style_b, int size, std::uint64_t seed,
                                  double mix) {
    style_a.validate();
    style_b.validate();
    if (!(mix > 0.0 && mix < 1.0)) throw UsageError("hybrid mix must lie strictly between 0 and 1; use generate_pure");
    if (size < kDefaultPatchSize) {
        throw ConfigError("synthetic canvas size " + std::to_string(size) + " is below the patch size " +
                          std::to_string(kDefaultPatchSize));
    }
    Rng rng(mix_seed(seed, 0x4b1));
    Canvas c = blank_canvas(size, rng);
    const auto zone = pick_blank_zone(style_a.blank_corner && style_b.blank_corner, size, rng);
    // Each author favors one side of the canvas; the middle band is shared.
    const double s = size;
    const bool vertical = rng.bernoulli(0.5);
    const bool swap = rng.bernoulli(0.5);
    Rect ra = vertical ? Rect{0, 0, 0.65 * s, s} : Rect{0, 0, s, 0.65 * s};
    Rect rb = vertical ? Rect{0.35 * s, 0, s, s} : Rect{0, 0.35 * s, s, s};
    if (swap) std::swap(ra, rb);
    const int na = std::max(1, static_cast<int>(std::lround(draw_count(style_a, rng) * mix * 1.3)));
    const int nb = std::max(1, static_cast<int>(std::lround(draw_count(style_b, rng) * (1.0 - mix) * 1.3)));
    std::vector<Stroke> strokes;
    add_strokes(strokes, style_a, na, ra, zone, rng);
    add_strokes(strokes, style_b, nb, rb, zone, rng);
    return finish(c, strokes, seed, "hybrid " + style_name(style_a) + " + " + style_name(style_b));
}

std::vector<AnnotationRegion> annotate_mixed_regions(const std::vector<std::uint8_t>& mask, int width, int height,
                                                     const std::string& painting_id, int window, int stride,
                                                     double min_fraction) {
    if (mask.size() != static_cast<std::size_t>(width) * height) throw ShapeError("annotation mask size mismatch");
    const std::vector<PatchCoord> grid = patch_grid(width, height, window, stride);
    std::vector<bool> mixed(grid.size(), false);
    const double area = static_cast<double>(window) * window;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::size_t human = 0;
        std::size_t robot = 0;
        for (int y = grid[g].y; y < grid[g].y + window; ++y) {
            for (int x = grid[g].x; x < grid[g].x + window; ++x) {
                const std::uint8_t m = mask[static_cast<std::size_t>(y) * width + x];
                human += m == 1;
                robot += m == 2;
            }
        }
        mixed[g] = human >= min_fraction * area && robot >= min_fraction * area;
    }
    // Windows are connected when they overlap.
    std::vector<int> component(grid.size(), -1);
    std::vector<AnnotationRegion> out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!mixed[g] || component[g] >= 0) continue;
        const int id = static_cast<int>(out.size());
        AnnotationRegion r{painting_id, grid[g].x, grid[g].y, grid[g].x + window, grid[g].y + window};
        std::vector<std::size_t> stack{g};
        component[g] = id;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            r.x0 = std::min(r.x0, grid[cur].x);
            r.y0 = std::min(r.y0, grid[cur].y);
            r.x1 = std::max(r.x1, grid[cur].x + window);
            r.y1 = std::max(r.y1, grid[cur].y + window);
            for (std::size_t o = 0; o < grid.size(); ++o) {
                if (!mixed[o] || component[o] >= 0) continue;
                if (std::abs(grid[o].x - grid[cur].x) < window && std::abs(grid[o].y - grid[cur].y) < window) {
                    component[o] = id;
                    stack.push_back(o);
                }
            }
        }
        out.push_back(r);
    }
    return out;
}

CorpusInfo emit_corpus(int n_human, int n_robot, int n_hybrid, int size, std::uint64_t base_seed,
                       const std::filesystem::path& out_dir) {
    if (n_human < 0 || n_robot < 0 || n_hybrid < 0) throw UsageError("corpus counts must be non-negative");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    CorpusInfo info;
    info.manifest = out_dir / "manifest.jsonl";
    info.annotations = out_dir / "annotations.jsonl";
    const auto id_for = [](const char* prefix, int i) {
        std::string n = std::to_string(i + 1);
        if (n.size() < 2) n = "0" + n;
        return std::string(prefix) + "_" + n;
    };
    const auto write = [&](const SyntheticPainting& p, const std::string& id, Author author) {
        save_gray_png(out_dir / (id + ".png"), p.image);
        save_byte_png(out_dir / (id + "_mask.png"), p.image.width, p.image.height, p.mask);
        info.entries.push_back({id + ".png", id, author});
    };
    for (int i = 0; i < n_human; ++i) {
        const std::string id = id_for("human", i);
        write(generate_pure(StyleParams::human(), size, mix_seed(base_seed, hash_string(id))), id, Author::Human);
    }
    for (int i = 0; i < n_robot; ++i) {
        const std::string id = id_for("robot", i);
        write(generate_pure(StyleParams::robot(), size, mix_seed(base_seed, hash_string(id))), id, Author::Robot);
    }
    for (int i = 0; i < n_hybrid; ++i) {
        const std::string id = id_for("hybrid", i);
        const SyntheticPainting p =
            generate_hybrid(StyleParams::human(), StyleParams::robot(), size, mix_seed(base_seed, hash_string(id)));
        write(p, id, Author::Hybrid);
        auto regions = annotate_mixed_regions(p.mask, p.image.width, p.image.height, id);
        info.regions.insert(info.regions.end(), regions.begin(), regions.end());
    }
    write_manifest(info.manifest, info.entries);
    for (ManifestEntry& e : info.entries) e.path = out_dir / e.path;
    if (n_hybrid > 0) write_annotations(info.annotations, info.regions);
    return info;
}

}  // namespace brushtrace
