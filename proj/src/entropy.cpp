#include "brushtrace/entropy.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "brushtrace/errors.h"

namespace brushtrace {

std::optional<double> conditional_entropy(const std::array<double, 3>& p, double tau) {
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw UsageError("conditional_entropy: posterior entry outside [0,1]");
    }
    if (std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-6) throw UsageError("conditional_entropy: posterior does not sum to 1");
    const double mass = p[1] + p[2];
    if (!(mass > tau)) return std::nullopt;
    const double ph = p[1] / mass;
    const double pr = 1.0 - ph;
    double h = 0.0;
    if (ph > 0.0) h -= ph * std::log2(ph);
    if (pr > 0.0) h -= pr * std::log2(pr);
    return std::clamp(h, 0.0, 1.0);
}

double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw UsageError("percentile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return percentile(values, 0.5);
}

EntropyStats summarize(std::span<const EntropyRecord> records) {
    std::vector<double> pooled;
    std::map<std::string, std::vector<double>> by_painting;
    for (const EntropyRecord& r : records) {
        if (!r.included) continue;
        pooled.push_back(r.h);
        by_painting[r.painting_id].push_back(r.h);
    }
    if (pooled.empty()) throw UsageError("entropy summary: no patch passed the tau gate");
    std::sort(pooled.begin(), pooled.end());
    EntropyStats s;
    s.n_patches = pooled.size();
    s.median = percentile(pooled, 0.5);
    s.q25 = percentile(pooled, 0.25);
    s.q75 = percentile(pooled, 0.75);
    s.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
    if (pooled.size() > 1) {
        double ss = 0.0;
        for (double v : pooled) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(pooled.size() - 1));
    }
    for (std::size_t t = 0; t < kTailThresholds.size(); ++t) {
        const auto above = std::count_if(pooled.begin(), pooled.end(), [&](double v) { return v > kTailThresholds[t]; });
        s.tail_fractions[t] = static_cast<double>(above) / static_cast<double>(pooled.size());
    }
    std::vector<double> medians;
    for (auto& [id, values] : by_painting) {
        s.painting_medians.emplace_back(id, median_of(values));
        medians.push_back(s.painting_medians.back().second);
    }
    s.mean_of_medians = std::accumulate(medians.begin(), medians.end(), 0.0) / static_cast<double>(medians.size());
    if (medians.size() > 1) {
        double ss = 0.0;
        for (double v : medians) ss += (v - s.mean_of_medians) * (v - s.mean_of_medians);
        s.std_of_medians = std::sqrt(ss / static_cast<double>(medians.size() - 1));
    }
    return s;
}

std::int64_t union_area_within(std::span<const AnnotationRegion> regions, int x0, int y0, int x1, int y1) {
    std::vector<AnnotationRegion> clipped;
    std::vector<int> xs{x0, x1};
    std::vector<int> ys{y0, y1};
    for (const AnnotationRegion& r : regions) {
        AnnotationRegion c{r.painting_id, std::max(r.x0, x0), std::max(r.y0, y0), std::min(r.x1, x1), std::min(r.y1, y1)};
        if (c.x0 >= c.x1 || c.y0 >= c.y1) continue;
        xs.push_back(c.x0);
        xs.push_back(c.x1);
        ys.push_back(c.y0);
        ys.push_back(c.y1);
        clipped.push_back(c);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    std::int64_t area = 0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
            const bool covered = std::any_of(clipped.begin(), clipped.end(), [&](const AnnotationRegion& c) {
                return c.x0 <= xs[i] && xs[i + 1] <= c.x1 && c.y0 <= ys[j] && ys[j + 1] <= c.y1;
            });
            if (covered) area += static_cast<std::int64_t>(xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
        }
    }
    return area;
}

std::vector<PatchCoord> select_annotated_patches(int width, int height, const std::string& painting_id,
                                                 std::span<const AnnotationRegion> regions, int size, int stride) {
    std::vector<AnnotationRegion> mine;
    for (const AnnotationRegion& r : regions) {
        if (r.painting_id != painting_id) continue;
        if (!(0 <= r.x0 && r.x0 < r.x1 && r.x1 <= width && 0 <= r.y0 && r.y0 < r.y1 && r.y1 <= height)) {
            throw ValidationError("annotation region (" + std::to_string(r.x0) + "," + std::to_string(r.y0) + ")-(" +
                                  std::to_string(r.x1) + "," + std::to_string(r.y1) + ") of '" + painting_id +
                                  "' lies outside the " + std::to_string(width) + "x" + std::to_string(height) + " image");
        }
        mine.push_back(r);
    }
    std::vector<PatchCoord> out;
    if (mine.empty()) return out;
    const std::int64_t patch_area = static_cast<std::int64_t>(size) * size;
    for (const PatchCoord& c : patch_grid(width, height, size, stride)) {
        if (2 * union_area_within(mine, c.x, c.y, c.x + size, c.y + size) >= patch_area) out.push_back(c);
    }
    return out;
}

namespace {

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i + j) / 2.0) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

void check_nonempty(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw UsageError("Mann-Whitney U needs two non-empty samples");
}

double clamp_p(double p) { return std::clamp(p, std::numeric_limits<double>::min(), 1.0); }

}  // namespace

double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
    check_nonempty(a, b);
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    const std::size_t n = pooled.size();
    const std::size_t na = a.size();
    const double nanb = static_cast<double>(na * b.size());
    const double offset = static_cast<double>(na * (na + 1)) / 2.0;

    double combos = 1.0;
    for (std::size_t i = 0; i < na; ++i) combos = combos * static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (combos > 5e7) throw UsageError("exact Mann-Whitney enumeration too large (" + std::to_string(combos) + " assignments)");

    const double r_obs = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
    const double u_obs_a = r_obs - offset;
    const double u_obs = std::min(u_obs_a, nanb - u_obs_a);

    std::vector<std::size_t> idx(na);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::uint64_t total = 0;
    std::uint64_t extreme = 0;
    while (true) {
        double r = 0.0;
        for (std::size_t i : idx) r += ranks[i];
        const double ua = r - offset;
        if (std::min(ua, nanb - ua) <= u_obs + 1e-9) ++extreme;
        ++total;
        // Next combination in lexicographic order.
        std::size_t k = na;
        while (k > 0 && idx[k - 1] == n - na + k - 1) --k;
        if (k == 0) break;
        ++idx[k - 1];
        for (std::size_t j = k; j < na; ++j) idx[j] = idx[j - 1] + 1;
    }
    return clamp_p(static_cast<double>(extreme) / static_cast<double>(total));
}

double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
    check_nonempty(a, b);
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const double n = na + nb;
    const double ua = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0) -
                      na * (na + 1.0) / 2.0;

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const auto t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double mu = na * nb / 2.0;
    const double var = n > 1.0 ? na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0))) : 0.0;
    if (!(var > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(ua - mu) - 0.5) / std::sqrt(var);
    return clamp_p(std::erfc(z / std::sqrt(2.0)));
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    check_nonempty(a, b);
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    const auto na = static_cast<double>(a.size());
    const double ua = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0) -
                      na * (na + 1.0) / 2.0;
    MannWhitneyResult r;
    r.u = std::min(ua, na * static_cast<double>(b.size()) - ua);
    r.p_normal = mann_whitney_normal_p(a, b);
    r.exact = pooled.size() <= kExactEnumerationLimit;
    try {
        r.p_exact = mann_whitney_exact_p(a, b);
    } catch (const UsageError&) {
        r.p_exact = r.p_normal;
    }
    r.p = r.exact ? r.p_exact : r.p_normal;
    return r;
}

nlohmann::json to_json(const EntropyStats& s) {
    nlohmann::json medians = nlohmann::json::array();
    for (const auto& [id, m] : s.painting_medians) medians.push_back({{"painting_id", id}, {"median", m}});
    return {{"n_patches", s.n_patches},
            {"median", s.median},
            {"mean", s.mean},
            {"std", s.std},
            {"iqr", {s.q25, s.q75}},
            {"tail_fractions", {{"gt_0.5", s.tail_fractions[0]}, {"gt_0.7", s.tail_fractions[1]}, {"gt_0.9", s.tail_fractions[2]}}},
            {"painting_medians", medians},
            {"mean_of_medians", s.mean_of_medians},
            {"std_of_medians", s.std_of_medians}};
}

nlohmann::json to_json(const MannWhitneyResult& r) {
    return {{"u", r.u}, {"p", r.p}, {"exact", r.exact}, {"p_exact", r.p_exact}, {"p_normal", r.p_normal}};
}

}  // namespace brushtrace
