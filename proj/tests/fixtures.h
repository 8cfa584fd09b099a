#pragma once

#include <string>
#include <vector>

#include "brushtrace/patches.h"
#include "brushtrace/rng.h"

namespace brushtrace::testing {

// Separable toy patches: human = vertical stripes, robot = horizontal
// stripes, blank = white canvas with sparse specks. Stripe period and phase
// vary per patch.
inline PatchRecord stripe_patch(const std::string& painting_id, ClassLabel label, int index, int size, Rng& rng) {
    PatchRecord p;
    p.painting_id = painting_id;
    p.x = index * size;
    p.y = 0;
    p.size = size;
    p.label = label;
    p.pixels.assign(static_cast<std::size_t>(size) * size, 1.0f);
    const int period = 4 + static_cast<int>(rng.below(5));
    const int phase = static_cast<int>(rng.below(static_cast<std::size_t>(period)));
    const float ink = static_cast<float>(rng.uniform(0.1, 0.5));
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            float& v = p.pixels[static_cast<std::size_t>(y) * size + x];
            if (label == ClassLabel::Human && (x + phase) % period < period / 2) v = ink;
            if (label == ClassLabel::Robot && (y + phase) % period < period / 2) v = ink;
            if (label == ClassLabel::Blank && rng.bernoulli(0.01)) v = ink;
        }
    }
    return p;
}

// `per_class` patches of each listed class, all from one painting.
inline std::vector<PatchRecord> stripe_painting(const std::string& painting_id, const std::vector<ClassLabel>& classes,
                                                int per_class, int size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PatchRecord> out;
    int index = 0;
    for (int k = 0; k < per_class; ++k)
        for (ClassLabel c : classes) out.push_back(stripe_patch(painting_id, c, index++, size, rng));
    return out;
}

}  // namespace brushtrace::testing
