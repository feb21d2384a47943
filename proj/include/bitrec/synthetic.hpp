#pragma once

// Planted-code synthetic data: random user/item hash codes, ratings
// g(phd(z_u, z_i)) plus Gaussian noise clamped to the rating bounds. Lets
// every pipeline test run without external downloads, and gives recovery
// tests a known ground truth.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"
#include "bitrec/data.hpp"
#include "bitrec/vhmodel.hpp"

namespace bitrec {

struct SyntheticSpec {
    uint32_t users = 100;
    uint32_t items = 150;
    uint32_t bits = 8;
    double noise_sigma = 0.1;
    RatingBounds bounds{1.0, 5.0};
    double density = 1.0;  // fraction of user-item pairs rated
    uint64_t seed = 7;
};

struct SyntheticData {
    InteractionTable table;
    std::vector<HashCode> user_codes;
    std::vector<HashCode> item_codes;
};

inline HashCode random_code(uint32_t bits, Rng& rng) {
    std::vector<uint64_t> words((bits + 63) / 64);
    for (uint64_t& w : words) w = rng();
    return HashCode(bits, std::move(words));  // ctor masks the tail word
}

inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.users < 1 || spec.items < 1) throw InvalidInput("need at least one user and item");
    if (spec.density <= 0.0 || spec.density > 1.0) throw InvalidInput("density must be in (0, 1]");

    SyntheticData data;
    Rng code_rng(derive_seed(spec.seed, 10));
    Rng noise_rng(derive_seed(spec.seed, 11));
    Rng pick_rng(derive_seed(spec.seed, 12));

    for (uint32_t u = 0; u < spec.users; ++u) data.user_codes.push_back(random_code(spec.bits, code_rng));
    for (uint32_t i = 0; i < spec.items; ++i) data.item_codes.push_back(random_code(spec.bits, code_rng));

    const AffineRatingMap g(spec.bounds.min, spec.bounds.max, spec.bits);
    int64_t ts = 0;
    for (uint32_t u = 0; u < spec.users; ++u) {
        for (uint32_t i = 0; i < spec.items; ++i) {
            if (spec.density < 1.0 && uniform01(pick_rng) >= spec.density) continue;
            double rating = g(static_cast<double>(phd(data.user_codes[u], data.item_codes[i])));
            if (spec.noise_sigma > 0.0) rating += spec.noise_sigma * normal01(noise_rng);
            rating = std::clamp(rating, spec.bounds.min, spec.bounds.max);
            data.table.interactions.push_back({u, i, rating, ts++});
        }
    }
    for (uint32_t u = 0; u < spec.users; ++u) data.table.user_original_ids.push_back(u);
    for (uint32_t i = 0; i < spec.items; ++i) data.table.item_original_ids.push_back(i);
    return data;
}

}  // namespace bitrec
