#pragma once

// Ranking-quality metrics: NDCG@k with 2^rel gains and log2 discounts,
// reciprocal rank of the first maximally rated item, per-user evaluation
// over the test split, and the moving-average bucket curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"
#include "bitrec/data.hpp"

namespace bitrec {

// DCG@k = sum_{i=1..k} (2^rel_i - 1) / log2(i + 1), 1-based positions.
inline double dcg_at_k(std::span<const double> ranked_rels, std::size_t k) {
    double dcg = 0.0;
    const std::size_t n = std::min(k, ranked_rels.size());
    for (std::size_t i = 0; i < n; ++i)
        dcg += (std::exp2(ranked_rels[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    return dcg;
}

// NDCG@k = DCG@k / DCG@k of the descending-sorted ideal ordering.
// An all-zero-relevance list has ideal DCG 0 and scores 1 by convention
// (no wrong order is possible).
inline double ndcg_at_k(std::span<const double> ranked_rels, std::size_t k) {
    if (k < 1) throw InvalidInput("ndcg_at_k requires k >= 1");
    std::vector<double> ideal(ranked_rels.begin(), ranked_rels.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double ideal_dcg = dcg_at_k(ideal, k);
    if (ideal_dcg == 0.0) return 1.0;
    return dcg_at_k(ranked_rels, k) / ideal_dcg;
}

// RR = 1 / (1-based position of the first item whose rating equals the
// user's maximum).
inline double reciprocal_rank(std::span<const double> ranked_rels) {
    if (ranked_rels.empty()) throw InvalidInput("reciprocal_rank of an empty list");
    const double best = *std::max_element(ranked_rels.begin(), ranked_rels.end());
    for (std::size_t i = 0; i < ranked_rels.size(); ++i)
        if (ranked_rels[i] == best) return 1.0 / static_cast<double>(i + 1);
    return 0.0;  // unreachable
}

struct PerUserMetrics {
    uint32_t user = 0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    double rr = 0.0;
};

struct EvalReport {
    std::vector<PerUserMetrics> per_user;  // users with nonempty candidate sets only
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    double mrr = 0.0;
    std::size_t users_evaluated = 0;
    std::size_t zero_relevance_users = 0;  // scored 1 by the ideal-DCG-0 convention
    std::string model_id;
    std::string scorer;
    uint32_t bits = 0;
    uint64_t seed = 0;
};

enum class ScorerKind { phd, hamming, inner_product };

inline std::string scorer_name(ScorerKind k) {
    switch (k) {
        case ScorerKind::phd: return "phd";
        case ScorerKind::hamming: return "hamming";
        default: return "inner-product";
    }
}

// Generic per-user evaluation: rank each user's interactions in `split` by
// `score` (ascending dissimilarity or descending relevance), tie-break by
// ascending item id, then compute NDCG@5/10 and RR against the ratings.
// Users with empty candidate sets are skipped, not scored 0.
template <typename ScoreFn>
EvalReport evaluate_with(ScoreFn&& score, bool ascending, const RatingsDataset& ds,
                         Split split = Split::test) {
    EvalReport report;
    const auto by_user = ds.index_by_user(split);
    const auto& rows = ds.split(split);

    std::vector<std::tuple<double, uint32_t, double>> ranked;  // (score key, item, rating)
    std::vector<double> rels;
    for (uint32_t u = 0; u < ds.user_count; ++u) {
        const auto& idxs = by_user[u];
        if (idxs.empty()) continue;
        ranked.clear();
        for (uint32_t idx : idxs) {
            double s = score(u, rows[idx].item);
            ranked.emplace_back(ascending ? s : -s, rows[idx].item, rows[idx].rating);
        }
        std::sort(ranked.begin(), ranked.end());
        rels.clear();
        for (const auto& [s, item, rating] : ranked) rels.push_back(rating);
        if (*std::max_element(rels.begin(), rels.end()) == 0.0) ++report.zero_relevance_users;

        PerUserMetrics m;
        m.user = u;
        m.ndcg5 = ndcg_at_k(rels, 5);
        m.ndcg10 = ndcg_at_k(rels, 10);
        m.rr = reciprocal_rank(rels);
        report.per_user.push_back(m);
    }

    report.users_evaluated = report.per_user.size();
    if (!report.per_user.empty()) {
        for (const PerUserMetrics& m : report.per_user) {
            report.ndcg5 += m.ndcg5;
            report.ndcg10 += m.ndcg10;
            report.mrr += m.rr;
        }
        report.ndcg5 /= static_cast<double>(report.users_evaluated);
        report.ndcg10 /= static_cast<double>(report.users_evaluated);
        report.mrr /= static_cast<double>(report.users_evaluated);
    }
    return report;
}

// Hash-code evaluation with the phd or hamming scorer.
inline EvalReport evaluate_codes(const std::vector<HashCode>& user_codes,
                                 const std::vector<HashCode>& item_codes,
                                 const RatingsDataset& ds, ScorerKind kind,
                                 Split split = Split::test) {
    if (kind == ScorerKind::inner_product)
        throw InvalidInput("inner-product scorer needs real-valued vectors");
    if (user_codes.size() < ds.user_count)
        throw EvalError("missing hash code for user " + std::to_string(user_codes.size()));
    if (item_codes.size() < ds.item_count)
        throw EvalError("missing hash code for item " + std::to_string(item_codes.size()));
    auto score = [&](uint32_t u, uint32_t i) -> double {
        return kind == ScorerKind::phd
                   ? static_cast<double>(phd(user_codes[u], item_codes[i]))
                   : static_cast<double>(hamming(user_codes[u], item_codes[i]));
    };
    EvalReport r = evaluate_with(score, /*ascending=*/true, ds, split);
    r.scorer = scorer_name(kind);
    if (!user_codes.empty()) r.bits = user_codes.front().bit_length();
    return r;
}

// Inner-product evaluation over real-valued user/item vectors (row-major,
// dim floats per entity); descending score.
inline EvalReport evaluate_inner_product(std::span<const double> user_vecs,
                                         std::span<const double> item_vecs, std::size_t dim,
                                         const RatingsDataset& ds, Split split = Split::test) {
    if (user_vecs.size() < static_cast<std::size_t>(ds.user_count) * dim)
        throw EvalError("missing vector for user " + std::to_string(user_vecs.size() / dim));
    if (item_vecs.size() < static_cast<std::size_t>(ds.item_count) * dim)
        throw EvalError("missing vector for item " + std::to_string(item_vecs.size() / dim));
    auto score = [&](uint32_t u, uint32_t i) -> double {
        const double* p = user_vecs.data() + static_cast<std::size_t>(u) * dim;
        const double* q = item_vecs.data() + static_cast<std::size_t>(i) * dim;
        double dot = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dot += p[j] * q[j];
        return dot;
    };
    EvalReport r = evaluate_with(score, /*ascending=*/false, ds, split);
    r.scorer = scorer_name(ScorerKind::inner_product);
    r.bits = static_cast<uint32_t>(dim);
    return r;
}

// Full-catalog variant: every item is ranked for every user with a test
// interaction; unrated items carry zero relevance.
template <typename ScoreFn>
EvalReport evaluate_full_catalog(ScoreFn&& score, bool ascending, const RatingsDataset& ds,
                                 Split split = Split::test) {
    EvalReport report;
    const auto by_user = ds.index_by_user(split);
    const auto& rows = ds.split(split);

    std::vector<std::tuple<double, uint32_t>> ranked;
    std::vector<double> rels, rating_of(ds.item_count, 0.0);
    for (uint32_t u = 0; u < ds.user_count; ++u) {
        const auto& idxs = by_user[u];
        if (idxs.empty()) continue;
        std::fill(rating_of.begin(), rating_of.end(), 0.0);
        for (uint32_t idx : idxs) rating_of[rows[idx].item] = rows[idx].rating;
        ranked.clear();
        for (uint32_t i = 0; i < ds.item_count; ++i) {
            const double s = score(u, i);
            ranked.emplace_back(ascending ? s : -s, i);
        }
        std::sort(ranked.begin(), ranked.end());
        rels.clear();
        for (const auto& [s, item] : ranked) rels.push_back(rating_of[item]);
        if (*std::max_element(rels.begin(), rels.end()) == 0.0) ++report.zero_relevance_users;

        PerUserMetrics m;
        m.user = u;
        m.ndcg5 = ndcg_at_k(rels, 5);
        m.ndcg10 = ndcg_at_k(rels, 10);
        m.rr = reciprocal_rank(rels);
        report.per_user.push_back(m);
    }
    report.users_evaluated = report.per_user.size();
    if (!report.per_user.empty()) {
        for (const PerUserMetrics& m : report.per_user) {
            report.ndcg5 += m.ndcg5;
            report.ndcg10 += m.ndcg10;
            report.mrr += m.rr;
        }
        report.ndcg5 /= static_cast<double>(report.users_evaluated);
        report.ndcg10 /= static_cast<double>(report.users_evaluated);
        report.mrr /= static_cast<double>(report.users_evaluated);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Bucket curves: users sorted ascending by a key; y = mean metric over the
// `window` nearest users by sorted position (the window shifts at the edges
// so it always covers min(window, n) users).
// ---------------------------------------------------------------------------
inline std::vector<std::pair<double, double>> bucket_curve(std::span<const double> values,
                                                           std::span<const double> keys,
                                                           std::size_t window = 500) {
    if (values.size() != keys.size()) throw InvalidInput("values/keys size mismatch");
    const std::size_t n = values.size();
    if (n < 2) throw InvalidInput("bucket_curve needs at least 2 users");
    if (window < 1) throw InvalidInput("window must be >= 1");

    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (keys[a] != keys[b]) return keys[a] < keys[b];
        return a < b;
    });

    const std::size_t w = std::min(window, n);
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t r = 0; r < n; ++r) prefix[r + 1] = prefix[r] + values[order[r]];

    std::vector<std::pair<double, double>> curve;
    curve.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t lo = r >= (w - 1) / 2 ? r - (w - 1) / 2 : 0;
        lo = std::min(lo, n - w);
        const double mean = (prefix[lo + w] - prefix[lo]) / static_cast<double>(w);
        curve.emplace_back(keys[order[r]], mean);
    }
    return curve;
}

// Item popularity: fraction of users who have rated the item (over all
// three splits; dedup guarantees one rating per pair).
inline std::vector<double> item_popularity(const RatingsDataset& ds) {
    std::vector<std::size_t> raters(ds.item_count, 0);
    for (Split s : {Split::train, Split::validation, Split::test})
        for (const Interaction& r : ds.split(s)) ++raters[r.item];
    std::vector<double> pop(ds.item_count, 0.0);
    for (uint32_t i = 0; i < ds.item_count; ++i)
        pop[i] = ds.user_count ? static_cast<double>(raters[i]) / ds.user_count : 0.0;
    return pop;
}

// Ordering key for the popularity curve: mean popularity over the user's
// training items.
inline std::vector<double> user_mean_train_popularity(const RatingsDataset& ds) {
    const std::vector<double> pop = item_popularity(ds);
    std::vector<double> sum(ds.user_count, 0.0);
    std::vector<std::size_t> cnt(ds.user_count, 0);
    for (const Interaction& r : ds.train) {
        sum[r.user] += pop[r.item];
        ++cnt[r.user];
    }
    for (uint32_t u = 0; u < ds.user_count; ++u)
        if (cnt[u]) sum[u] /= static_cast<double>(cnt[u]);
    return sum;
}

// Ordering key for the activity curve: number of rated items per user.
inline std::vector<double> user_rated_counts(const RatingsDataset& ds) {
    std::vector<double> cnt(ds.user_count, 0.0);
    for (Split s : {Split::train, Split::validation, Split::test})
        for (const Interaction& r : ds.split(s)) cnt[r.user] += 1.0;
    return cnt;
}

}  // namespace bitrec
