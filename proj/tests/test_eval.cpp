#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/eval.hpp"
#include "bitrec/synthetic.hpp"

using namespace bitrec;

TEST_CASE("ndcg hand-computed oracles") {
    // DCG([3,2], 2) = 7/log2(2) + 3/log2(3) = 8.89279...; ideal order -> 1.
    const std::vector<double> rels_32{3.0, 2.0};
    CHECK(dcg_at_k(rels_32, 2) == Approx(7.0 + 3.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(ndcg_at_k(rels_32, 2) == Approx(1.0));

    const std::vector<double> rels_23{2.0, 3.0};
    const double dcg = 3.0 + 7.0 / std::log2(3.0);
    const double ideal = 7.0 + 3.0 / std::log2(3.0);
    CHECK(ndcg_at_k(rels_23, 2) == Approx(dcg / ideal).epsilon(1e-12));
    CHECK(ndcg_at_k(rels_23, 2) == Approx(0.83399).margin(1e-5));

    // Any perfectly ordered list scores 1.
    const std::vector<double> sorted{5, 4, 4, 3, 1, 0};
    CHECK(ndcg_at_k(sorted, 6) == Approx(1.0));

    // All-zero relevance: 1 by convention.
    const std::vector<double> zero{0, 0, 0};
    CHECK(ndcg_at_k(zero, 3) == 1.0);

    CHECK_THROWS_AS(ndcg_at_k(sorted, 0), InvalidInput);
}

TEST_CASE("reciprocal rank of the first maximally rated item") {
    const std::vector<double> top{5, 3, 1};
    CHECK(reciprocal_rank(top) == 1.0);

    const std::vector<double> third{3, 4, 5, 5};
    CHECK(reciprocal_rank(third) == Approx(1.0 / 3.0));

    const std::vector<double> all_max{2, 2, 2};
    CHECK(reciprocal_rank(all_max) == 1.0);

    CHECK_THROWS_AS(reciprocal_rank(std::vector<double>{}), InvalidInput);
}

TEST_CASE("ndcg is invariant under strictly increasing score transforms") {
    RatingsDataset ds;
    ds.user_count = 3;
    ds.item_count = 6;
    Rng rng(11);
    for (uint32_t u = 0; u < 3; ++u)
        for (uint32_t i = 0; i < 6; ++i)
            ds.test.push_back({u, i, 1.0 + static_cast<double>(uniform_below(rng, 5)), 0});

    std::vector<double> raw(3 * 6);
    for (double& s : raw) s = uniform01(rng) * 4.0 - 2.0;
    auto score = [&](uint32_t u, uint32_t i) { return raw[u * 6 + i]; };
    auto warped = [&](uint32_t u, uint32_t i) { return std::exp(3.0 * raw[u * 6 + i]) + 7.0; };

    const EvalReport a = evaluate_with(score, false, ds);
    const EvalReport b = evaluate_with(warped, false, ds);
    REQUIRE(a.per_user.size() == b.per_user.size());
    for (std::size_t i = 0; i < a.per_user.size(); ++i) {
        CHECK(a.per_user[i].ndcg10 == Approx(b.per_user[i].ndcg10).epsilon(1e-12));
        CHECK(a.per_user[i].rr == Approx(b.per_user[i].rr).epsilon(1e-12));
    }
}

TEST_CASE("equal scores rank by ascending item id") {
    RatingsDataset ds;
    ds.user_count = 1;
    ds.item_count = 4;
    // Ratings increase with item id; a constant scorer must rank 0,1,2,3.
    for (uint32_t i = 0; i < 4; ++i) ds.test.push_back({0, i, 1.0 + i, 0});
    auto constant = [](uint32_t, uint32_t) { return 0.5; };
    const EvalReport r = evaluate_with(constant, true, ds);
    REQUIRE(r.users_evaluated == 1);
    // Worst ordering for RR: best item (rating 4) sits last.
    CHECK(r.per_user[0].rr == Approx(0.25));
}

TEST_CASE("planted perfect codes give perfect metrics") {
    // Two users, opposite preferences; ratings equal to g(phd) so the phd
    // ranking matches the rating ranking exactly.
    const uint32_t m = 8;
    SyntheticSpec spec;
    spec.users = 2;
    spec.items = 12;
    spec.bits = m;
    spec.noise_sigma = 0.0;
    spec.seed = 3;
    const SyntheticData data = make_synthetic(spec);

    RatingsDataset ds;
    ds.user_count = spec.users;
    ds.item_count = spec.items;
    ds.test = data.table.interactions;
    const EvalReport r = evaluate_codes(data.user_codes, data.item_codes, ds, ScorerKind::phd);
    CHECK(r.ndcg5 == Approx(1.0));
    CHECK(r.ndcg10 == Approx(1.0));
    CHECK(r.mrr == Approx(1.0));
}

TEST_CASE("phd scorer with all-ones user codes equals the hamming scorer, report for report") {
    Rng rng(21);
    const uint32_t users = 5, items = 40;
    std::vector<HashCode> ones(users, HashCode(64, {~uint64_t{0}}));
    std::vector<HashCode> item_codes;
    for (uint32_t i = 0; i < items; ++i) item_codes.push_back(HashCode(64, {rng()}));

    RatingsDataset ds;
    ds.user_count = users;
    ds.item_count = items;
    for (uint32_t u = 0; u < users; ++u)
        for (uint32_t i = 0; i < items; ++i)
            ds.test.push_back({u, i, 1.0 + static_cast<double>(uniform_below(rng, 5)), 0});

    const EvalReport a = evaluate_codes(ones, item_codes, ds, ScorerKind::phd);
    const EvalReport b = evaluate_codes(ones, item_codes, ds, ScorerKind::hamming);
    REQUIRE(a.per_user.size() == b.per_user.size());
    CHECK(a.ndcg5 == b.ndcg5);
    CHECK(a.ndcg10 == b.ndcg10);
    CHECK(a.mrr == b.mrr);
    for (std::size_t i = 0; i < a.per_user.size(); ++i) {
        CHECK(a.per_user[i].ndcg5 == b.per_user[i].ndcg5);
        CHECK(a.per_user[i].ndcg10 == b.per_user[i].ndcg10);
        CHECK(a.per_user[i].rr == b.per_user[i].rr);
    }
}

TEST_CASE("evaluation requires representations for all entities") {
    RatingsDataset ds;
    ds.user_count = 3;
    ds.item_count = 2;
    ds.test.push_back({2, 1, 4.0, 0});
    std::vector<HashCode> two_users(2, HashCode(8));
    std::vector<HashCode> items(2, HashCode(8));
    CHECK_THROWS_AS(evaluate_codes(two_users, items, ds, ScorerKind::phd), EvalError);
}

TEST_CASE("users with empty test sets are skipped") {
    RatingsDataset ds;
    ds.user_count = 4;
    ds.item_count = 3;
    ds.test.push_back({1, 0, 3.0, 0});
    ds.test.push_back({1, 1, 4.0, 0});
    auto score = [](uint32_t, uint32_t i) { return static_cast<double>(i); };
    const EvalReport r = evaluate_with(score, true, ds);
    CHECK(r.users_evaluated == 1);
    CHECK(r.per_user[0].user == 1);
}

TEST_CASE("bucket curves") {
    SECTION("constant metric gives a constant curve") {
        std::vector<double> values(50, 0.7), keys(50);
        for (std::size_t i = 0; i < 50; ++i) keys[i] = static_cast<double>(i);
        for (const auto& [x, y] : bucket_curve(values, keys, 7)) CHECK(y == Approx(0.7));
    }

    SECTION("window >= n averages everything") {
        Rng rng(5);
        std::vector<double> values(20), keys(20);
        double mean = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            values[i] = uniform01(rng);
            keys[i] = uniform01(rng);
            mean += values[i];
        }
        mean /= 20.0;
        for (const auto& [x, y] : bucket_curve(values, keys, 500))
            CHECK(y == Approx(mean).epsilon(1e-12));
    }

    SECTION("x values are the sorted keys") {
        std::vector<double> values{1, 2, 3, 4};
        std::vector<double> keys{0.4, 0.1, 0.3, 0.2};
        const auto curve = bucket_curve(values, keys, 2);
        REQUIRE(curve.size() == 4);
        CHECK(curve[0].first == 0.1);
        CHECK(curve[3].first == 0.4);
        // First point averages the two lowest-key users: values 2 and 4.
        CHECK(curve[0].second == Approx(3.0));
    }

    SECTION("fewer than 2 users is an error") {
        std::vector<double> one{0.5};
        CHECK_THROWS_AS(bucket_curve(one, one, 10), InvalidInput);
    }
}

TEST_CASE("item popularity is the fraction of raters") {
    RatingsDataset ds;
    ds.user_count = 200;
    ds.item_count = 2;
    for (uint32_t u = 0; u < 50; ++u) ds.train.push_back({u, 0, 3.0, 0});
    for (uint32_t u = 0; u < 10; ++u) ds.test.push_back({u, 1, 3.0, 0});
    const std::vector<double> pop = item_popularity(ds);
    CHECK(pop[0] == Approx(0.25));
    CHECK(pop[1] == Approx(0.05));

    const std::vector<double> upop = user_mean_train_popularity(ds);
    CHECK(upop[0] == Approx(0.25));  // user 0's only train item is item 0

    const std::vector<double> counts = user_rated_counts(ds);
    CHECK(counts[0] == Approx(2.0));  // one train + one test interaction
    CHECK(counts[60] == Approx(0.0));
}
