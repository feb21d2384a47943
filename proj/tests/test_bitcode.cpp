#include <catch2/catch.hpp>

#include <algorithm>
#include <vector>

#include "bitrec/bitcode.hpp"
#include "bitrec/common.hpp"

using namespace bitrec;

namespace {

// Independent scalar references: walk the bits one by one.
uint32_t hamming_ref(const HashCode& a, const HashCode& b) {
    uint32_t d = 0;
    for (uint32_t j = 0; j < a.bit_length(); ++j) d += a.get_bit(j) != b.get_bit(j);
    return d;
}

uint32_t phd_ref(const HashCode& u, const HashCode& i) {
    uint32_t d = 0;
    for (uint32_t j = 0; j < u.bit_length(); ++j) d += u.get_bit(j) && !i.get_bit(j);
    return d;
}

HashCode code_from_byte(uint8_t v) {
    HashCode c(8);
    for (uint32_t j = 0; j < 8; ++j)
        if ((v >> j) & 1) c.set_bit(j, true);
    return c;
}

}  // namespace

TEST_CASE("pack_bits maps +1 to set bits, bit 0 first") {
    const std::vector<int> all_ones{1, 1, 1, 1};
    CHECK(pack_bits(all_ones).to_string() == "1111");

    const std::vector<int> all_neg{-1, -1, -1, -1};
    CHECK(pack_bits(all_neg).to_string() == "0000");

    const std::vector<int> alt{1, -1, 1, -1};
    CHECK(pack_bits(alt).to_string() == "1010");

    const std::vector<int> bad{1, 0, -1};
    CHECK_THROWS_AS(pack_bits(bad), InvalidInput);
    CHECK_THROWS_AS(pack_bits(std::vector<int>{}), InvalidInput);
}

TEST_CASE("hamming distance") {
    const HashCode a = HashCode::from_string("10110100");
    const HashCode b = HashCode::from_string("10011100");
    CHECK(hamming(a, a) == 0);
    CHECK(hamming(a, b) == 2);
    CHECK(hamming(HashCode::from_string("1111"), HashCode::from_string("0000")) == 4);
    CHECK_THROWS_AS(hamming(a, HashCode::from_string("1111")), DimensionError);
}

TEST_CASE("projection is a masking AND") {
    const HashCode u = HashCode::from_string("1100");
    const HashCode i = HashCode::from_string("1010");
    CHECK(project(u, i).to_string() == "1000");
    CHECK(project(HashCode::from_string("0000"), i).to_string() == "0000");

    // Idempotence: proj_u(proj_u(i)) = proj_u(i).
    Rng rng(123);
    for (int t = 0; t < 200; ++t) {
        HashCode x(70, {rng(), rng()});
        HashCode y(70, {rng(), rng()});
        const HashCode once = project(x, y);
        CHECK(project(x, once) == once);
    }
}

TEST_CASE("projection is linear over XOR") {
    Rng rng(321);
    for (int t = 0; t < 200; ++t) {
        HashCode u(100, {rng(), rng()});
        HashCode a(100, {rng(), rng()});
        HashCode b(100, {rng(), rng()});
        std::vector<uint64_t> xw(a.words().begin(), a.words().end());
        for (std::size_t w = 0; w < xw.size(); ++w) xw[w] ^= b.words()[w];
        const HashCode a_xor_b(100, xw);

        const HashCode lhs = project(u, a_xor_b);
        const HashCode pa = project(u, a), pb = project(u, b);
        std::vector<uint64_t> rw(pa.words().begin(), pa.words().end());
        for (std::size_t w = 0; w < rw.size(); ++w) rw[w] ^= pb.words()[w];
        CHECK(lhs == HashCode(100, rw));
    }
}

TEST_CASE("phd hand examples, asymmetry and the all-ones reduction") {
    const HashCode u = HashCode::from_string("1110");
    const HashCode i = HashCode::from_string("1000");
    CHECK(phd(u, i) == 2);
    CHECK(phd(i, u) == 0);  // asymmetric

    const HashCode zeros = HashCode::from_string("0000");
    CHECK(phd(zeros, u) == 0);
    CHECK(phd(zeros, i) == 0);

    const HashCode ones = HashCode::from_string("1111");
    const HashCode j = HashCode::from_string("1010");
    CHECK(phd(ones, j) == 2);
    CHECK(phd(ones, j) == hamming(ones, j));

    const HashCode longer = HashCode::from_string("11110000");
    CHECK_THROWS_AS(phd(ones, longer), DimensionError);
    CHECK_THROWS_AS(project(ones, longer), DimensionError);
    CHECK_THROWS_AS(phd_fast(ones, longer), DimensionError);
}

TEST_CASE("phd equals phd_fast over negated codes and the AND-NOT oracle, m=8 exhaustive") {
    for (int a = 0; a < 256; ++a) {
        const HashCode u = code_from_byte(static_cast<uint8_t>(a));
        for (int b = 0; b < 256; ++b) {
            const HashCode i = code_from_byte(static_cast<uint8_t>(b));
            const uint32_t expected = phd_ref(u, i);
            CHECK(phd(u, i) == expected);
            CHECK(phd_fast(u, negate(i)) == expected);
        }
    }
}

TEST_CASE("phd bounds and random-word agreement with references") {
    Rng rng(777);
    for (int t = 0; t < 5000; ++t) {
        HashCode u(64, {rng()});
        HashCode i(64, {rng()});
        const uint32_t d = phd(u, i);
        CHECK(d == phd_ref(u, i));
        CHECK(d == phd_fast(u, negate(i)));
        CHECK(d <= std::min(u.popcount(), hamming(u, i)));
        CHECK(hamming(u, i) == hamming_ref(u, i));
        CHECK(hamming(u, i) == hamming(i, u));
    }

    // An asymmetric witness exists among a few random pairs.
    bool witness = false;
    for (int t = 0; t < 100 && !witness; ++t) {
        HashCode u(64, {rng()});
        HashCode i(64, {rng()});
        witness = phd(u, i) != phd(i, u);
    }
    CHECK(witness);
}

TEST_CASE("negate flips the first m bits only") {
    const HashCode c = HashCode::from_string("1010");
    CHECK(negate(c).to_string() == "0101");
    CHECK(negate(negate(c)) == c);
    CHECK(negate(HashCode::from_string("1111")).to_string() == "0000");

    // Non-word-multiple m: high bits of the last word stay zero.
    HashCode odd(70);
    odd.set_bit(69, true);
    const HashCode n = negate(odd);
    CHECK(n.popcount() == 69);
    CHECK(n.words()[1] >> 6 == 0);
    CHECK(negate(n) == odd);
}

TEST_CASE("phd_fast examples") {
    CHECK(phd_fast(HashCode::from_string("1111"), HashCode::from_string("0101")) == 2);
    Rng rng(9);
    HashCode any_neg(64, {rng()});
    HashCode zeros(64);
    CHECK(phd_fast(zeros, any_neg) == 0);
}

TEST_CASE("rank_items: counting sort with index tie-break") {
    SECTION("identical items rank by ascending index") {
        std::vector<HashCode> items(17, HashCode::from_string("10110100"));
        const auto store = NegatedItemStore::from_item_codes(items);
        const auto top = rank_items(HashCode::from_string("11111111"), store, 17);
        REQUIRE(top.size() == 17);
        for (uint32_t r = 0; r < top.size(); ++r) CHECK(top[r].first == r);
    }

    SECTION("matches a comparison sort with the same tie-break on 1000 random codes") {
        Rng rng(42);
        std::vector<HashCode> items;
        for (int t = 0; t < 1000; ++t) items.push_back(HashCode(64, {rng()}));
        const HashCode user(64, {rng()});
        const auto store = NegatedItemStore::from_item_codes(items);

        const auto got = rank_items(user, store, 1000);

        std::vector<std::pair<uint32_t, uint32_t>> expected;
        for (uint32_t i = 0; i < items.size(); ++i)
            expected.emplace_back(i, phd(user, items[i]));
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second < b.second;
            return a.first < b.first;
        });
        REQUIRE(got.size() == expected.size());
        for (std::size_t r = 0; r < got.size(); ++r) {
            CHECK(got[r].first == expected[r].first);
            CHECK(got[r].second == expected[r].second);
        }

        // Permutation of the input.
        std::vector<uint32_t> idx;
        for (const auto& [i, d] : got) idx.push_back(i);
        std::sort(idx.begin(), idx.end());
        for (uint32_t i = 0; i < idx.size(); ++i) CHECK(idx[i] == i);
    }

    SECTION("all-ones user reduces to ascending Hamming order") {
        Rng rng(77);
        std::vector<HashCode> items;
        for (int t = 0; t < 300; ++t) items.push_back(HashCode(64, {rng()}));
        HashCode ones(64, {~uint64_t{0}});
        const auto store = NegatedItemStore::from_item_codes(items);
        const auto top = rank_items(ones, store, 300);
        for (std::size_t r = 0; r + 1 < top.size(); ++r) {
            const uint32_t ha = hamming(ones, items[top[r].first]);
            const uint32_t hb = hamming(ones, items[top[r + 1].first]);
            CHECK(ha <= hb);
            CHECK(top[r].second == ha);
        }
    }

    SECTION("k behaviour and errors") {
        std::vector<HashCode> items{HashCode::from_string("1010")};
        const auto store = NegatedItemStore::from_item_codes(items);
        CHECK(rank_items(HashCode::from_string("1111"), store, 10).size() == 1);
        CHECK_THROWS_AS(rank_items(HashCode::from_string("1111"), store, 0), InvalidInput);
        CHECK(rank_items(HashCode::from_string("1111"), NegatedItemStore{}, 5).empty());
    }
}

TEST_CASE("negated store holds complements") {
    Rng rng(5);
    std::vector<HashCode> items;
    for (int t = 0; t < 50; ++t) items.push_back(HashCode(40, {rng()}));
    const auto store = NegatedItemStore::from_item_codes(items);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const HashCode neg = store.negated_code(i);
        for (uint32_t j = 0; j < 40; ++j) CHECK(neg.get_bit(j) != items[i].get_bit(j));
        CHECK(store.original_code(i) == items[i]);
        CHECK(store.phd_to(HashCode(40, {rng()}), i) <= 40);
    }
}
